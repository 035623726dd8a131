#pragma once

// Gaussian-process RSSI regression baseline: one GP per tower over the
// local plane with a squared-exponential kernel, hyperparameters chosen by
// grid search on the log marginal likelihood, and a localizer that scores
// candidate positions by the Gaussian likelihood of the observed RSSI.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cellsense/estimators.hpp"
#include "cellsense/geo.hpp"
#include "cellsense/trace.hpp"

namespace cellsense {

struct GpHyper {
  double length_scale_m = 200.0;
  double sigma_f_db = 8.0;
  double sigma_n_db = 4.0;

  friend bool operator==(const GpHyper&, const GpHyper&) = default;
};

// zero: plain zero-mean GP on the raw targets.
// empirical: the targets' mean is subtracted before fitting and added back
// on prediction, so far-field predictions revert to the average RSSI.
enum class PriorMean { zero, empirical };

// sigma_f^2 * exp(-|a - b|^2 / (2 l^2))
double kernel(const LocalPoint& a, const LocalPoint& b, const GpHyper& hyper);

struct GpPrediction {
  double mean_dbm = 0.0;
  double variance_db2 = 0.0;
};

class GpModel {
 public:
  std::size_t size() const noexcept { return inputs_.size(); }
  const std::vector<LocalPoint>& inputs() const noexcept { return inputs_; }
  const std::vector<double>& targets() const noexcept { return targets_; }
  const GpHyper& hyper() const noexcept { return hyper_; }
  double prior_mean() const noexcept { return prior_mean_; }

  // Lower-triangular factor L with L L^T = K + sigma_n^2 I.
  const Eigen::MatrixXd& factor() const noexcept { return factor_; }
  // (K + sigma_n^2 I)^-1 (y - prior_mean)
  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  std::vector<double> pivots() const;

  GpPrediction predict(const LocalPoint& x) const;
  // Posterior mean only: O(n) instead of O(n^2).
  double predict_mean(const LocalPoint& x) const;
  double log_marginal_likelihood() const;

 private:
  friend GpModel fit(std::vector<LocalPoint> inputs, std::vector<double> targets,
                     const GpHyper& hyper, PriorMean prior);

  std::vector<LocalPoint> inputs_;
  std::vector<double> targets_;
  GpHyper hyper_;
  double prior_mean_ = 0.0;
  Eigen::ArrayXd xs_;
  Eigen::ArrayXd ys_;
  Eigen::MatrixXd factor_;
  Eigen::VectorXd weights_;
  double log_det_ = 0.0;
  double data_fit_ = 0.0;  // y^T (K + sigma_n^2 I)^-1 y on centred targets
};

// Throws InvalidInput on empty or mismatched inputs, NumericError when the
// covariance cannot be factorized.
GpModel fit(std::vector<LocalPoint> inputs, std::vector<double> targets, const GpHyper& hyper,
            PriorMean prior = PriorMean::empirical);

GpPrediction predict(const GpModel& model, const LocalPoint& x);
double log_marginal_likelihood(const GpModel& model);

inline constexpr double kLengthScaleGridM[] = {50.0, 100.0, 200.0, 400.0, 800.0};
inline constexpr double kSigmaFGridDb[] = {2.0, 4.0, 8.0, 16.0};
inline constexpr double kSigmaNGridDb[] = {2.0, 4.0, 8.0};
inline constexpr std::size_t kHyperSubsample = 300;
inline constexpr std::size_t kMinGpPoints = 5;

// Exhaustive search over the grids above on an evenly strided subsample of
// at most kHyperSubsample points. Ties go to the smallest length scale, then
// sigma_f, then sigma_n. Requires at least kMinGpPoints points.
GpHyper select_hyperparams(std::span<const LocalPoint> points, std::span<const double> targets,
                           PriorMean prior = PriorMean::empirical);

struct GpCandidate {
  std::string id;
  LocalPoint location;
};

// Cell representative locations of a fingerprint, in (row, col) order.
std::vector<GpCandidate> candidates_from(const ProbabilisticFingerprint& fp);

using GpModels = std::map<std::string, GpModel>;

struct GpTrainingOptions {
  std::size_t max_points_per_tower = 1000;
  std::uint64_t seed = 0;
  std::optional<GpHyper> fixed_hyper;
  PriorMean prior = PriorMean::empirical;
};

// One model per tower with at least kMinGpPoints readings in the trace.
// Towers above the cap are subsampled uniformly with a per-tower seed.
GpModels fit_tower_models(const Trace& train, const GeoPoint& origin,
                          const GpTrainingOptions& options = {});

// Scores every candidate by sum_i log N(s_i; mean_i(c), var_i(c) + sigma_n,i^2)
// over the readings whose tower has a model, then takes the K-weighted
// centroid. Predictions are computed from the models on every call.
LocationEstimate gp_locate(const GpModels& models, std::span<const GpCandidate> candidates,
                           const RssiScan& scan, TopK k, const GeoPoint& origin);

// Same estimator with the scan-independent part (predictive variance at the
// candidates) computed once up front. Posterior means are still evaluated
// per query.
class GpRadioMap {
 public:
  GpRadioMap(GpModels models, std::vector<GpCandidate> candidates, const GeoPoint& origin);

  const GpModels& models() const noexcept { return models_; }
  const std::vector<GpCandidate>& candidates() const noexcept { return candidates_; }

  LocationEstimate locate(const RssiScan& scan, TopK k) const;

 private:
  struct TowerTerms {
    std::vector<double> total_variance;  // predictive variance + sigma_n^2
    std::vector<double> log_norm;        // -0.5 log(2 pi total_variance)
  };

  GpModels models_;
  std::vector<GpCandidate> candidates_;
  GeoPoint origin_;
  std::map<std::string, TowerTerms> terms_;
};

}  // namespace cellsense

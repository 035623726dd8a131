#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "cellsense/estimators.hpp"
#include "cellsense/fingerprint.hpp"
#include "cellsense/gp.hpp"
#include "cellsense/trace.hpp"

namespace cellsense::eval {

struct CdfPoint {
  double error_m = 0.0;
  double fraction = 0.0;
};

struct EvalReport {
  Method method = Method::cellsense;
  EstimatorParams params;
  double cell_length_m = 0.0;
  std::size_t n_windows = 0;
  std::size_t n_estimates = 0;
  std::size_t n_not_locatable = 0;
  double median_error_m = 0.0;  // lower median: sorted[(n - 1) / 2]
  double mean_error_m = 0.0;
  std::vector<CdfPoint> error_cdf;
  double mean_runtime_ns = 0.0;
  std::uint64_t windows_hash = 0;
  std::optional<double> degradation_pct;  // vs cellsense, set by compare_all
};

// Consecutive non-overlapping windows of n scans; a trailing partial window
// is dropped. Throws InvalidInput when n == 0.
std::vector<std::span<const RssiScan>> make_windows(const Trace& trace, std::size_t n);

// Hash of the scan ids making up each window, in order.
std::uint64_t hash_windows(std::span<const std::span<const RssiScan>> windows);

// Called with one window; may throw NotLocatable.
using LocateFn = std::function<LocationEstimate(std::span<const RssiScan>)>;

struct EvalOptions {
  // 0 means std::thread::hardware_concurrency().
  unsigned threads = 1;
};

// Runs the estimator on every window of params.n_samples scans. The error
// of a window is the distance from the estimate to the last scan's truth.
// Not-locatable windows are counted and excluded from the error statistics.
EvalReport evaluate(const LocateFn& locate, Method method, const Trace& test,
                    const EstimatorParams& params, double cell_length_m = 0.0,
                    const EvalOptions& options = {});

// Error summary helpers, exposed for testing.
std::vector<CdfPoint> error_cdf(std::vector<double> errors);
double median_error(std::vector<double> errors);

// 100 * (median - baseline) / baseline. Throws InvalidInput unless the
// baseline is positive.
double degradation_pct(double median_m, double baseline_median_m);

struct KSweepRow {
  TopK k;
  double median_error_m = 0.0;
};

struct GridSweepRow {
  double cell_length_m = 0.0;
  double median_error_m = 0.0;
  std::size_t cell_count = 0;
};

struct NSweepRow {
  std::size_t n = 1;
  double median_error_m = 0.0;
  std::size_t windows = 0;
};

std::vector<KSweepRow> sweep_k(const ProbabilisticFingerprint& fp, const Trace& test,
                               std::span<const TopK> ks, const EvalOptions& options = {});

// Rebuilds the fingerprint for each cell length; K = ALL, N = 1.
std::vector<GridSweepRow> sweep_grid(const Trace& train, const Trace& test,
                                     std::span<const double> lengths, double alpha = 1.0,
                                     const EvalOptions& options = {});

// K = ALL for every N.
std::vector<NSweepRow> sweep_n(const ProbabilisticFingerprint& fp, const Trace& test,
                               std::span<const std::size_t> ns, const EvalOptions& options = {});

inline constexpr Method kAllMethods[] = {Method::cellid, Method::knn, Method::gp,
                                         Method::cellsense};

struct CompareOptions {
  TopK k;                  // CellSense and GP
  std::size_t knn_k = 3;   // KNN has no meaningful "all"
  std::size_t n_samples = 1;
  double cell_length_m = 20.0;
  double alpha = 1.0;
  std::set<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  GpTrainingOptions gp;
  EvalOptions eval;
};

// Builds every radio map from `train` and evaluates the selected methods on
// the same windows of `test`. Reports come back in the order cellid, knn,
// gp, cellsense (skipping unselected ones); when cellsense is selected each
// report carries its median-error degradation relative to it. N > 1 applies
// to CellSense only; the other methods use the last scan of each window.
std::vector<EvalReport> compare_all(const Trace& train, const Trace& test,
                                    const CompareOptions& options = {});

// method,param_k,param_n,cell_length,n,median_m,mean_m,mean_runtime_ns,degradation_pct
void write_report_csv(std::ostream& out, std::span<const EvalReport> reports);
// error_m,cumulative_fraction
void write_cdf_csv(std::ostream& out, const EvalReport& report);

}  // namespace cellsense::eval

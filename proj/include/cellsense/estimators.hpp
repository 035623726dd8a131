#pragma once

// Online phase. Every estimator returns a LocationEstimate in the local
// frame of the map it was given, plus the matching lat/lon.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cellsense/fingerprint.hpp"
#include "cellsense/geo.hpp"
#include "cellsense/trace.hpp"

namespace cellsense {

enum class Method { cellsense, knn, cellid, gp };

std::string_view to_string(Method m) noexcept;
// Throws InvalidInput for unknown names.
Method parse_method(std::string_view name);

// Number of most probable locations averaged into the estimate. A default
// constructed TopK means "all of them".
class TopK {
 public:
  constexpr TopK() = default;
  static constexpr TopK all() { return TopK(); }
  // Throws InvalidInput for k == 0.
  static TopK of(std::size_t k);
  // "ALL" (any case) or a positive integer.
  static TopK parse(std::string_view text);

  constexpr bool is_all() const noexcept { return k_ == 0; }
  constexpr std::size_t value() const noexcept { return k_; }
  // Number of locations actually used when `available` are stored.
  constexpr std::size_t resolve(std::size_t available) const noexcept {
    return is_all() || k_ > available ? available : k_;
  }
  std::string str() const;

  friend constexpr bool operator==(TopK, TopK) = default;

 private:
  explicit constexpr TopK(std::size_t k) : k_(k) {}
  std::size_t k_ = 0;
};

struct EstimatorParams {
  TopK k;
  std::size_t n_samples = 1;
};

struct Candidate {
  std::string id;
  double weight = 0.0;
};

struct LocationEstimate {
  LocalPoint location;
  GeoPoint geo;
  Method method = Method::cellsense;
  std::vector<Candidate> top_candidates;  // weights sum to 1
  std::uint64_t elapsed_ns = 1;
};

struct ScoredLocation {
  std::string_view id;
  LocalPoint location;
  double log_score = 0.0;
};

struct WeightedCentroid {
  LocalPoint location;
  std::vector<Candidate> top;
};

// Picks the k highest-scoring locations (ties keep input order), turns
// their log scores into weights by max-subtracted exponentiation and returns
// the weighted mean position. Shared by the CellSense and GP estimators.
WeightedCentroid weighted_top_k(std::span<const ScoredLocation> scored, TopK k);

// exp(x - max) / sum over all entries.
std::vector<double> normalize_log_weights(std::span<const double> log_weights);

// Optional prior P(l) as relative positive weights; cells not listed get 1.
using CellPrior = std::map<CellIndex, double>;

// Precomputed view of a probabilistic fingerprint for repeated queries:
// per-tower smoothed log-probability tables laid out by cell. Holds no
// reference to the source fingerprint.
class CellSenseLocator {
 public:
  explicit CellSenseLocator(const ProbabilisticFingerprint& fp, const CellPrior& prior = {});

  std::size_t cell_count() const noexcept { return cells_.size(); }
  // Cells in (row, col) order; log_likelihoods() follows the same order.
  const std::vector<CellIndex>& cells() const noexcept { return cells_; }
  const std::vector<LocalPoint>& rep_locations() const noexcept { return rep_; }
  const GeoPoint& origin() const noexcept { return origin_; }

  // log P(s | l) + log P(l) per cell, summed over every reading of every
  // scan. A tower heard in a scan but absent from a cell scores the empty
  // histogram value; towers missing from the scan contribute nothing.
  std::vector<double> log_likelihoods(std::span<const RssiScan> scans) const;

  // Requires scans.size() == params.n_samples.
  LocationEstimate locate(std::span<const RssiScan> scans, const EstimatorParams& params) const;

 private:
  GeoPoint origin_;
  double empty_log_prob_ = 0.0;
  std::vector<CellIndex> cells_;
  std::vector<std::string> cell_ids_;
  std::vector<LocalPoint> rep_;
  std::vector<double> log_prior_;  // empty when uniform
  // Per tower, per cell: index of a 63-entry block in tables_, or -1.
  std::unordered_map<std::string, std::vector<std::int32_t>> slots_;
  std::vector<double> tables_;
};

std::map<CellIndex, double> log_posterior(const ProbabilisticFingerprint& fp,
                                          std::span<const RssiScan> scans);

LocationEstimate cellsense_locate(const ProbabilisticFingerprint& fp,
                                  std::span<const RssiScan> scans,
                                  const EstimatorParams& params);

// Value substituted for a tower heard on only one side of a KNN comparison.
inline constexpr int kKnnMissingDbm = kRssiMin;

double rssi_distance(const std::map<std::string, int>& a, const std::map<std::string, int>& b);

LocationEstimate knn_locate(const DeterministicFingerprint& dfp, const RssiScan& scan,
                            std::size_t k);

// Throws NotLocatable when no tower of the scan is in the database.
LocationEstimate cellid_locate(const TowerDb& db, const RssiScan& scan);

}  // namespace cellsense

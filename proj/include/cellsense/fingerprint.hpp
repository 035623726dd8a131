#pragma once

// Offline radio maps built from a war-driving trace:
//  * ProbabilisticFingerprint: square grid cells, each holding one RSSI
//    histogram per tower heard inside the cell.
//  * DeterministicFingerprint: one raw RSSI vector per training scan (KNN).
//  * TowerDb: one estimated position per tower (cell-ID).
// All positions are LocalPoint metres relative to a GeoPoint origin stored
// with the map.

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cellsense/geo.hpp"
#include "cellsense/trace.hpp"

namespace cellsense {

struct CellIndex {
  int row = 0;
  int col = 0;

  friend auto operator<=>(const CellIndex&, const CellIndex&) = default;
};

std::string to_string(const CellIndex& c);

struct GridSpec {
  GeoPoint origin;
  LocalPoint min_corner;
  double cell_length_m = 20.0;
  int n_cols = 1;
  int n_rows = 1;

  bool contains(const CellIndex& c) const noexcept;
  // Floor semantics: points on an interior boundary go to the higher cell.
  std::optional<CellIndex> cell_of(const LocalPoint& p) const noexcept;
  LocalPoint cell_center(const CellIndex& c) const noexcept;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct TowerHistogram {
  std::array<std::uint32_t, kRssiBins> counts{};
  std::uint32_t total = 0;

  void add(int rssi_dbm, std::uint32_t n = 1);
  std::uint32_t count(int rssi_dbm) const;

  friend bool operator==(const TowerHistogram&, const TowerHistogram&) = default;
};

// Laplace-smoothed P(rssi | cell) for one tower:
// (count(rssi) + alpha) / (total + alpha * 63).
double smoothed_prob(const TowerHistogram& h, int rssi_dbm, double alpha);

struct FingerprintCell {
  CellIndex index;
  LocalPoint rep_location;  // mean of member training positions
  std::uint32_t sample_count = 0;
  std::map<std::string, TowerHistogram> histograms;

  friend bool operator==(const FingerprintCell&, const FingerprintCell&) = default;
};

struct ProbabilisticFingerprint {
  static constexpr int n_bins = kRssiBins;

  GridSpec grid;
  std::map<CellIndex, FingerprintCell> cells;  // only non-empty cells
  double alpha = 1.0;

  friend bool operator==(const ProbabilisticFingerprint&,
                         const ProbabilisticFingerprint&) = default;
};

struct FingerprintPoint {
  LocalPoint location;
  std::map<std::string, int> rssi;

  friend bool operator==(const FingerprintPoint&, const FingerprintPoint&) = default;
};

struct DeterministicFingerprint {
  GeoPoint origin;
  std::vector<FingerprintPoint> points;
};

struct TowerDb {
  GeoPoint origin;
  std::map<std::string, LocalPoint> towers;
};

// Mean lat/lon of the ground-truth positions. Throws InvalidInput on an
// empty trace or a scan without truth.
GeoPoint truth_centroid(const Trace& trace);

// Tightest grid of cell_length squares covering every projected truth
// point, with the projection origin at the truth centroid.
GridSpec build_grid(const Trace& trace, double cell_length_m);

ProbabilisticFingerprint build_probabilistic_fingerprint(const Trace& trace,
                                                         const GridSpec& grid,
                                                         double alpha = 1.0);

// One point per scan, no deduplication. The single-argument forms use the
// truth centroid as origin, which matches build_grid() on the same trace.
DeterministicFingerprint build_deterministic_fingerprint(const Trace& trace);
DeterministicFingerprint build_deterministic_fingerprint(const Trace& trace,
                                                         const GeoPoint& origin);

// Heuristic tower positions: mean of the positions where the tower was
// received within 5 dB of its strongest observed RSSI.
inline constexpr int kTowerDbWindowDb = 5;
TowerDb build_tower_db(const Trace& trace);
TowerDb build_tower_db(const Trace& trace, const GeoPoint& origin);

inline constexpr int kFingerprintVersion = 1;

void save_fingerprint(const ProbabilisticFingerprint& fp, std::ostream& out);
// All-or-nothing: any defect, including truncation, throws FormatError.
ProbabilisticFingerprint load_fingerprint(std::istream& in);

}  // namespace cellsense

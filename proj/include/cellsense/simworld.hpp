#pragma once

// Synthetic RF world: towers on a jittered lattice, log-distance path loss,
// spatially persistent shadowing per tower and fresh measurement noise per
// reading. Drives over the world produce traces in the trace CSV schema.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cellsense/geo.hpp"
#include "cellsense/trace.hpp"

namespace cellsense::sim {

inline constexpr int kMaxTowersPerScan = 7;  // serving + six neighbours

struct WorldSpec {
  double width_m = 2000.0;
  double height_m = 2000.0;
  int n_towers = 30;
  double tx_power_dbm = -30.0;  // received power at d0
  double path_loss_exponent = 3.0;
  double d0_m = 1.0;
  double shadow_sigma_db = 6.0;
  double shadow_grid_m = 50.0;
  double meas_sigma_db = 2.0;
  double sensitivity_dbm = -110.0;
  int max_towers_per_scan = kMaxTowersPerScan;
  std::uint64_t seed = 42;
  GeoPoint origin{31.2001, 29.9187};  // lat/lon of local (0, 0)

  friend bool operator==(const WorldSpec&, const WorldSpec&) = default;
};

void validate(const WorldSpec& spec);

struct Tower {
  std::string id;
  LocalPoint position;
};

// Coarse lattice of Gaussian draws, bilinearly interpolated. Points outside
// the lattice are clamped onto its border.
class ShadowField {
 public:
  ShadowField(int cols, int rows, double spacing_m, std::vector<double> values);

  double at(const LocalPoint& p) const noexcept;
  const std::vector<double>& values() const noexcept { return values_; }

  friend bool operator==(const ShadowField&, const ShadowField&) = default;

 private:
  int cols_;
  int rows_;
  double spacing_;
  std::vector<double> values_;  // row-major, rows_ x cols_
};

struct World {
  WorldSpec spec;
  std::vector<Tower> towers;
  std::vector<ShadowField> shadow;  // parallel to towers

  // Throws InvalidInput for an unknown id.
  std::size_t index_of(std::string_view tower_id) const;
};

World generate_world(const WorldSpec& spec);

// Received power before sensitivity cut, quantization and clamping.
double raw_rssi(const World& world, std::size_t tower, const LocalPoint& p, double noise_draw);

// nullopt below the sensitivity floor, otherwise rounded and clamped to
// [-113, -51].
std::optional<int> rssi_at(const World& world, const LocalPoint& p, std::string_view tower_id,
                           double noise_draw);

struct DriveOptions {
  double speed_mps = 10.0;
  double rate_hz = 1.0;
  std::uint64_t seed = 0;  // measurement noise stream
  std::uint64_t first_scan_id = 0;
  std::uint64_t start_time_ms = 0;
};

// Samples the polyline every speed/rate metres (including both ends when
// the length is a whole number of steps). Each scan keeps the strongest
// detected towers (at most max_towers_per_scan), the strongest one marked
// serving. Positions with no detectable tower produce no scan.
Trace synthesize_drive(const World& world, std::span<const LocalPoint> route,
                       const DriveOptions& options);

// War-driving style route that sweeps every street of a square lattice with
// the given block size (rows, then columns, serpentine). length_m <= 0 means
// one full sweep; longer lengths repeat the sweep, shorter ones truncate it.
std::vector<LocalPoint> coverage_route(const WorldSpec& spec, double block_m, double length_m);

// Random walk on the same street lattice, never turning back unless at a
// dead end, truncated to exactly length_m.
std::vector<LocalPoint> random_street_route(const WorldSpec& spec, double block_m,
                                            double length_m, std::uint64_t seed);

// A world plus the drives that are run over it.
struct Scenario {
  WorldSpec world;
  double speed_mps = 10.0;
  double rate_hz = 1.0;
  double block_m = 250.0;
  double train_route_m = 0.0;  // 0: one full coverage sweep
  double test_route_m = 6000.0;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

// "urban" or "rural"; throws InvalidInput otherwise.
Scenario preset(std::string_view name);

// key=value lines, '#' comments. Keys are the field names of WorldSpec and
// Scenario (origin as origin_lat / origin_lon). Unset keys keep the value
// from `base`. Throws FormatError on unknown keys or bad values.
Scenario parse_scenario(std::istream& in, const Scenario& base = {});
void write_scenario(const Scenario& scenario, std::ostream& out);

struct Drives {
  World world;
  Trace train;
  Trace test;
};

// Builds the world and both drives from one seed using named sub-streams.
// The scenario's world seed is replaced by one derived from `seed`.
Drives simulate(const Scenario& scenario, std::uint64_t seed);

}  // namespace cellsense::sim

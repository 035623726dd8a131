#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cellsense/geo.hpp"

namespace cellsense {

// GSM RxLev maps onto integer dBm in [-113, -51]; every RSSI in the
// library lives on this 63-value support.
inline constexpr int kRssiMin = -113;
inline constexpr int kRssiMax = -51;
inline constexpr int kRssiBins = kRssiMax - kRssiMin + 1;

constexpr int clamp_rssi(int dbm) noexcept {
  return dbm < kRssiMin ? kRssiMin : (dbm > kRssiMax ? kRssiMax : dbm);
}

constexpr bool rssi_in_range(int dbm) noexcept {
  return dbm >= kRssiMin && dbm <= kRssiMax;
}

struct TowerReading {
  std::string tower_id;
  int rssi_dbm = kRssiMin;
  bool serving = false;

  friend bool operator==(const TowerReading&, const TowerReading&) = default;
};

struct RssiScan {
  std::uint64_t scan_id = 0;
  std::uint64_t timestamp_ms = 0;
  std::optional<GeoPoint> truth;
  std::vector<TowerReading> readings;

  const TowerReading* find(const std::string& tower_id) const;
  const TowerReading* serving() const;

  friend bool operator==(const RssiScan&, const RssiScan&) = default;
};

struct Trace {
  std::vector<RssiScan> scans;

  bool all_have_truth() const;

  friend bool operator==(const Trace&, const Trace&) = default;
};

// Throws InvalidInput when a scan has no readings, duplicate towers, more
// than one serving reading, an out-of-range RSSI, or when timestamps
// decrease / scan ids repeat.
void validate(const Trace& trace);

struct ParseReport {
  std::size_t rows = 0;
  std::size_t clamped = 0;
  // 1-based line of the first row of each scan, parallel to Trace::scans.
  std::vector<std::size_t> scan_first_line;
};

struct ParsedTrace {
  Trace trace;
  ParseReport report;
};

inline constexpr const char* kTraceHeader =
    "scan_id,timestamp_ms,lat,lon,tower_id,rssi_dbm,serving";

// Reads the long-form trace CSV (one row per tower reading). Rows are
// grouped by scan_id; scans come out ordered by timestamp, then by first
// appearance. Out-of-range RSSI is clamped and counted. Any other defect
// throws FormatError carrying the line number.
ParsedTrace parse_trace(std::istream& in);

void write_trace(const Trace& trace, std::ostream& out);

// Random partition by scan. The test part has round(test_fraction * n)
// scans; both parts keep the original scan order.
std::pair<Trace, Trace> split_train_test(const Trace& trace, double test_fraction,
                                         std::uint64_t seed);

}  // namespace cellsense

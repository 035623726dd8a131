#include "cellsense/trace.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "cellsense/error.hpp"
#include "text.hpp"

namespace cellsense {

const TowerReading* RssiScan::find(const std::string& tower_id) const {
  for (const auto& r : readings) {
    if (r.tower_id == tower_id) return &r;
  }
  return nullptr;
}

const TowerReading* RssiScan::serving() const {
  for (const auto& r : readings) {
    if (r.serving) return &r;
  }
  return nullptr;
}

bool Trace::all_have_truth() const {
  return std::all_of(scans.begin(), scans.end(),
                     [](const RssiScan& s) { return s.truth.has_value(); });
}

void validate(const Trace& trace) {
  std::unordered_set<std::uint64_t> ids;
  std::uint64_t last_ts = 0;
  for (std::size_t i = 0; i < trace.scans.size(); ++i) {
    const RssiScan& scan = trace.scans[i];
    const std::string where = "scan_id " + std::to_string(scan.scan_id);
    if (!ids.insert(scan.scan_id).second) throw InvalidInput(where + ": duplicate scan id");
    if (i > 0 && scan.timestamp_ms < last_ts) {
      throw InvalidInput(where + ": timestamps must be non-decreasing");
    }
    last_ts = scan.timestamp_ms;
    if (scan.readings.empty()) throw InvalidInput(where + ": no readings");
    if (scan.truth) validate(*scan.truth);
    std::unordered_set<std::string> towers;
    int serving = 0;
    for (const auto& r : scan.readings) {
      if (r.tower_id.empty()) throw InvalidInput(where + ": empty tower id");
      if (!towers.insert(r.tower_id).second) {
        throw InvalidInput(where + ": tower " + r.tower_id + " reported twice");
      }
      if (!rssi_in_range(r.rssi_dbm)) throw InvalidInput(where + ": rssi out of range");
      serving += r.serving ? 1 : 0;
    }
    if (serving > 1) throw InvalidInput(where + ": more than one serving reading");
  }
}

namespace {

struct PendingScan {
  RssiScan scan;
  std::size_t first_line = 0;
  bool has_serving = false;
};

std::optional<GeoPoint> parse_truth(std::string_view lat, std::string_view lon,
                                    std::size_t line_no) {
  if (lat.empty() && lon.empty()) return std::nullopt;
  if (lat.empty() || lon.empty()) {
    throw FormatError("lat and lon must both be present or both be empty", line_no);
  }
  const auto la = text::parse_double(lat);
  const auto lo = text::parse_double(lon);
  if (!la || !lo) throw FormatError("non-numeric lat/lon", line_no);
  const GeoPoint p{*la, *lo};
  if (!is_valid(p)) throw FormatError("lat/lon out of range", line_no);
  return p;
}

}  // namespace

ParsedTrace parse_trace(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw FormatError("missing header", 1);
  ++line_no;
  std::string_view header = text::chomp(line);
  if (header.starts_with("\xEF\xBB\xBF")) header.remove_prefix(3);
  if (header != kTraceHeader) {
    throw FormatError(std::string("bad header, expected '") + kTraceHeader + "'", line_no);
  }

  std::vector<PendingScan> pending;
  std::unordered_map<std::uint64_t, std::size_t> by_id;
  std::set<std::pair<std::size_t, std::string>> seen_towers;
  ParseReport report;

  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = text::chomp(line);
    if (row.empty()) continue;
    const auto f = text::split(row, ',');
    if (f.size() != 7) {
      throw FormatError("expected 7 fields, got " + std::to_string(f.size()), line_no);
    }
    const auto scan_id = text::parse_uint(f[0]);
    if (!scan_id) throw FormatError("bad scan_id", line_no);
    const auto ts = text::parse_uint(f[1]);
    if (!ts) throw FormatError("bad timestamp_ms", line_no);
    const auto truth = parse_truth(f[2], f[3], line_no);
    if (f[4].empty()) throw FormatError("empty tower_id", line_no);
    const auto rssi = text::parse_int(f[5]);
    if (!rssi) throw FormatError("bad rssi_dbm", line_no);
    if (f[6] != "0" && f[6] != "1") throw FormatError("serving must be 0 or 1", line_no);
    const bool serving = f[6] == "1";

    auto [it, inserted] = by_id.try_emplace(*scan_id, pending.size());
    if (inserted) {
      PendingScan p;
      p.scan.scan_id = *scan_id;
      p.scan.timestamp_ms = *ts;
      p.scan.truth = truth;
      p.first_line = line_no;
      pending.push_back(std::move(p));
    }
    PendingScan& p = pending[it->second];
    if (p.scan.timestamp_ms != *ts || p.scan.truth != truth) {
      throw FormatError("rows of scan " + std::to_string(*scan_id) +
                            " disagree on timestamp or position",
                        line_no);
    }
    std::string tower(f[4]);
    if (!seen_towers.emplace(it->second, tower).second) {
      throw FormatError("duplicate tower " + tower + " in scan " + std::to_string(*scan_id),
                        line_no);
    }
    if (serving) {
      if (p.has_serving) {
        throw FormatError("scan " + std::to_string(*scan_id) + " has two serving rows",
                          line_no);
      }
      p.has_serving = true;
    }
    const std::int64_t raw = *rssi;
    const int clamped = static_cast<int>(std::clamp<std::int64_t>(raw, kRssiMin, kRssiMax));
    if (clamped != raw) ++report.clamped;
    p.scan.readings.push_back({std::move(tower), clamped, serving});
    ++report.rows;
  }

  std::stable_sort(pending.begin(), pending.end(), [](const auto& a, const auto& b) {
    return a.scan.timestamp_ms < b.scan.timestamp_ms;
  });
  ParsedTrace out;
  out.trace.scans.reserve(pending.size());
  report.scan_first_line.reserve(pending.size());
  for (auto& p : pending) {
    report.scan_first_line.push_back(p.first_line);
    out.trace.scans.push_back(std::move(p.scan));
  }
  out.report = std::move(report);
  return out;
}

void write_trace(const Trace& trace, std::ostream& out) {
  out << kTraceHeader << '\n';
  for (const auto& scan : trace.scans) {
    std::string prefix = std::to_string(scan.scan_id) + ',' +
                         std::to_string(scan.timestamp_ms) + ',';
    if (scan.truth) {
      prefix += text::format_fixed(scan.truth->lat, 6) + ',' +
                text::format_fixed(scan.truth->lon, 6) + ',';
    } else {
      prefix += ",,";
    }
    for (const auto& r : scan.readings) {
      out << prefix << r.tower_id << ',' << r.rssi_dbm << ',' << (r.serving ? '1' : '0')
          << '\n';
    }
  }
}

std::pair<Trace, Trace> split_train_test(const Trace& trace, double test_fraction,
                                         std::uint64_t seed) {
  const std::size_t n = trace.scans.size();
  if (n < 2) throw InvalidInput("split needs at least 2 scans");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw InvalidInput("test_fraction must be in (0, 1)");
  }
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the partition does not depend on
  // the standard library's shuffle implementation.
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = rng() % (i + 1);
    std::swap(order[i], order[j]);
  }
  std::vector<bool> is_test(n, false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;

  Trace train;
  Trace test;
  for (std::size_t i = 0; i < n; ++i) {
    (is_test[i] ? test : train).scans.push_back(trace.scans[i]);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace cellsense

#include "cellsense/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <iterator>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "cellsense/error.hpp"
#include "text.hpp"

namespace cellsense {

std::string to_string(const CellIndex& c) {
  return "r" + std::to_string(c.row) + "c" + std::to_string(c.col);
}

bool GridSpec::contains(const CellIndex& c) const noexcept {
  return c.row >= 0 && c.row < n_rows && c.col >= 0 && c.col < n_cols;
}

std::optional<CellIndex> GridSpec::cell_of(const LocalPoint& p) const noexcept {
  const double fr = std::floor((p.y - min_corner.y) / cell_length_m);
  const double fc = std::floor((p.x - min_corner.x) / cell_length_m);
  if (!(fr >= 0.0 && fr < n_rows && fc >= 0.0 && fc < n_cols)) return std::nullopt;
  return CellIndex{static_cast<int>(fr), static_cast<int>(fc)};
}

LocalPoint GridSpec::cell_center(const CellIndex& c) const noexcept {
  return {min_corner.x + (c.col + 0.5) * cell_length_m,
          min_corner.y + (c.row + 0.5) * cell_length_m};
}

void TowerHistogram::add(int rssi_dbm, std::uint32_t n) {
  if (!rssi_in_range(rssi_dbm)) throw InvalidInput("rssi out of histogram support");
  counts[static_cast<std::size_t>(rssi_dbm - kRssiMin)] += n;
  total += n;
}

std::uint32_t TowerHistogram::count(int rssi_dbm) const {
  if (!rssi_in_range(rssi_dbm)) throw InvalidInput("rssi out of histogram support");
  return counts[static_cast<std::size_t>(rssi_dbm - kRssiMin)];
}

double smoothed_prob(const TowerHistogram& h, int rssi_dbm, double alpha) {
  if (!(alpha > 0.0)) throw InvalidInput("alpha must be positive");
  return (h.count(rssi_dbm) + alpha) / (h.total + alpha * kRssiBins);
}

namespace {

void require_truth(const Trace& trace) {
  if (trace.scans.empty()) throw InvalidInput("trace has no scans");
  for (const auto& s : trace.scans) {
    if (!s.truth) {
      throw InvalidInput("scan_id " + std::to_string(s.scan_id) + " has no ground truth");
    }
  }
}

}  // namespace

GeoPoint truth_centroid(const Trace& trace) {
  require_truth(trace);
  double lat = 0.0;
  double lon = 0.0;
  for (const auto& s : trace.scans) {
    lat += s.truth->lat;
    lon += s.truth->lon;
  }
  const auto n = static_cast<double>(trace.scans.size());
  return {lat / n, lon / n};
}

GridSpec build_grid(const Trace& trace, double cell_length_m) {
  if (!(cell_length_m > 0.0) || !std::isfinite(cell_length_m)) {
    throw InvalidInput("cell length must be positive");
  }
  GridSpec grid;
  grid.origin = truth_centroid(trace);
  grid.cell_length_m = cell_length_m;

  LocalPoint lo{std::numeric_limits<double>::infinity(),
                std::numeric_limits<double>::infinity()};
  LocalPoint hi{-lo.x, -lo.y};
  for (const auto& s : trace.scans) {
    const LocalPoint p = project(*s.truth, grid.origin);
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
  }
  grid.min_corner = lo;
  const double cols = std::floor((hi.x - lo.x) / cell_length_m) + 1.0;
  const double rows = std::floor((hi.y - lo.y) / cell_length_m) + 1.0;
  if (cols > std::numeric_limits<int>::max() || rows > std::numeric_limits<int>::max()) {
    throw InvalidInput("cell length too small for the covered area");
  }
  grid.n_cols = static_cast<int>(cols);
  grid.n_rows = static_cast<int>(rows);
  return grid;
}

ProbabilisticFingerprint build_probabilistic_fingerprint(const Trace& trace,
                                                         const GridSpec& grid,
                                                         double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidInput("alpha must be positive");
  require_truth(trace);

  ProbabilisticFingerprint fp;
  fp.grid = grid;
  fp.alpha = alpha;
  std::map<CellIndex, LocalPoint> position_sums;
  for (const auto& s : trace.scans) {
    const LocalPoint p = project(*s.truth, grid.origin);
    const auto idx = grid.cell_of(p);
    if (!idx) {
      throw InvalidInput("scan_id " + std::to_string(s.scan_id) + " falls outside the grid");
    }
    FingerprintCell& cell = fp.cells[*idx];
    cell.index = *idx;
    ++cell.sample_count;
    LocalPoint& sum = position_sums[*idx];
    sum.x += p.x;
    sum.y += p.y;
    for (const auto& r : s.readings) cell.histograms[r.tower_id].add(r.rssi_dbm);
  }
  for (auto& [idx, cell] : fp.cells) {
    const LocalPoint& sum = position_sums[idx];
    cell.rep_location = {sum.x / cell.sample_count, sum.y / cell.sample_count};
  }
  return fp;
}

DeterministicFingerprint build_deterministic_fingerprint(const Trace& trace) {
  return build_deterministic_fingerprint(trace, truth_centroid(trace));
}

DeterministicFingerprint build_deterministic_fingerprint(const Trace& trace,
                                                         const GeoPoint& origin) {
  require_truth(trace);
  DeterministicFingerprint dfp;
  dfp.origin = origin;
  dfp.points.reserve(trace.scans.size());
  for (const auto& s : trace.scans) {
    FingerprintPoint point;
    point.location = project(*s.truth, origin);
    for (const auto& r : s.readings) point.rssi.emplace(r.tower_id, r.rssi_dbm);
    dfp.points.push_back(std::move(point));
  }
  return dfp;
}

TowerDb build_tower_db(const Trace& trace) {
  return build_tower_db(trace, truth_centroid(trace));
}

TowerDb build_tower_db(const Trace& trace, const GeoPoint& origin) {
  require_truth(trace);
  std::map<std::string, int> strongest;
  for (const auto& s : trace.scans) {
    for (const auto& r : s.readings) {
      auto [it, inserted] = strongest.try_emplace(r.tower_id, r.rssi_dbm);
      if (!inserted) it->second = std::max(it->second, r.rssi_dbm);
    }
  }
  struct Acc {
    double x = 0.0;
    double y = 0.0;
    std::size_t n = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& s : trace.scans) {
    const LocalPoint p = project(*s.truth, origin);
    for (const auto& r : s.readings) {
      if (r.rssi_dbm < strongest[r.tower_id] - kTowerDbWindowDb) continue;
      Acc& a = acc[r.tower_id];
      a.x += p.x;
      a.y += p.y;
      ++a.n;
    }
  }
  TowerDb db;
  db.origin = origin;
  for (const auto& [id, a] : acc) {
    db.towers.emplace(id, LocalPoint{a.x / a.n, a.y / a.n});
  }
  return db;
}

// ---------------------------------------------------------------------------
// Fingerprint file
//
//   #version=1
//   #origin_lat=..,#origin_lon=..
//   #min_x=..,#min_y=..,#cell_length=..,#n_cols=..,#n_rows=..,#alpha=..
//   #cells=..,#histogram_rows=..
//   C,row,col,rep_x,rep_y,sample_count
//   H,row,col,tower_id,rssi_dbm,count
//
// The row counts and the mandatory final newline make truncation detectable.

void save_fingerprint(const ProbabilisticFingerprint& fp, std::ostream& out) {
  using text::format_double;
  std::size_t hist_rows = 0;
  for (const auto& [idx, cell] : fp.cells) {
    for (const auto& [tower, h] : cell.histograms) {
      hist_rows += static_cast<std::size_t>(
          std::count_if(h.counts.begin(), h.counts.end(), [](auto c) { return c > 0; }));
    }
  }
  const GridSpec& g = fp.grid;
  out << "#version=" << kFingerprintVersion << '\n';
  out << "#origin_lat=" << format_double(g.origin.lat)
      << ",#origin_lon=" << format_double(g.origin.lon) << '\n';
  out << "#min_x=" << format_double(g.min_corner.x)
      << ",#min_y=" << format_double(g.min_corner.y)
      << ",#cell_length=" << format_double(g.cell_length_m) << ",#n_cols=" << g.n_cols
      << ",#n_rows=" << g.n_rows << ",#alpha=" << format_double(fp.alpha) << '\n';
  out << "#cells=" << fp.cells.size() << ",#histogram_rows=" << hist_rows << '\n';
  for (const auto& [idx, cell] : fp.cells) {
    out << "C," << idx.row << ',' << idx.col << ',' << format_double(cell.rep_location.x)
        << ',' << format_double(cell.rep_location.y) << ',' << cell.sample_count << '\n';
  }
  for (const auto& [idx, cell] : fp.cells) {
    for (const auto& [tower, h] : cell.histograms) {
      for (int r = kRssiMin; r <= kRssiMax; ++r) {
        const auto c = h.count(r);
        if (c == 0) continue;
        out << "H," << idx.row << ',' << idx.col << ',' << tower << ',' << r << ',' << c
            << '\n';
      }
    }
  }
}

namespace {

// Parses "#k1=v1,#k2=v2,..." with exactly the given keys in order.
std::vector<std::string_view> header_values(std::string_view line,
                                            std::initializer_list<std::string_view> keys,
                                            std::size_t line_no) {
  const auto tokens = text::split(line, ',');
  if (tokens.size() != keys.size()) throw FormatError("malformed header line", line_no);
  std::vector<std::string_view> values;
  auto key = keys.begin();
  for (const auto tok : tokens) {
    const std::string prefix = "#" + std::string(*key++) + "=";
    if (!tok.starts_with(prefix)) {
      throw FormatError("expected header key " + prefix, line_no);
    }
    values.push_back(tok.substr(prefix.size()));
  }
  return values;
}

double header_double(std::string_view v, std::size_t line_no) {
  const auto d = text::parse_double(v);
  if (!d) throw FormatError("bad number in header", line_no);
  return *d;
}

int header_int(std::string_view v, std::size_t line_no) {
  const auto i = text::parse_int(v);
  if (!i || *i < 1 || *i > std::numeric_limits<int>::max()) {
    throw FormatError("bad count in header", line_no);
  }
  return static_cast<int>(*i);
}

int row_int(std::string_view v, std::size_t line_no) {
  const auto i = text::parse_int(v);
  if (!i || *i < std::numeric_limits<int>::min() || *i > std::numeric_limits<int>::max()) {
    throw FormatError("bad integer field", line_no);
  }
  return static_cast<int>(*i);
}

std::uint32_t row_count(std::string_view v, std::size_t line_no) {
  const auto u = text::parse_uint(v);
  if (!u || *u == 0 || *u > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError("bad count field", line_no);
  }
  return static_cast<std::uint32_t>(*u);
}

}  // namespace

ProbabilisticFingerprint load_fingerprint(std::istream& in) {
  const std::string content{std::istreambuf_iterator<char>(in),
                            std::istreambuf_iterator<char>()};
  if (content.empty()) throw FormatError("empty fingerprint file");
  if (content.back() != '\n') throw FormatError("fingerprint file is truncated");

  std::vector<std::string_view> lines = text::split(content, '\n');
  lines.pop_back();  // empty piece after the final newline
  for (auto& l : lines) l = text::chomp(l);
  if (lines.size() < 4) throw FormatError("fingerprint header is incomplete");

  const auto version = header_values(lines[0], {"version"}, 1);
  if (version[0] != std::to_string(kFingerprintVersion)) {
    throw FormatError("unsupported fingerprint version '" + std::string(version[0]) + "'", 1);
  }
  ProbabilisticFingerprint fp;
  GridSpec& g = fp.grid;
  const auto origin = header_values(lines[1], {"origin_lat", "origin_lon"}, 2);
  g.origin = {header_double(origin[0], 2), header_double(origin[1], 2)};
  if (!is_valid(g.origin)) throw FormatError("origin out of range", 2);
  const auto grid = header_values(
      lines[2], {"min_x", "min_y", "cell_length", "n_cols", "n_rows", "alpha"}, 3);
  g.min_corner = {header_double(grid[0], 3), header_double(grid[1], 3)};
  g.cell_length_m = header_double(grid[2], 3);
  g.n_cols = header_int(grid[3], 3);
  g.n_rows = header_int(grid[4], 3);
  fp.alpha = header_double(grid[5], 3);
  if (!(g.cell_length_m > 0.0) || !(fp.alpha > 0.0)) {
    throw FormatError("cell_length and alpha must be positive", 3);
  }
  const auto counts = header_values(lines[3], {"cells", "histogram_rows"}, 4);
  const auto n_cells = text::parse_uint(counts[0]);
  const auto n_hist = text::parse_uint(counts[1]);
  if (!n_cells || !n_hist) throw FormatError("bad row counts", 4);

  std::size_t hist_rows = 0;
  std::set<std::tuple<CellIndex, std::string, int>> seen_bins;
  for (std::size_t i = 4; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto f = text::split(lines[i], ',');
    if (f.empty() || (f[0] != "C" && f[0] != "H")) {
      throw FormatError("unknown row type", line_no);
    }
    if (f.size() != 6) throw FormatError("expected 6 fields", line_no);
    const CellIndex idx{row_int(f[1], line_no), row_int(f[2], line_no)};
    if (!g.contains(idx)) throw FormatError("cell index outside grid", line_no);
    if (f[0] == "C") {
      const auto x = text::parse_double(f[3]);
      const auto y = text::parse_double(f[4]);
      if (!x || !y) throw FormatError("bad representative location", line_no);
      FingerprintCell cell;
      cell.index = idx;
      cell.rep_location = {*x, *y};
      cell.sample_count = row_count(f[5], line_no);
      if (!fp.cells.emplace(idx, std::move(cell)).second) {
        throw FormatError("duplicate cell " + to_string(idx), line_no);
      }
    } else {
      auto it = fp.cells.find(idx);
      if (it == fp.cells.end()) throw FormatError("histogram for undeclared cell", line_no);
      if (f[3].empty()) throw FormatError("empty tower id", line_no);
      const auto rssi = text::parse_int(f[4]);
      if (!rssi || *rssi < kRssiMin || *rssi > kRssiMax) {
        throw FormatError("rssi outside [-113, -51]", line_no);
      }
      const int r = static_cast<int>(*rssi);
      if (!seen_bins.emplace(idx, std::string(f[3]), r).second) {
        throw FormatError("duplicate histogram bin", line_no);
      }
      TowerHistogram& h = it->second.histograms[std::string(f[3])];
      h.add(r, row_count(f[5], line_no));
      if (h.total > it->second.sample_count) {
        throw FormatError("histogram total exceeds cell sample count", line_no);
      }
      ++hist_rows;
    }
  }
  if (fp.cells.size() != *n_cells || hist_rows != *n_hist) {
    throw FormatError("row counts do not match header; file is truncated or corrupt");
  }
  return fp;
}

}  // namespace cellsense

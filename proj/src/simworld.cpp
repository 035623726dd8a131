#include "cellsense/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

#include "cellsense/error.hpp"
#include "cellsense/random.hpp"
#include "text.hpp"

namespace cellsense::sim {

void validate(const WorldSpec& s) {
  const auto pos = [](double v) { return v > 0.0 && std::isfinite(v); };
  const auto nonneg = [](double v) { return v >= 0.0 && std::isfinite(v); };
  if (!pos(s.width_m) || !pos(s.height_m)) throw InvalidInput("world dimensions must be positive");
  if (s.n_towers < 1) throw InvalidInput("world needs at least one tower");
  if (!nonneg(s.shadow_sigma_db) || !nonneg(s.meas_sigma_db)) {
    throw InvalidInput("noise sigmas must be non-negative");
  }
  if (!pos(s.shadow_grid_m) || !pos(s.d0_m)) {
    throw InvalidInput("shadow grid spacing and d0 must be positive");
  }
  if (!std::isfinite(s.tx_power_dbm) || !std::isfinite(s.path_loss_exponent) ||
      !std::isfinite(s.sensitivity_dbm)) {
    throw InvalidInput("propagation parameters must be finite");
  }
  if (s.max_towers_per_scan != kMaxTowersPerScan) {
    throw InvalidInput("max_towers_per_scan must be 7");
  }
  validate(s.origin);
}

ShadowField::ShadowField(int cols, int rows, double spacing_m, std::vector<double> values)
    : cols_(cols), rows_(rows), spacing_(spacing_m), values_(std::move(values)) {
  if (cols_ < 1 || rows_ < 1 || static_cast<std::size_t>(cols_) * rows_ != values_.size()) {
    throw InvalidInput("shadow field shape does not match its values");
  }
}

double ShadowField::at(const LocalPoint& p) const noexcept {
  const double fx = std::clamp(p.x / spacing_, 0.0, static_cast<double>(cols_ - 1));
  const double fy = std::clamp(p.y / spacing_, 0.0, static_cast<double>(rows_ - 1));
  const int c0 = std::min(static_cast<int>(fx), std::max(cols_ - 2, 0));
  const int r0 = std::min(static_cast<int>(fy), std::max(rows_ - 2, 0));
  const int c1 = std::min(c0 + 1, cols_ - 1);
  const int r1 = std::min(r0 + 1, rows_ - 1);
  const double tx = fx - c0;
  const double ty = fy - r0;
  const auto v = [&](int r, int c) { return values_[static_cast<std::size_t>(r * cols_ + c)]; };
  return (1 - ty) * ((1 - tx) * v(r0, c0) + tx * v(r0, c1)) +
         ty * ((1 - tx) * v(r1, c0) + tx * v(r1, c1));
}

std::size_t World::index_of(std::string_view tower_id) const {
  for (std::size_t i = 0; i < towers.size(); ++i) {
    if (towers[i].id == tower_id) return i;
  }
  throw InvalidInput("unknown tower '" + std::string(tower_id) + "'");
}

World generate_world(const WorldSpec& spec) {
  validate(spec);
  World world;
  world.spec = spec;
  std::mt19937_64 rng(derive_seed(spec.seed, "towers"));
  std::uniform_real_distribution<double> jitter(-0.25, 0.25);

  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.n_towers))));
  const int rows = (spec.n_towers + cols - 1) / cols;
  const double sx = spec.width_m / cols;
  const double sy = spec.height_m / rows;
  for (int i = 0; i < spec.n_towers; ++i) {
    const int r = i / cols;
    const int c = i % cols;
    const double jx = jitter(rng);
    const double jy = jitter(rng);
    char id[32];
    std::snprintf(id, sizeof id, "cell-%03d", i);
    world.towers.push_back({id, {(c + 0.5 + jx) * sx, (r + 0.5 + jy) * sy}});
  }

  const int gcols = static_cast<int>(std::ceil(spec.width_m / spec.shadow_grid_m)) + 1;
  const int grows = static_cast<int>(std::ceil(spec.height_m / spec.shadow_grid_m)) + 1;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int t = 0; t < spec.n_towers; ++t) {
    std::mt19937_64 srng(derive_seed(spec.seed, "shadow:" + std::to_string(t)));
    std::vector<double> values(static_cast<std::size_t>(gcols) * grows);
    for (double& v : values) v = spec.shadow_sigma_db * gauss(srng);
    world.shadow.emplace_back(gcols, grows, spec.shadow_grid_m, std::move(values));
  }
  return world;
}

double raw_rssi(const World& world, std::size_t tower, const LocalPoint& p, double noise_draw) {
  if (tower >= world.towers.size()) throw InvalidInput("tower index out of range");
  const WorldSpec& s = world.spec;
  const double d = std::max(distance(p, world.towers[tower].position), s.d0_m);
  return s.tx_power_dbm - 10.0 * s.path_loss_exponent * std::log10(d / s.d0_m) +
         world.shadow[tower].at(p) + noise_draw;
}

namespace {

std::optional<int> quantize(double raw, double sensitivity) {
  if (raw < sensitivity) return std::nullopt;
  return clamp_rssi(static_cast<int>(std::clamp(std::round(raw), -1000.0, 1000.0)));
}

}  // namespace

std::optional<int> rssi_at(const World& world, const LocalPoint& p, std::string_view tower_id,
                           double noise_draw) {
  return quantize(raw_rssi(world, world.index_of(tower_id), p, noise_draw),
                  world.spec.sensitivity_dbm);
}

Trace synthesize_drive(const World& world, std::span<const LocalPoint> route,
                       const DriveOptions& options) {
  if (route.size() < 2) throw InvalidInput("route needs at least two waypoints");
  if (!(options.speed_mps > 0.0) || !(options.rate_hz > 0.0)) {
    throw InvalidInput("speed and rate must be positive");
  }
  std::vector<double> cum(route.size(), 0.0);
  for (std::size_t i = 1; i < route.size(); ++i) {
    cum[i] = cum[i - 1] + distance(route[i - 1], route[i]);
  }
  const double total = cum.back();
  if (!(total > 0.0) || !std::isfinite(total)) throw InvalidInput("route has zero length");

  const double step = options.speed_mps / options.rate_hz;
  const auto n_samples = static_cast<std::size_t>(std::floor(total / step + 1e-9)) + 1;
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n_towers = world.towers.size();

  Trace trace;
  std::size_t seg = 0;
  std::vector<std::pair<int, std::size_t>> heard;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double s = std::min(static_cast<double>(i) * step, total);
    while (seg + 2 < route.size() && cum[seg + 1] < s) ++seg;
    const double seg_len = cum[seg + 1] - cum[seg];
    const double t = seg_len > 0.0 ? (s - cum[seg]) / seg_len : 0.0;
    const LocalPoint p{route[seg].x + t * (route[seg + 1].x - route[seg].x),
                       route[seg].y + t * (route[seg + 1].y - route[seg].y)};

    heard.clear();
    for (std::size_t k = 0; k < n_towers; ++k) {
      const double draw = world.spec.meas_sigma_db * noise(rng);
      if (const auto r = quantize(raw_rssi(world, k, p, draw), world.spec.sensitivity_dbm)) {
        heard.emplace_back(*r, k);
      }
    }
    if (heard.empty()) continue;
    std::stable_sort(heard.begin(), heard.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    if (heard.size() > static_cast<std::size_t>(world.spec.max_towers_per_scan)) {
      heard.resize(static_cast<std::size_t>(world.spec.max_towers_per_scan));
    }

    RssiScan scan;
    scan.scan_id = options.first_scan_id + trace.scans.size();
    scan.timestamp_ms =
        options.start_time_ms +
        static_cast<std::uint64_t>(std::llround(static_cast<double>(i) * 1000.0 / options.rate_hz));
    scan.truth = unproject(p, world.spec.origin);
    for (std::size_t k = 0; k < heard.size(); ++k) {
      scan.readings.push_back({world.towers[heard[k].second].id, heard[k].first, k == 0});
    }
    trace.scans.push_back(std::move(scan));
  }
  return trace;
}

namespace {

// Truncates or repeats `loop` so its length is exactly length_m.
std::vector<LocalPoint> fit_length(const std::vector<LocalPoint>& loop, double length_m) {
  std::vector<LocalPoint> out{loop.front()};
  double acc = 0.0;
  while (true) {
    for (std::size_t i = 1; i < loop.size(); ++i) {
      const double d = distance(loop[i - 1], loop[i]);
      if (acc + d >= length_m) {
        const double t = (length_m - acc) / d;
        out.push_back({loop[i - 1].x + t * (loop[i].x - loop[i - 1].x),
                       loop[i - 1].y + t * (loop[i].y - loop[i - 1].y)});
        return out;
      }
      acc += d;
      out.push_back(loop[i]);
    }
    // Jump back to the start along the previous path, reversed.
    std::vector<LocalPoint> back(loop.rbegin(), loop.rend());
    for (std::size_t i = 1; i < back.size(); ++i) {
      const double d = distance(back[i - 1], back[i]);
      if (acc + d >= length_m) {
        const double t = (length_m - acc) / d;
        out.push_back({back[i - 1].x + t * (back[i].x - back[i - 1].x),
                       back[i - 1].y + t * (back[i].y - back[i - 1].y)});
        return out;
      }
      acc += d;
      out.push_back(back[i]);
    }
  }
}

struct Lattice {
  int nx;
  int ny;
  double block;
  LocalPoint at(int i, int j) const { return {i * block, j * block}; }
};

Lattice lattice_for(const WorldSpec& spec, double block_m) {
  if (!(block_m > 0.0)) throw InvalidInput("block size must be positive");
  const int nx = static_cast<int>(std::floor(spec.width_m / block_m)) + 1;
  const int ny = static_cast<int>(std::floor(spec.height_m / block_m)) + 1;
  if (nx < 2 && ny < 2) throw InvalidInput("block size larger than the world");
  return {nx, ny, block_m};
}

}  // namespace

std::vector<LocalPoint> coverage_route(const WorldSpec& spec, double block_m, double length_m) {
  validate(spec);
  const Lattice g = lattice_for(spec, block_m);
  const double w = (g.nx - 1) * g.block;
  const double h = (g.ny - 1) * g.block;
  std::vector<LocalPoint> sweep;
  // Horizontal streets, alternating direction.
  for (int j = 0; j < g.ny; ++j) {
    const double y = j * g.block;
    if (j % 2 == 0) {
      sweep.push_back({0.0, y});
      sweep.push_back({w, y});
    } else {
      sweep.push_back({w, y});
      sweep.push_back({0.0, y});
    }
  }
  // Vertical streets, starting from the corner the horizontal pass ended at.
  const bool from_right = g.ny % 2 == 1;
  for (int k = 0; k < g.nx; ++k) {
    const int i = from_right ? g.nx - 1 - k : k;
    const double x = i * g.block;
    const bool down = k % 2 == 0;
    sweep.push_back({x, down ? h : 0.0});
    sweep.push_back({x, down ? 0.0 : h});
  }
  // Drop zero-length hops between consecutive identical points.
  std::vector<LocalPoint> route{sweep.front()};
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    if (!(sweep[i] == route.back())) route.push_back(sweep[i]);
  }
  if (length_m <= 0.0) return route;
  return fit_length(route, length_m);
}

std::vector<LocalPoint> random_street_route(const WorldSpec& spec, double block_m,
                                            double length_m, std::uint64_t seed) {
  validate(spec);
  if (!(length_m > 0.0)) throw InvalidInput("route length must be positive");
  const Lattice g = lattice_for(spec, block_m);
  std::mt19937_64 rng(seed);
  int i = static_cast<int>(rng() % static_cast<std::uint64_t>(g.nx));
  int j = static_cast<int>(rng() % static_cast<std::uint64_t>(g.ny));
  int pi = -1;
  int pj = -1;
  std::vector<LocalPoint> walk{g.at(i, j)};
  double acc = 0.0;
  while (acc < length_m) {
    std::vector<std::pair<int, int>> next;
    for (const auto& [di, dj] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
      const int ni = i + di;
      const int nj = j + dj;
      if (ni < 0 || nj < 0 || ni >= g.nx || nj >= g.ny) continue;
      if (ni == pi && nj == pj) continue;
      next.emplace_back(ni, nj);
    }
    if (next.empty()) next.emplace_back(pi, pj);
    const auto [ni, nj] = next[rng() % next.size()];
    pi = i;
    pj = j;
    i = ni;
    j = nj;
    walk.push_back(g.at(i, j));
    acc += g.block;
  }
  return fit_length(walk, length_m);
}

Scenario preset(std::string_view name) {
  Scenario s;
  if (name == "urban") {
    s.world.width_m = 2000.0;
    s.world.height_m = 2000.0;
    s.world.n_towers = 30;
    s.world.origin = {31.2001, 29.9187};
    s.block_m = 250.0;
    s.test_route_m = 6000.0;
    return s;
  }
  if (name == "rural") {
    s.world.width_m = 2400.0;
    s.world.height_m = 2400.0;
    s.world.n_towers = 12;
    s.world.tx_power_dbm = -25.0;
    s.world.path_loss_exponent = 2.8;
    s.world.origin = {30.0712, 31.0169};
    s.block_m = 400.0;
    s.test_route_m = 6000.0;
    return s;
  }
  throw InvalidInput("unknown preset '" + std::string(name) + "' (expected urban or rural)");
}

namespace {

struct Field {
  const char* key;
  double Scenario::*scenario = nullptr;
  double WorldSpec::*world = nullptr;
};

constexpr Field kDoubleFields[] = {
    {"width_m", nullptr, &WorldSpec::width_m},
    {"height_m", nullptr, &WorldSpec::height_m},
    {"tx_power_dbm", nullptr, &WorldSpec::tx_power_dbm},
    {"path_loss_exponent", nullptr, &WorldSpec::path_loss_exponent},
    {"d0_m", nullptr, &WorldSpec::d0_m},
    {"shadow_sigma_db", nullptr, &WorldSpec::shadow_sigma_db},
    {"shadow_grid_m", nullptr, &WorldSpec::shadow_grid_m},
    {"meas_sigma_db", nullptr, &WorldSpec::meas_sigma_db},
    {"sensitivity_dbm", nullptr, &WorldSpec::sensitivity_dbm},
    {"speed_mps", &Scenario::speed_mps, nullptr},
    {"rate_hz", &Scenario::rate_hz, nullptr},
    {"block_m", &Scenario::block_m, nullptr},
    {"train_route_m", &Scenario::train_route_m, nullptr},
    {"test_route_m", &Scenario::test_route_m, nullptr},
};

}  // namespace

Scenario parse_scenario(std::istream& in, const Scenario& base) {
  Scenario s = base;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view v = text::chomp(line);
    if (const auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    const auto trim = [](std::string_view x) {
      while (!x.empty() && (x.front() == ' ' || x.front() == '\t')) x.remove_prefix(1);
      while (!x.empty() && (x.back() == ' ' || x.back() == '\t')) x.remove_suffix(1);
      return x;
    };
    v = trim(v);
    if (v.empty()) continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos) throw FormatError("expected key=value", line_no);
    const std::string_view key = trim(v.substr(0, eq));
    const std::string_view val = trim(v.substr(eq + 1));

    bool done = false;
    for (const Field& f : kDoubleFields) {
      if (key != f.key) continue;
      const auto d = text::parse_double(val);
      if (!d) throw FormatError("bad number for " + std::string(key), line_no);
      if (f.world != nullptr) s.world.*(f.world) = *d;
      else s.*(f.scenario) = *d;
      done = true;
    }
    if (done) continue;
    if (key == "n_towers" || key == "max_towers_per_scan") {
      const auto i = text::parse_int(val);
      if (!i || *i < 1 || *i > 100000) throw FormatError("bad integer for " + std::string(key), line_no);
      (key == "n_towers" ? s.world.n_towers : s.world.max_towers_per_scan) = static_cast<int>(*i);
    } else if (key == "seed") {
      const auto u = text::parse_uint(val);
      if (!u) throw FormatError("bad seed", line_no);
      s.world.seed = *u;
    } else if (key == "origin_lat" || key == "origin_lon") {
      const auto d = text::parse_double(val);
      if (!d) throw FormatError("bad number for " + std::string(key), line_no);
      (key == "origin_lat" ? s.world.origin.lat : s.world.origin.lon) = *d;
    } else {
      throw FormatError("unknown key '" + std::string(key) + "'", line_no);
    }
  }
  try {
    validate(s.world);
  } catch (const InvalidInput& e) {
    throw FormatError(e.what());
  }
  return s;
}

void write_scenario(const Scenario& s, std::ostream& out) {
  for (const Field& f : kDoubleFields) {
    const double v = f.world != nullptr ? s.world.*(f.world) : s.*(f.scenario);
    out << f.key << '=' << text::format_double(v) << '\n';
  }
  out << "n_towers=" << s.world.n_towers << '\n';
  out << "max_towers_per_scan=" << s.world.max_towers_per_scan << '\n';
  out << "seed=" << s.world.seed << '\n';
  out << "origin_lat=" << text::format_double(s.world.origin.lat) << '\n';
  out << "origin_lon=" << text::format_double(s.world.origin.lon) << '\n';
}

Drives simulate(const Scenario& scenario, std::uint64_t seed) {
  WorldSpec spec = scenario.world;
  spec.seed = derive_seed(seed, "world");
  Drives d{generate_world(spec), {}, {}};

  const auto train_route = coverage_route(spec, scenario.block_m, scenario.train_route_m);
  DriveOptions opt;
  opt.speed_mps = scenario.speed_mps;
  opt.rate_hz = scenario.rate_hz;
  opt.seed = derive_seed(seed, "train-noise");
  d.train = synthesize_drive(d.world, train_route, opt);

  if (scenario.test_route_m > 0.0) {
    const auto test_route = random_street_route(spec, scenario.block_m, scenario.test_route_m,
                                                derive_seed(seed, "test-route"));
    opt.seed = derive_seed(seed, "test-noise");
    opt.first_scan_id = d.train.scans.size();
    opt.start_time_ms =
        d.train.scans.empty() ? 0 : d.train.scans.back().timestamp_ms + 60'000;
    d.test = synthesize_drive(d.world, test_route, opt);
  }
  return d;
}

}  // namespace cellsense::sim

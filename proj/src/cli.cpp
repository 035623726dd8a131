#include "cellsense/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "cellsense/error.hpp"
#include "cellsense/estimators.hpp"
#include "cellsense/eval.hpp"
#include "cellsense/fingerprint.hpp"
#include "cellsense/gp.hpp"
#include "cellsense/simworld.hpp"
#include "cellsense/trace.hpp"
#include "text.hpp"

namespace cellsense::cli {

namespace {

namespace fs = std::filesystem;

// Bad flag values detected after CLI11 has parsed them.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable input or a library error, prefixed with the file involved.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr std::uint64_t kDefaultSeed = 42;

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open for reading");
  return in;
}

// Output goes to a string first so a failed run never leaves a partial file.
void write_output(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << content;
  out.flush();
  if (!out) throw DataError(path + ": write failed");
}

ParsedTrace read_trace(const std::string& path, std::ostream& err) {
  std::ifstream in = open_input(path);
  ParsedTrace parsed;
  try {
    parsed = parse_trace(in);
  } catch (const Error& e) {
    throw DataError(path + ": " + e.what());
  }
  if (parsed.report.clamped > 0) {
    err << "note: " << path << ": " << parsed.report.clamped
        << " rssi value(s) clamped to [" << kRssiMin << ", " << kRssiMax << "]\n";
  }
  return parsed;
}

// Training traces need truth on every scan; name the first row without it.
void require_truth(const ParsedTrace& parsed, const std::string& path) {
  if (parsed.trace.scans.empty()) throw DataError(path + ": trace has no scans");
  for (std::size_t i = 0; i < parsed.trace.scans.size(); ++i) {
    const RssiScan& s = parsed.trace.scans[i];
    if (s.truth) continue;
    throw DataError(path + ": line " + std::to_string(parsed.report.scan_first_line[i]) +
                    ": scan_id " + std::to_string(s.scan_id) +
                    " has no lat/lon; training traces need ground truth on every row");
  }
}

ProbabilisticFingerprint read_fingerprint(const std::string& path) {
  std::ifstream in = open_input(path);
  try {
    return load_fingerprint(in);
  } catch (const Error& e) {
    throw DataError(path + ": " + e.what());
  }
}

TopK parse_k(const std::string& text) {
  try {
    return TopK::parse(text);
  } catch (const Error& e) {
    throw UsageError("--k: " + std::string(e.what()));
  }
}

std::set<Method> parse_methods(const std::string& text) {
  std::set<Method> out;
  if (text == "all") return {std::begin(eval::kAllMethods), std::end(eval::kAllMethods)};
  for (const auto part : text::split(text, ',')) {
    try {
      out.insert(parse_method(part));
    } catch (const Error&) {
      throw UsageError("--methods: unknown method '" + std::string(part) + "'");
    }
  }
  if (out.empty()) throw UsageError("--methods: empty list");
  return out;
}

std::string fixed6(double v) { return text::format_fixed(v, 6); }

// CLI11 validator: the directory an output file goes into must exist.
const CLI::Validator kWritablePath(
    [](std::string& path) -> std::string {
      const fs::path parent = fs::path(path).parent_path();
      if (!parent.empty() && !fs::is_directory(parent)) {
        return "directory does not exist: " + parent.string();
      }
      return {};
    },
    "PATH");

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string preset = "urban";
  std::string out;
  std::string test_out;
  std::string world;
  std::uint64_t seed = kDefaultSeed;
  std::optional<double> route_len_m;
  std::optional<double> test_len_m;
};

void do_simulate(const SimulateArgs& a, std::ostream& err) {
  sim::Scenario scenario = sim::preset(a.preset);
  if (!a.world.empty()) {
    std::ifstream in = open_input(a.world);
    try {
      scenario = sim::parse_scenario(in, scenario);
    } catch (const Error& e) {
      throw DataError(a.world + ": " + e.what());
    }
  }
  if (a.route_len_m) scenario.train_route_m = *a.route_len_m;
  if (a.test_len_m) scenario.test_route_m = *a.test_len_m;

  const sim::Drives drives = sim::simulate(scenario, a.seed);
  std::ostringstream train;
  write_trace(drives.train, train);
  write_output(a.out, train.str());
  if (!a.test_out.empty()) {
    std::ostringstream test;
    write_trace(drives.test, test);
    write_output(a.test_out, test.str());
  }
  err << "simulated " << drives.train.scans.size() << " scans";
  if (!a.test_out.empty()) err << " + " << drives.test.scans.size() << " test scans";
  err << " over " << drives.world.towers.size() << " towers\n";
}

struct BuildArgs {
  std::string trace;
  std::string out;
  double cell_length_m = 20.0;
  double alpha = 1.0;
};

void do_build(const BuildArgs& a, std::ostream& err) {
  const ParsedTrace parsed = read_trace(a.trace, err);
  require_truth(parsed, a.trace);
  const GridSpec grid = build_grid(parsed.trace, a.cell_length_m);
  const ProbabilisticFingerprint fp =
      build_probabilistic_fingerprint(parsed.trace, grid, a.alpha);
  std::ostringstream out;
  save_fingerprint(fp, out);
  write_output(a.out, out.str());
  err << "fingerprint: " << fp.cells.size() << " non-empty cells on a " << grid.n_cols << "x"
      << grid.n_rows << " grid\n";
}

struct LocateArgs {
  std::string fp;
  std::string scan;
  std::string train;
  std::string method = "cellsense";
  std::string k = "ALL";
  bool k_given = false;
  std::size_t n = 1;
  std::uint64_t seed = kDefaultSeed;
};

void do_locate(const LocateArgs& a, std::ostream& out, std::ostream& err) {
  Method method;
  try {
    method = parse_method(a.method);
  } catch (const Error&) {
    throw UsageError("--method: unknown method '" + a.method + "'");
  }
  if (method != Method::cellsense && a.train.empty()) {
    throw UsageError("--method " + a.method + " needs --train to build its radio map");
  }
  TopK k = parse_k(a.k);
  if (method == Method::knn && !a.k_given) k = TopK::of(eval::CompareOptions{}.knn_k);

  const ProbabilisticFingerprint fp = read_fingerprint(a.fp);
  const ParsedTrace scans = read_trace(a.scan, err);
  const GeoPoint origin = fp.grid.origin;

  std::optional<ParsedTrace> train;
  if (method != Method::cellsense) {
    train = read_trace(a.train, err);
    require_truth(*train, a.train);
  }

  eval::LocateFn locate;
  std::optional<CellSenseLocator> cs;
  std::optional<DeterministicFingerprint> dfp;
  std::optional<TowerDb> db;
  std::optional<GpRadioMap> gp;
  const EstimatorParams params{k, a.n};
  switch (method) {
    case Method::cellsense:
      cs.emplace(fp);
      locate = [&](auto w) { return cs->locate(w, params); };
      break;
    case Method::knn: {
      dfp = build_deterministic_fingerprint(train->trace, origin);
      const std::size_t kk = k.resolve(dfp->points.size());
      locate = [&, kk](auto w) { return knn_locate(*dfp, w.back(), kk); };
      break;
    }
    case Method::cellid:
      db = build_tower_db(train->trace, origin);
      locate = [&](auto w) { return cellid_locate(*db, w.back()); };
      break;
    case Method::gp: {
      GpTrainingOptions opts;
      opts.seed = a.seed;
      gp.emplace(fit_tower_models(train->trace, origin, opts), candidates_from(fp), origin);
      locate = [&](auto w) { return gp->locate(w.back(), k); };
      break;
    }
  }

  const auto windows = eval::make_windows(scans.trace, a.n);
  std::ostringstream text;
  text << "scan_id,lat,lon,method\n";
  std::size_t unlocated = 0;
  for (const auto& w : windows) {
    text << w.back().scan_id << ',';
    try {
      const LocationEstimate est = locate(w);
      text << fixed6(est.geo.lat) << ',' << fixed6(est.geo.lon);
    } catch (const NotLocatable&) {
      text << ',';
      ++unlocated;
    }
    text << ',' << to_string(method) << '\n';
  }
  out << text.str();
  if (unlocated > 0) {
    err << "note: " << unlocated << " of " << windows.size()
        << " window(s) not locatable (empty lat/lon)\n";
  }
  if (windows.empty()) err << "note: fewer than " << a.n << " scans, no windows\n";
}

struct EvaluateArgs {
  std::string train;
  std::string test;
  std::string out;
  std::string cdf_dir;
  std::string methods = "all";
  std::string k = "ALL";
  std::size_t knn_k = 3;
  std::size_t n = 1;
  double cell_length_m = 20.0;
  double alpha = 1.0;
  unsigned threads = 1;
  std::uint64_t seed = kDefaultSeed;
};

void do_evaluate(const EvaluateArgs& a, std::ostream& err) {
  eval::CompareOptions opts;
  opts.methods = parse_methods(a.methods);
  opts.k = parse_k(a.k);
  opts.knn_k = a.knn_k;
  opts.n_samples = a.n;
  opts.cell_length_m = a.cell_length_m;
  opts.alpha = a.alpha;
  opts.gp.seed = a.seed;
  opts.eval.threads = a.threads;

  const ParsedTrace train = read_trace(a.train, err);
  require_truth(train, a.train);
  const ParsedTrace test = read_trace(a.test, err);
  require_truth(test, a.test);

  const auto reports = eval::compare_all(train.trace, test.trace, opts);
  std::ostringstream csv;
  eval::write_report_csv(csv, reports);
  write_output(a.out, csv.str());
  if (!a.cdf_dir.empty()) {
    for (const auto& r : reports) {
      std::ostringstream cdf;
      eval::write_cdf_csv(cdf, r);
      write_output((fs::path(a.cdf_dir) / ("cdf_" + std::string(to_string(r.method)) + ".csv"))
                       .string(),
                   cdf.str());
    }
  }
  for (const auto& r : reports) {
    if (r.n_not_locatable > 0) {
      err << "note: " << to_string(r.method) << ": " << r.n_not_locatable
          << " window(s) not locatable\n";
    }
  }
}

struct SweepArgs {
  std::string train;
  std::string test;
  std::string out;
  std::string param;
  std::vector<std::string> values;
  double cell_length_m = 20.0;
  double alpha = 1.0;
  unsigned threads = 1;
};

void do_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  const ParsedTrace train = read_trace(a.train, err);
  require_truth(train, a.train);
  const ParsedTrace test = read_trace(a.test, err);
  require_truth(test, a.test);
  const eval::EvalOptions opts{a.threads};

  std::ostringstream csv;
  if (a.param == "k") {
    std::vector<TopK> ks;
    for (const auto& v : a.values) ks.push_back(parse_k(v));
    const auto fp = build_probabilistic_fingerprint(
        train.trace, build_grid(train.trace, a.cell_length_m), a.alpha);
    csv << "k,median_m\n";
    for (const auto& row : eval::sweep_k(fp, test.trace, ks, opts)) {
      csv << row.k.str() << ',' << text::format_rounded(row.median_error_m, 3) << '\n';
    }
  } else if (a.param == "n") {
    std::vector<std::size_t> ns;
    for (const auto& v : a.values) {
      const auto n = text::parse_uint(v);
      if (!n || *n == 0) throw UsageError("--values: N must be a positive integer, got " + v);
      ns.push_back(static_cast<std::size_t>(*n));
    }
    const auto fp = build_probabilistic_fingerprint(
        train.trace, build_grid(train.trace, a.cell_length_m), a.alpha);
    csv << "n,median_m,windows\n";
    for (const auto& row : eval::sweep_n(fp, test.trace, ns, opts)) {
      csv << row.n << ',' << text::format_rounded(row.median_error_m, 3) << ',' << row.windows
          << '\n';
    }
  } else {
    std::vector<double> lengths;
    for (const auto& v : a.values) {
      const auto l = text::parse_double(v);
      if (!l || !(*l > 0.0)) throw UsageError("--values: cell length must be positive, got " + v);
      lengths.push_back(*l);
    }
    csv << "cell_length,median_m,cell_count\n";
    for (const auto& row : eval::sweep_grid(train.trace, test.trace, lengths, a.alpha, opts)) {
      csv << text::format_double(row.cell_length_m) << ','
          << text::format_rounded(row.median_error_m, 3) << ',' << row.cell_count << '\n';
    }
  }
  if (a.out.empty()) {
    out << csv.str();
  } else {
    write_output(a.out, csv.str());
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cell-tower RSSI fingerprinting: simulate, build, locate, evaluate, sweep",
               "cellsense"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Synthesize war-driving traces");
  simulate->add_option("--preset", sim_args.preset, "World preset")
      ->check(CLI::IsMember({"urban", "rural"}))
      ->capture_default_str();
  simulate->add_option("--out", sim_args.out, "Training drive trace CSV")
      ->required()
      ->check(kWritablePath);
  simulate->add_option("--test-out", sim_args.test_out,
                       "Also write an independent test drive over the same world")
      ->check(kWritablePath);
  simulate->add_option("--world", sim_args.world, "key=value world/scenario overrides")
      ->check(CLI::ExistingFile);
  simulate->add_option("--seed", sim_args.seed, "Seed")->capture_default_str();
  simulate->add_option("--route-len-m", sim_args.route_len_m,
                       "Training drive length (default: one full sweep)")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--test-len-m", sim_args.test_len_m, "Test drive length")
      ->check(CLI::PositiveNumber);

  BuildArgs build_args;
  auto* build = app.add_subcommand("build", "Build the gridded fingerprint");
  build->add_option("--trace", build_args.trace, "Training trace CSV")
      ->required()
      ->check(CLI::ExistingFile);
  build->add_option("--cell-length", build_args.cell_length_m, "Grid cell side (m)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  build->add_option("--out", build_args.out, "Fingerprint CSV")->required()->check(kWritablePath);
  build->add_option("--alpha", build_args.alpha, "Laplace pseudo-count")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  LocateArgs loc_args;
  auto* locate = app.add_subcommand("locate", "Estimate one location per window of scans");
  locate->add_option("--fp", loc_args.fp, "Fingerprint CSV")->required()->check(CLI::ExistingFile);
  locate->add_option("--scan", loc_args.scan, "Trace CSV to localize")
      ->required()
      ->check(CLI::ExistingFile);
  locate->add_option("--train", loc_args.train, "Training trace (knn, cellid, gp)")
      ->check(CLI::ExistingFile);
  auto* k_opt = locate->add_option("--k", loc_args.k, "Top-K cells to average, or ALL")
                    ->capture_default_str();
  locate->add_option("--n", loc_args.n, "Scans per estimate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  locate->add_option("--method", loc_args.method, "cellsense|knn|cellid|gp")
      ->check(CLI::IsMember({"cellsense", "knn", "cellid", "gp"}))
      ->capture_default_str();
  locate->add_option("--seed", loc_args.seed, "Seed (gp subsampling)")->capture_default_str();

  EvaluateArgs ev_args;
  auto* evaluate = app.add_subcommand("evaluate", "Compare all methods on a test trace");
  evaluate->add_option("--train", ev_args.train, "Training trace CSV")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--test", ev_args.test, "Test trace CSV")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--out", ev_args.out, "Report CSV")->required()->check(kWritablePath);
  evaluate->add_option("--cdf-dir", ev_args.cdf_dir, "Write cdf_<method>.csv files here")
      ->check(CLI::ExistingDirectory);
  evaluate->add_option("--methods", ev_args.methods, "all or a comma list")
      ->capture_default_str();
  evaluate->add_option("--k", ev_args.k, "Top-K for cellsense and gp")->capture_default_str();
  evaluate->add_option("--knn-k", ev_args.knn_k, "Neighbours for knn")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  evaluate->add_option("--n", ev_args.n, "Scans per cellsense estimate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  evaluate->add_option("--cell-length", ev_args.cell_length_m, "Grid cell side (m)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  evaluate->add_option("--alpha", ev_args.alpha, "Laplace pseudo-count")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  evaluate->add_option("--threads", ev_args.threads, "Worker threads, 0 = all cores")
      ->capture_default_str();
  evaluate->add_option("--seed", ev_args.seed, "Seed (gp subsampling)")->capture_default_str();

  SweepArgs sw_args;
  auto* sweep = app.add_subcommand("sweep", "Median error as one parameter varies");
  sweep->add_option("--train", sw_args.train, "Training trace CSV")
      ->required()
      ->check(CLI::ExistingFile);
  sweep->add_option("--test", sw_args.test, "Test trace CSV")->required()->check(CLI::ExistingFile);
  sweep->add_option("--param", sw_args.param, "k, n or grid")
      ->required()
      ->check(CLI::IsMember({"k", "n", "grid"}));
  sweep->add_option("--values", sw_args.values, "Values, space or comma separated")
      ->required()
      ->delimiter(',');
  sweep->add_option("--out", sw_args.out, "CSV (default stdout)")->check(kWritablePath);
  sweep->add_option("--cell-length", sw_args.cell_length_m, "Cell side for k and n sweeps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sweep->add_option("--alpha", sw_args.alpha, "Laplace pseudo-count")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sweep->add_option("--threads", sw_args.threads, "Worker threads, 0 = all cores")
      ->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    // Prints help for --help (exit 0) or the parse error otherwise.
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }
  loc_args.k_given = k_opt->count() > 0;

  try {
    if (simulate->parsed()) do_simulate(sim_args, err);
    if (build->parsed()) do_build(build_args, err);
    if (locate->parsed()) do_locate(loc_args, out, err);
    if (evaluate->parsed()) do_evaluate(ev_args, err);
    if (sweep->parsed()) do_sweep(sw_args, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace cellsense::cli

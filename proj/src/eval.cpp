#include "cellsense/eval.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <thread>

#include "cellsense/error.hpp"
#include "text.hpp"

namespace cellsense::eval {

std::vector<std::span<const RssiScan>> make_windows(const Trace& trace, std::size_t n) {
  if (n == 0) throw InvalidInput("window size must be at least 1");
  std::vector<std::span<const RssiScan>> out;
  const std::span<const RssiScan> all(trace.scans);
  for (std::size_t start = 0; start + n <= all.size(); start += n) {
    out.push_back(all.subspan(start, n));
  }
  return out;
}

std::uint64_t hash_windows(std::span<const std::span<const RssiScan>> windows) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& w : windows) {
    mix(w.size());
    for (const auto& s : w) mix(s.scan_id);
  }
  return h;
}

std::vector<CdfPoint> error_cdf(std::vector<double> errors) {
  std::sort(errors.begin(), errors.end());
  std::vector<CdfPoint> cdf(errors.size());
  const auto n = static_cast<double>(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    cdf[i] = {errors[i], static_cast<double>(i + 1) / n};
  }
  if (!cdf.empty()) cdf.back().fraction = 1.0;
  return cdf;
}

double median_error(std::vector<double> errors) {
  if (errors.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = errors.begin() + static_cast<std::ptrdiff_t>((errors.size() - 1) / 2);
  std::nth_element(errors.begin(), mid, errors.end());
  return *mid;
}

double degradation_pct(double median_m, double baseline_median_m) {
  if (!(baseline_median_m > 0.0)) throw InvalidInput("baseline median must be positive");
  return 100.0 * (median_m - baseline_median_m) / baseline_median_m;
}

namespace {

struct WindowResult {
  bool located = false;
  double error_m = 0.0;
  std::uint64_t runtime_ns = 0;
};

// Distance between the estimate and the truth, measured in a frame centred
// on the truth so every estimator is scored identically whatever its origin.
double location_error(const LocationEstimate& est, const GeoPoint& truth) {
  return distance(project(est.geo, truth), LocalPoint{0.0, 0.0});
}

WindowResult run_window(const LocateFn& locate, std::span<const RssiScan> window) {
  const RssiScan& last = window.back();
  if (!last.truth) {
    throw InvalidInput("scan_id " + std::to_string(last.scan_id) + " has no ground truth");
  }
  WindowResult r;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const LocationEstimate est = locate(window);
    const auto t1 = std::chrono::steady_clock::now();
    r.runtime_ns = static_cast<std::uint64_t>(std::max<std::int64_t>(
        1, std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
    r.located = true;
    r.error_m = location_error(est, *last.truth);
  } catch (const NotLocatable&) {
    r.located = false;
  }
  return r;
}

}  // namespace

EvalReport evaluate(const LocateFn& locate, Method method, const Trace& test,
                    const EstimatorParams& params, double cell_length_m,
                    const EvalOptions& options) {
  if (test.scans.empty()) throw InvalidInput("test trace is empty");
  const auto windows = make_windows(test, params.n_samples);
  if (windows.empty()) throw InvalidInput("test trace is shorter than one window");

  std::vector<WindowResult> results(windows.size());
  unsigned threads = options.threads == 0 ? std::thread::hardware_concurrency() : options.threads;
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(windows.size())));
  if (threads == 1) {
    for (std::size_t i = 0; i < windows.size(); ++i) results[i] = run_window(locate, windows[i]);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> failures(threads);
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < windows.size(); i += threads) {
            results[i] = run_window(locate, windows[i]);
          }
        } catch (...) {
          failures[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  }

  EvalReport rep;
  rep.method = method;
  rep.params = params;
  rep.cell_length_m = cell_length_m;
  rep.n_windows = windows.size();
  rep.windows_hash = hash_windows(windows);
  std::vector<double> errors;
  double runtime = 0.0;
  for (const auto& r : results) {
    if (!r.located) {
      ++rep.n_not_locatable;
      continue;
    }
    errors.push_back(r.error_m);
    runtime += static_cast<double>(r.runtime_ns);
  }
  rep.n_estimates = errors.size();
  if (errors.empty()) {
    rep.median_error_m = rep.mean_error_m = rep.mean_runtime_ns =
        std::numeric_limits<double>::quiet_NaN();
    return rep;
  }
  rep.mean_error_m =
      std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
  rep.mean_runtime_ns = runtime / static_cast<double>(errors.size());
  rep.median_error_m = median_error(errors);
  rep.error_cdf = error_cdf(std::move(errors));
  return rep;
}

std::vector<KSweepRow> sweep_k(const ProbabilisticFingerprint& fp, const Trace& test,
                               std::span<const TopK> ks, const EvalOptions& options) {
  const CellSenseLocator locator(fp);
  std::vector<KSweepRow> rows;
  for (const TopK k : ks) {
    const EstimatorParams params{k, 1};
    const auto rep = evaluate([&](auto w) { return locator.locate(w, params); },
                              Method::cellsense, test, params, fp.grid.cell_length_m, options);
    rows.push_back({k, rep.median_error_m});
  }
  return rows;
}

std::vector<GridSweepRow> sweep_grid(const Trace& train, const Trace& test,
                                     std::span<const double> lengths, double alpha,
                                     const EvalOptions& options) {
  std::vector<GridSweepRow> rows;
  for (const double length : lengths) {
    const auto fp = build_probabilistic_fingerprint(train, build_grid(train, length), alpha);
    const CellSenseLocator locator(fp);
    const EstimatorParams params{TopK::all(), 1};
    const auto rep = evaluate([&](auto w) { return locator.locate(w, params); },
                              Method::cellsense, test, params, length, options);
    rows.push_back({length, rep.median_error_m, fp.cells.size()});
  }
  return rows;
}

std::vector<NSweepRow> sweep_n(const ProbabilisticFingerprint& fp, const Trace& test,
                               std::span<const std::size_t> ns, const EvalOptions& options) {
  const CellSenseLocator locator(fp);
  std::vector<NSweepRow> rows;
  for (const std::size_t n : ns) {
    const EstimatorParams params{TopK::all(), n};
    const auto rep = evaluate([&](auto w) { return locator.locate(w, params); },
                              Method::cellsense, test, params, fp.grid.cell_length_m, options);
    rows.push_back({n, rep.median_error_m, rep.n_windows});
  }
  return rows;
}

std::vector<EvalReport> compare_all(const Trace& train, const Trace& test,
                                    const CompareOptions& options) {
  if (options.methods.empty()) throw InvalidInput("no methods selected");
  const GridSpec grid = build_grid(train, options.cell_length_m);
  const ProbabilisticFingerprint fp = build_probabilistic_fingerprint(train, grid, options.alpha);
  const GeoPoint origin = grid.origin;
  const EstimatorParams window_params{options.k, options.n_samples};

  std::vector<EvalReport> reports;
  for (const Method m : kAllMethods) {
    if (!options.methods.contains(m)) continue;
    switch (m) {
      case Method::cellid: {
        const TowerDb db = build_tower_db(train, origin);
        reports.push_back(evaluate(
            [&](auto w) { return cellid_locate(db, w.back()); }, m, test,
            {TopK::of(1), options.n_samples}, options.cell_length_m, options.eval));
        reports.back().params.k = TopK::of(1);
        break;
      }
      case Method::knn: {
        const DeterministicFingerprint dfp = build_deterministic_fingerprint(train, origin);
        reports.push_back(evaluate([&](auto w) { return knn_locate(dfp, w.back(), options.knn_k); },
                                   m, test, {TopK::of(options.knn_k), options.n_samples},
                                   options.cell_length_m, options.eval));
        break;
      }
      case Method::gp: {
        const GpRadioMap map(fit_tower_models(train, origin, options.gp), candidates_from(fp),
                             origin);
        reports.push_back(evaluate([&](auto w) { return map.locate(w.back(), options.k); }, m,
                                   test, window_params, options.cell_length_m, options.eval));
        break;
      }
      case Method::cellsense: {
        const CellSenseLocator locator(fp);
        reports.push_back(evaluate([&](auto w) { return locator.locate(w, window_params); }, m,
                                   test, window_params, options.cell_length_m, options.eval));
        break;
      }
    }
  }

  const auto cs = std::find_if(reports.begin(), reports.end(),
                               [](const EvalReport& r) { return r.method == Method::cellsense; });
  if (cs != reports.end() && cs->median_error_m > 0.0) {
    const double base = cs->median_error_m;
    for (auto& r : reports) r.degradation_pct = degradation_pct(r.median_error_m, base);
  }
  return reports;
}

void write_report_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << "method,param_k,param_n,cell_length,n,median_m,mean_m,mean_runtime_ns,degradation_pct\n";
  for (const auto& r : reports) {
    out << to_string(r.method) << ',' << r.params.k.str() << ',' << r.params.n_samples << ','
        << text::format_rounded(r.cell_length_m, 1) << ',' << r.n_estimates << ',' << text::format_rounded(r.median_error_m, 3)
        << ',' << text::format_rounded(r.mean_error_m, 3) << ',' << text::format_rounded(r.mean_runtime_ns, 0) << ','
        << (r.degradation_pct ? text::format_rounded(*r.degradation_pct, 1) : "") << '\n';
  }
}

void write_cdf_csv(std::ostream& out, const EvalReport& report) {
  out << "error_m,cumulative_fraction\n";
  for (const auto& p : report.error_cdf) {
    out << text::format_rounded(p.error_m, 3) << ',' << text::format_rounded(p.fraction, 6) << '\n';
  }
}

}  // namespace cellsense::eval

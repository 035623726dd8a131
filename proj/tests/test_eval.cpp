#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "cellsense/error.hpp"
#include "cellsense/eval.hpp"
#include "cellsense/simworld.hpp"

using namespace cellsense;
using namespace cellsense::eval;

namespace {

Trace line_trace(std::size_t n) {
  Trace t;
  const GeoPoint origin{31.2, 29.9};
  for (std::size_t i = 0; i < n; ++i) {
    RssiScan s;
    s.scan_id = i;
    s.timestamp_ms = i * 1000;
    s.truth = unproject({static_cast<double>(i) * 10.0, 0.0}, origin);
    s.readings = {{"A", -70, true}};
    t.scans.push_back(s);
  }
  return t;
}

LocationEstimate at(const GeoPoint& g) {
  LocationEstimate e;
  e.geo = g;
  return e;
}

sim::Drives small_drives(const char* preset, std::uint64_t seed) {
  sim::Scenario sc = sim::preset(preset);
  sc.train_route_m = 12000.0;
  sc.test_route_m = 1500.0;
  return sim::simulate(sc, seed);
}

}  // namespace

TEST_CASE("median is the lower order statistic") {
  CHECK(median_error({1.0, 2.0, 100.0}) == 2.0);
  CHECK(median_error({100.0, 1.0, 2.0}) == 2.0);
  CHECK(median_error({4.0, 1.0, 3.0, 2.0}) == 2.0);
  CHECK(std::isnan(median_error({})));
}

TEST_CASE("error CDF is a distribution function") {
  const auto cdf = error_cdf({5.0, 1.0, 3.0, 3.0, 10.0});
  REQUIRE(cdf.size() == 5);
  for (std::size_t i = 1; i < cdf.size(); ++i) {
    CHECK(cdf[i].error_m >= cdf[i - 1].error_m);
    CHECK(cdf[i].fraction >= cdf[i - 1].fraction);
  }
  CHECK(cdf.back().error_m == 10.0);
  CHECK(cdf.back().fraction == 1.0);
  CHECK(cdf[0].fraction == doctest::Approx(0.2));
  CHECK(error_cdf({}).empty());
}

TEST_CASE("an estimator that returns the truth has zero error") {
  const Trace t = line_trace(9);
  const auto rep = evaluate([](auto w) { return at(*w.back().truth); }, Method::knn, t,
                            {TopK::all(), 1});
  CHECK(rep.n_windows == 9);
  CHECK(rep.n_estimates == 9);
  CHECK(rep.median_error_m == 0.0);
  CHECK(rep.mean_error_m == 0.0);
  CHECK(rep.error_cdf.back().fraction == 1.0);
  CHECK(rep.mean_runtime_ns > 0.0);
}

TEST_CASE("windows: count, truth from the last scan, partial tail dropped") {
  const Trace t = line_trace(10);
  CHECK(make_windows(t, 1).size() == 10);
  CHECK(make_windows(t, 3).size() == 3);
  CHECK(make_windows(t, 4).size() == 2);
  CHECK(make_windows(t, 11).empty());
  CHECK_THROWS_AS(make_windows(t, 0), InvalidInput);
  const auto w = make_windows(t, 3);
  CHECK(w[1].front().scan_id == 3);
  CHECK(w[1].back().scan_id == 5);

  // Estimate = first scan of the window: error = (N - 1) * 10 m.
  const auto rep = evaluate([](auto win) { return at(*win.front().truth); }, Method::cellsense,
                            t, {TopK::all(), 3});
  CHECK(rep.n_windows == 3);
  CHECK(rep.median_error_m == doctest::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("evaluate errors and not-locatable windows") {
  CHECK_THROWS_AS(evaluate([](auto) { return LocationEstimate{}; }, Method::knn, Trace{}, {}),
                  InvalidInput);
  const Trace t = line_trace(6);
  const auto rep = evaluate(
      [](auto w) -> LocationEstimate {
        if (w.back().scan_id % 2 == 0) throw NotLocatable("no");
        return at(*w.back().truth);
      },
      Method::cellid, t, {});
  CHECK(rep.n_not_locatable == 3);
  CHECK(rep.n_estimates == 3);

  Trace no_truth = line_trace(2);
  no_truth.scans[1].truth.reset();
  CHECK_THROWS_AS(evaluate([](auto w) { return at(*w.back().truth); }, Method::knn, no_truth, {}),
                  InvalidInput);
}

TEST_CASE("window hash identifies the window list") {
  const Trace t = line_trace(12);
  CHECK(hash_windows(make_windows(t, 2)) == hash_windows(make_windows(t, 2)));
  CHECK(hash_windows(make_windows(t, 2)) != hash_windows(make_windows(t, 3)));
  Trace u = t;
  u.scans[4].scan_id = 99;
  CHECK(hash_windows(make_windows(t, 2)) != hash_windows(make_windows(u, 2)));
}

TEST_CASE("multi-threaded evaluation gives the same errors") {
  const auto d = small_drives("urban", 3);
  const auto fp = build_probabilistic_fingerprint(d.train, build_grid(d.train, 20.0));
  const CellSenseLocator loc(fp);
  const auto run = [&](unsigned threads) {
    return evaluate([&](auto w) { return loc.locate(w, {}); }, Method::cellsense, d.test, {},
                    20.0, {threads});
  };
  const auto a = run(1);
  const auto b = run(3);
  CHECK(a.median_error_m == b.median_error_m);
  CHECK(a.mean_error_m == b.mean_error_m);
  CHECK(a.windows_hash == b.windows_hash);
}

TEST_CASE("sweeps") {
  const auto d = small_drives("urban", 4);
  const auto fp = build_probabilistic_fingerprint(d.train, build_grid(d.train, 20.0));
  const TopK ks[] = {TopK::of(1), TopK::all()};
  const auto k_rows = sweep_k(fp, d.test, ks);
  REQUIRE(k_rows.size() == 2);
  CHECK(k_rows[1].k.is_all());
  const auto k_again = sweep_k(fp, d.test, ks);
  CHECK(k_again[0].median_error_m == k_rows[0].median_error_m);
  CHECK(k_again[1].median_error_m == k_rows[1].median_error_m);

  const double lengths[] = {20.0, 100.0, 400.0, 1600.0};
  const auto g_rows = sweep_grid(d.train, d.test, lengths);
  REQUIRE(g_rows.size() == 4);
  for (std::size_t i = 1; i < g_rows.size(); ++i) {
    CHECK(g_rows[i].cell_count <= g_rows[i - 1].cell_count);
  }

  const std::size_t ns[] = {1, 2, 4};
  const auto n_rows = sweep_n(fp, d.test, ns);
  CHECK(n_rows[0].windows == d.test.scans.size());
  CHECK(n_rows[2].windows == d.test.scans.size() / 4);
}

TEST_CASE("compare_all: order, shared windows, degradation, csv") {
  const auto d = small_drives("rural", 5);
  CompareOptions opt;
  opt.gp.fixed_hyper = GpHyper{200.0, 8.0, 4.0};
  opt.gp.max_points_per_tower = 200;
  const auto reps = compare_all(d.train, d.test, opt);
  REQUIRE(reps.size() == 4);
  CHECK(reps[0].method == Method::cellid);
  CHECK(reps[1].method == Method::knn);
  CHECK(reps[2].method == Method::gp);
  CHECK(reps[3].method == Method::cellsense);
  for (const auto& r : reps) {
    CHECK(r.windows_hash == reps[0].windows_hash);
    CHECK(r.n_windows == d.test.scans.size());
    REQUIRE(r.degradation_pct.has_value());
  }
  CHECK(*reps[3].degradation_pct == 0.0);

  std::ostringstream csv;
  write_report_csv(csv, reps);
  const std::string s = csv.str();
  CHECK(s.rfind("method,param_k,param_n,cell_length,n,median_m,mean_m,mean_runtime_ns,", 0) == 0);
  CHECK(s.find("\ncellsense,ALL,1,20.0,") != std::string::npos);
  CHECK(s.find("\nknn,3,1,") != std::string::npos);

  std::ostringstream cdf;
  write_cdf_csv(cdf, reps[3]);
  CHECK(cdf.str().rfind("error_m,cumulative_fraction\n", 0) == 0);
  CHECK(cdf.str().find(",1.000000\n") != std::string::npos);

  CompareOptions some;
  some.methods = {Method::knn};
  const auto only = compare_all(d.train, d.test, some);
  REQUIRE(only.size() == 1);
  CHECK_FALSE(only[0].degradation_pct.has_value());
  some.methods.clear();
  CHECK_THROWS_AS(compare_all(d.train, d.test, some), InvalidInput);
}

TEST_CASE("compare_all with N > 1 windows every method alike") {
  const auto d = small_drives("urban", 6);
  CompareOptions opt;
  opt.n_samples = 3;
  opt.methods = {Method::cellid, Method::knn, Method::cellsense};
  const auto reps = compare_all(d.train, d.test, opt);
  for (const auto& r : reps) {
    CHECK(r.n_windows == d.test.scans.size() / 3);
    CHECK(r.windows_hash == reps[0].windows_hash);
  }
}

TEST_CASE("degradation percentages reproduce reference figures") {
  // Reference medians (m) and their quoted degradation figures. The
  // quoted percentages were evidently rounded from slightly different
  // medians, so agreement is checked to 2 percentage points.
  struct Row {
    double median, baseline, printed;
  };
  const Row rows[] = {
      {327.06, 105.11, 211.4}, {130.57, 105.11, 23.8}, {270.60, 105.11, 157.1},
      {354.38, 30.05, 1081.25}, {89.41, 30.05, 197.5}, {56.01, 30.05, 86.4},
  };
  for (const Row& r : rows) {
    CHECK(std::abs(degradation_pct(r.median, r.baseline) - r.printed) <= 2.0);
  }
  CHECK(degradation_pct(30.05, 30.05) == 0.0);
  CHECK_THROWS_AS(degradation_pct(1.0, 0.0), InvalidInput);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include "cellsense/error.hpp"
#include "cellsense/gp.hpp"
#include "cellsense/simworld.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cellsense;
using testutil::random_points;
using testutil::random_targets;

namespace {

oracle::GpData as_oracle(const GpModel& m) {
  return {m.inputs(), m.targets(), m.hyper().length_scale_m, m.hyper().sigma_f_db,
          m.hyper().sigma_n_db, m.prior_mean() != 0.0};
}

}  // namespace

TEST_CASE("kernel values") {
  const GpHyper h{100.0, 2.0, 1.0};
  CHECK(kernel({5, 5}, {5, 5}, h) == 4.0);
  CHECK(std::abs(kernel({0, 0}, {60, 80}, h) - 2.42612) < 1e-5);
  std::mt19937_64 rng(1);
  const auto p = random_points(rng, 100, 1000.0);
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    CHECK(kernel(p[i], p[i + 1], h) == kernel(p[i + 1], p[i], h));
  }
}

TEST_CASE("n=1 closed form with zero prior mean") {
  const GpHyper h{200.0, 8.0, 4.0};
  const auto m = fit({{3, 4}}, {-70.0}, h, PriorMean::zero);
  const auto p = m.predict({3, 4});
  CHECK(p.mean_dbm == doctest::Approx(-70.0 * 64.0 / (64.0 + 16.0)).epsilon(1e-12));
  CHECK(p.variance_db2 == doctest::Approx(64.0 - 64.0 * 64.0 / 80.0).epsilon(1e-12));
  CHECK(m.predict_mean({3, 4}) == doctest::Approx(p.mean_dbm).epsilon(1e-12));
}

TEST_CASE("empirical prior: far-field prediction reverts to the target mean") {
  const GpHyper h{50.0, 8.0, 4.0};
  const auto m = fit({{0, 0}, {10, 0}, {0, 10}}, {-60.0, -70.0, -80.0}, h);
  CHECK(m.prior_mean() == doctest::Approx(-70.0));
  const auto far = m.predict({1e5, 1e5});
  CHECK(far.mean_dbm == doctest::Approx(-70.0));
  CHECK(far.variance_db2 == doctest::Approx(64.0));
  const auto zero = fit({{0, 0}}, {-70.0}, h, PriorMean::zero).predict({1e5, 0});
  CHECK(std::abs(zero.mean_dbm) < 1e-12);
}

TEST_CASE("near-noiseless fit interpolates the training targets") {
  std::mt19937_64 rng(2);
  const auto x = random_points(rng, 30, 2000.0);
  const auto y = random_targets(rng, 30);
  for (const PriorMean prior : {PriorMean::zero, PriorMean::empirical}) {
    const auto m = fit(x, y, {100.0, 8.0, 1e-6}, prior);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(std::abs(m.predict(x[i]).mean_dbm - y[i]) < 1e-3);
      CHECK(std::abs(m.predict_mean(x[i]) - y[i]) < 1e-3);
    }
  }
}

TEST_CASE("duplicate training points are regularised by the noise term") {
  const auto m = fit({{1, 1}, {1, 1}, {1, 1}}, {-70.0, -72.0, -74.0}, {200.0, 8.0, 4.0});
  CHECK(m.size() == 3);
  for (double p : m.pivots()) CHECK(p > 0.0);
}

TEST_CASE("fit rejects bad input") {
  CHECK_THROWS_AS(fit({}, {}, {}), InvalidInput);
  CHECK_THROWS_AS(fit({{0, 0}}, {1.0, 2.0}, {}), InvalidInput);
  CHECK_THROWS_AS(fit({{0, 0}}, {1.0}, {0.0, 8.0, 4.0}), InvalidInput);
  CHECK_THROWS_AS(fit({{NAN, 0}}, {1.0}, {}), NumericError);
  CHECK_THROWS_AS(fit({{0, 0}}, {INFINITY}, {}), NumericError);
}

TEST_CASE("posterior mean and variance match the dense elimination oracle") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng() % 50;
    const auto x = random_points(rng, n, 1500.0);
    const auto y = random_targets(rng, n);
    const GpHyper h{kLengthScaleGridM[rng() % 5], kSigmaFGridDb[rng() % 4],
                    kSigmaNGridDb[rng() % 3]};
    for (const PriorMean prior : {PriorMean::zero, PriorMean::empirical}) {
      const auto m = fit(x, y, h, prior);
      oracle::GpData ref = as_oracle(m);
      ref.centre = prior == PriorMean::empirical;
      for (const auto& q : random_points(rng, 10, 1500.0)) {
        const auto got = m.predict(q);
        const auto want = oracle::gp_predict(ref, q);
        CHECK(std::abs(got.mean_dbm - want.mean) < 1e-9);
        CHECK(std::abs(got.variance_db2 - want.var) < 1e-9);
        CHECK(std::abs(m.predict_mean(q) - want.mean) < 1e-9);
      }
      CHECK(std::abs(m.log_marginal_likelihood() - oracle::gp_lml(ref)) < 1e-9);
    }
  }
}

TEST_CASE("three-point fixture against the oracle") {
  const std::vector<LocalPoint> x = {{0, 0}, {120, 30}, {40, 200}};
  const std::vector<double> y = {-62.0, -75.0, -88.0};
  const GpHyper h{150.0, 8.0, 4.0};
  const auto m = fit(x, y, h, PriorMean::zero);
  const oracle::GpData ref{x, y, 150.0, 8.0, 4.0, false};
  for (const LocalPoint q : {LocalPoint{0, 0}, LocalPoint{60, 60}, LocalPoint{500, -300}}) {
    CHECK(std::abs(m.predict(q).mean_dbm - oracle::gp_predict(ref, q).mean) < 1e-9);
    CHECK(std::abs(m.predict(q).variance_db2 - oracle::gp_predict(ref, q).var) < 1e-9);
  }
}

TEST_CASE("factorisation pivots are positive") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_points(rng, 80, 800.0);
    const auto m = fit(x, random_targets(rng, 80), {800.0, 16.0, 2.0});
    for (double p : m.pivots()) CHECK(p > 0.0);
    const auto& l = m.factor();
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < l.cols(); ++j) CHECK(l(i, j) == 0.0);
    }
  }
}

TEST_CASE("variance is non-negative and bounded by the prior far from data") {
  std::mt19937_64 rng(5);
  const auto x = random_points(rng, 40, 500.0);
  const GpHyper h{100.0, 8.0, 2.0};
  const auto m = fit(x, random_targets(rng, 40), h);
  for (const auto& q : random_points(rng, 200, 3000.0)) {
    const double v = m.predict(q).variance_db2;
    CHECK(v >= 0.0);
    CHECK(v <= 64.0 + 1e-9);
  }
  CHECK(std::abs(m.predict({1e6, 1e6}).variance_db2 - 64.0) < 1e-9);
}

TEST_CASE("posterior mean is linear in the targets under the zero prior") {
  std::mt19937_64 rng(6);
  const auto x = random_points(rng, 25, 600.0);
  const auto y = random_targets(rng, 25);
  std::vector<double> y3;
  for (double v : y) y3.push_back(-2.5 * v);
  const GpHyper h{200.0, 8.0, 4.0};
  const auto a = fit(x, y, h, PriorMean::zero);
  const auto b = fit(x, y3, h, PriorMean::zero);
  for (const auto& q : random_points(rng, 20, 600.0)) {
    CHECK(b.predict(q).mean_dbm == doctest::Approx(-2.5 * a.predict(q).mean_dbm).epsilon(1e-10));
  }
}

TEST_CASE("log marginal likelihood") {
  const GpHyper h{200.0, 8.0, 4.0};
  const auto one = fit({{0, 0}}, {0.0}, h, PriorMean::zero);
  CHECK(one.log_marginal_likelihood() ==
        doctest::Approx(-0.5 * std::log(80.0) - 0.5 * std::log(2.0 * std::numbers::pi))
            .epsilon(1e-12));
  CHECK(log_marginal_likelihood(one) == one.log_marginal_likelihood());

  // Pure noise: a large noise term explains it better than a tiny one.
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 6.0);
  const auto x = random_points(rng, 60, 5000.0);
  std::vector<double> y;
  for (std::size_t i = 0; i < x.size(); ++i) y.push_back(noise(rng));
  const auto loud = fit(x, y, {50.0, 2.0, 8.0}, PriorMean::zero);
  const auto quiet = fit(x, y, {50.0, 2.0, 0.1}, PriorMean::zero);
  CHECK(loud.log_marginal_likelihood() > quiet.log_marginal_likelihood());

  // Order of the training points does not matter.
  std::vector<std::size_t> perm(x.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<LocalPoint> xp;
  std::vector<double> yp;
  for (std::size_t i : perm) {
    xp.push_back(x[i]);
    yp.push_back(y[i]);
  }
  const auto shuffled = fit(xp, yp, {50.0, 2.0, 8.0}, PriorMean::zero);
  CHECK(shuffled.log_marginal_likelihood() ==
        doctest::Approx(loud.log_marginal_likelihood()).epsilon(1e-12));
  CHECK(shuffled.predict({100, 100}).mean_dbm ==
        doctest::Approx(loud.predict({100, 100}).mean_dbm).epsilon(1e-10));
}

TEST_CASE("hyperparameter selection") {
  std::mt19937_64 rng(8);
  const auto x = random_points(rng, 50, 1000.0);
  const std::vector<double> flat(50, -80.0);
  CHECK(select_hyperparams(x, flat).length_scale_m == 800.0);
  CHECK(select_hyperparams(x, flat, PriorMean::zero).length_scale_m == 800.0);

  const auto y = random_targets(rng, 50);
  CHECK(select_hyperparams(x, y) == select_hyperparams(x, y));

  CHECK_THROWS_AS(select_hyperparams(std::span(x).first(4), std::span(y).first(4)),
                  InvalidInput);
  CHECK_THROWS_AS(select_hyperparams(x, std::span(y).first(10)), InvalidInput);
}

TEST_CASE("selection recovers prior-sampled hyperparameters in at least 8 of 10 seeds") {
  const GpHyper truth{200.0, 8.0, 4.0};
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    const auto s = testutil::sample_gp_prior(rng, 200, 1000.0, truth);
    hits += select_hyperparams(s.x, s.y) == truth ? 1 : 0;
  }
  CHECK(hits >= 8);
}

TEST_CASE("tower models and the point cap") {
  sim::Scenario sc = sim::preset("rural");
  sc.train_route_m = 8000.0;
  const auto d = sim::simulate(sc, 3);
  const GeoPoint origin = truth_centroid(d.train);
  GpTrainingOptions opts;
  opts.max_points_per_tower = 60;
  opts.fixed_hyper = GpHyper{200.0, 8.0, 4.0};
  const auto models = fit_tower_models(d.train, origin, opts);
  REQUIRE_FALSE(models.empty());
  std::map<std::string, std::size_t> heard;
  for (const auto& s : d.train.scans) {
    for (const auto& r : s.readings) ++heard[r.tower_id];
  }
  for (const auto& [id, count] : heard) {
    if (count < kMinGpPoints) {
      CHECK_FALSE(models.contains(id));
    } else {
      CHECK(models.at(id).size() == std::min<std::size_t>(count, 60));
      CHECK(models.at(id).hyper() == *opts.fixed_hyper);
    }
  }
  const auto again = fit_tower_models(d.train, origin, opts);
  for (const auto& [id, m] : models) CHECK(again.at(id).inputs() == m.inputs());
  opts.max_points_per_tower = 4;
  CHECK_THROWS_AS(fit_tower_models(d.train, origin, opts), InvalidInput);
}

TEST_CASE("gp_locate examples") {
  const GeoPoint origin{31.2, 29.9};
  GpModels models;
  models.emplace("A", fit({{0, 0}, {100, 0}, {200, 0}, {300, 0}, {400, 0}},
                          {-60.0, -70.0, -80.0, -90.0, -100.0}, {150.0, 16.0, 2.0}));
  const std::vector<GpCandidate> one = {{"c", {123, 45}}};
  RssiScan s;
  s.readings = {{"A", -77, true}};
  CHECK(gp_locate(models, one, s, TopK::all(), origin).location == LocalPoint{123, 45});

  const std::vector<GpCandidate> two = {{"a", {0, 0}}, {"b", {400, 0}}};
  const auto& m = models.at("A");
  s.readings = {{"A", static_cast<int>(std::lround(m.predict({0, 0}).mean_dbm)), true}};
  const auto est = gp_locate(models, two, s, TopK::of(1), origin);
  CHECK(est.location == LocalPoint{0, 0});
  CHECK(est.elapsed_ns > 0);
  CHECK(est.method == Method::gp);

  s.readings = {{"Z", -70, true}};
  CHECK_THROWS_AS(gp_locate(models, two, s, TopK::all(), origin), NotLocatable);
  CHECK_THROWS_AS(gp_locate(models, {}, s, TopK::all(), origin), InvalidInput);
}

TEST_CASE("gp_locate and the radio map match the per-candidate oracle on 25 candidates") {
  std::mt19937_64 rng(9);
  const GeoPoint origin{31.2, 29.9};
  for (int trial = 0; trial < 10; ++trial) {
    GpModels models;
    std::map<std::string, oracle::GpData> ref;
    for (const char* t : {"A", "B", "C"}) {
      const std::size_t n = 5 + rng() % 30;
      const auto x = random_points(rng, n, 200.0);
      const auto y = random_targets(rng, n);
      const GpHyper h{kLengthScaleGridM[rng() % 5], kSigmaFGridDb[rng() % 4],
                      kSigmaNGridDb[rng() % 3]};
      const auto m = fit(x, y, h);
      ref.emplace(t, as_oracle(m));
      ref.at(t).centre = true;
      models.emplace(t, m);
    }
    std::vector<GpCandidate> cands;
    std::vector<LocalPoint> cand_pts;
    for (int r = 0; r < 5; ++r) {
      for (int c = 0; c < 5; ++c) {
        const LocalPoint p{c * 40.0 + 20.0 + (rng() % 100) / 10.0, r * 40.0 + 20.0};
        cands.push_back({"r" + std::to_string(r) + "c" + std::to_string(c), p});
        cand_pts.push_back(p);
      }
    }
    const GpRadioMap map(models, cands, origin);
    for (int q = 0; q < 5; ++q) {
      RssiScan s;
      for (const char* t : {"A", "B", "C", "Q"}) {
        if (rng() % 3 != 0) s.readings.push_back({t, -100 + static_cast<int>(rng() % 45), false});
      }
      if (s.find("A") == nullptr && s.find("B") == nullptr && s.find("C") == nullptr) {
        s.readings.push_back({"B", -80, false});
      }
      for (const std::size_t k : {1u, 3u, 0u}) {
        const TopK tk = k == 0 ? TopK::all() : TopK::of(k);
        const auto got = gp_locate(models, cands, s, tk, origin);
        const auto fast = map.locate(s, tk);
        const auto want = oracle::gp_locate(ref, cand_pts, s, k);
        CHECK(std::abs(got.location.x - want.x) < 1e-9);
        CHECK(std::abs(got.location.y - want.y) < 1e-9);
        CHECK(std::abs(fast.location.x - want.x) < 1e-9);
        CHECK(std::abs(fast.location.y - want.y) < 1e-9);
        double w = 0.0;
        for (const auto& c : fast.top_candidates) w += c.weight;
        CHECK(std::abs(w - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("candidates follow the fingerprint's cell order") {
  ProbabilisticFingerprint fp;
  fp.grid.n_cols = fp.grid.n_rows = 3;
  for (const CellIndex idx : {CellIndex{2, 1}, CellIndex{0, 2}, CellIndex{1, 0}}) {
    FingerprintCell c;
    c.index = idx;
    c.rep_location = {idx.col * 1.0, idx.row * 1.0};
    c.sample_count = 1;
    fp.cells[idx] = c;
  }
  const auto cands = candidates_from(fp);
  REQUIRE(cands.size() == 3);
  CHECK(cands[0].id == "r0c2");
  CHECK(cands[2].location == LocalPoint{1, 2});
}

#include "cellsense/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "cellsense/error.hpp"
#include "cellsense/fingerprint.hpp"
#include "cellsense/random.hpp"
#include "stopwatch.hpp"

namespace cellsense {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

void validate(const GpHyper& h) {
  const auto ok = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!ok(h.length_scale_m) || !ok(h.sigma_f_db) || !ok(h.sigma_n_db)) {
    throw InvalidInput("GP hyperparameters must be positive and finite");
  }
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Fills K + sigma_n^2 I for the given hyperparameters from squared distances.
Eigen::MatrixXd covariance(const Eigen::MatrixXd& sq_dist, const GpHyper& h) {
  const double sf2 = h.sigma_f_db * h.sigma_f_db;
  const double inv = -0.5 / (h.length_scale_m * h.length_scale_m);
  Eigen::MatrixXd k = sf2 * (sq_dist.array() * inv).exp().matrix();
  k.diagonal().array() += h.sigma_n_db * h.sigma_n_db;
  return k;
}

Eigen::MatrixXd squared_distances(std::span<const LocalPoint> pts) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double dx = pts[static_cast<std::size_t>(i)].x - pts[static_cast<std::size_t>(j)].x;
      const double dy = pts[static_cast<std::size_t>(i)].y - pts[static_cast<std::size_t>(j)].y;
      d(i, j) = d(j, i) = dx * dx + dy * dy;
    }
  }
  return d;
}

// log marginal likelihood, or nullopt when the matrix is not positive definite.
std::optional<double> lml_of(const Eigen::MatrixXd& cov, const Eigen::VectorXd& y) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Eigen::MatrixXd& l = llt.matrixLLT();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0)) return std::nullopt;
    log_det += 2.0 * std::log(l(i, i));
  }
  const double fit = y.dot(llt.solve(y));
  return -0.5 * fit - 0.5 * log_det - 0.5 * static_cast<double>(y.size()) * kLog2Pi;
}

}  // namespace

double kernel(const LocalPoint& a, const LocalPoint& b, const GpHyper& hyper) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double l = hyper.length_scale_m;
  return hyper.sigma_f_db * hyper.sigma_f_db * std::exp(-(dx * dx + dy * dy) / (2.0 * l * l));
}

GpModel fit(std::vector<LocalPoint> inputs, std::vector<double> targets, const GpHyper& hyper,
            PriorMean prior) {
  validate(hyper);
  if (inputs.empty()) throw InvalidInput("GP needs at least one training point");
  if (inputs.size() != targets.size()) throw InvalidInput("inputs and targets differ in length");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!std::isfinite(inputs[i].x) || !std::isfinite(inputs[i].y) ||
        !std::isfinite(targets[i])) {
      throw NumericError("GP training data is not finite");
    }
  }

  GpModel m;
  m.hyper_ = hyper;
  m.prior_mean_ = prior == PriorMean::empirical ? mean_of(targets) : 0.0;
  const auto n = static_cast<Eigen::Index>(inputs.size());
  m.xs_.resize(n);
  m.ys_.resize(n);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    m.xs_(i) = inputs[u].x;
    m.ys_(i) = inputs[u].y;
    y(i) = targets[u] - m.prior_mean_;
  }

  const Eigen::LLT<Eigen::MatrixXd> llt(covariance(squared_distances(inputs), hyper));
  if (llt.info() != Eigen::Success) {
    throw NumericError("GP covariance is not positive definite");
  }
  m.factor_ = llt.matrixL();
  m.log_det_ = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = m.factor_(i, i);
    if (!(p > 0.0) || !std::isfinite(p)) throw NumericError("non-positive Cholesky pivot");
    m.log_det_ += 2.0 * std::log(p);
  }
  m.weights_ = llt.solve(y);
  m.data_fit_ = y.dot(m.weights_);
  m.inputs_ = std::move(inputs);
  m.targets_ = std::move(targets);
  return m;
}

std::vector<double> GpModel::pivots() const {
  std::vector<double> p(static_cast<std::size_t>(factor_.rows()));
  for (Eigen::Index i = 0; i < factor_.rows(); ++i) p[static_cast<std::size_t>(i)] = factor_(i, i);
  return p;
}

double GpModel::predict_mean(const LocalPoint& x) const {
  const double l = hyper_.length_scale_m;
  const double sf2 = hyper_.sigma_f_db * hyper_.sigma_f_db;
  // Single fused expression; no temporaries on the per-query path.
  const double s = (((xs_ - x.x).square() + (ys_ - x.y).square()) * (-0.5 / (l * l)))
                       .exp()
                       .cwiseProduct(weights_.array())
                       .sum();
  return prior_mean_ + sf2 * s;
}

GpPrediction GpModel::predict(const LocalPoint& x) const {
  const double l = hyper_.length_scale_m;
  const double sf2 = hyper_.sigma_f_db * hyper_.sigma_f_db;
  const Eigen::ArrayXd d2 = (xs_ - x.x).square() + (ys_ - x.y).square();
  const Eigen::VectorXd k = (sf2 * (d2 * (-0.5 / (l * l))).exp()).matrix();
  const Eigen::VectorXd v = factor_.triangularView<Eigen::Lower>().solve(k);
  return {prior_mean_ + k.dot(weights_), std::max(0.0, sf2 - v.squaredNorm())};
}

double GpModel::log_marginal_likelihood() const {
  return -0.5 * data_fit_ - 0.5 * log_det_ - 0.5 * static_cast<double>(size()) * kLog2Pi;
}

GpPrediction predict(const GpModel& model, const LocalPoint& x) { return model.predict(x); }

double log_marginal_likelihood(const GpModel& model) { return model.log_marginal_likelihood(); }

GpHyper select_hyperparams(std::span<const LocalPoint> points, std::span<const double> targets,
                           PriorMean prior) {
  if (points.size() != targets.size()) throw InvalidInput("points and targets differ in length");
  if (points.size() < kMinGpPoints) {
    throw InvalidInput("hyperparameter selection needs at least 5 points");
  }
  const std::size_t n = points.size();
  const std::size_t m = std::min(n, kHyperSubsample);
  std::vector<LocalPoint> pts(m);
  std::vector<double> vals(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t src = i * n / m;
    pts[i] = points[src];
    vals[i] = targets[src];
  }
  const double offset = prior == PriorMean::empirical ? mean_of(vals) : 0.0;
  Eigen::VectorXd y(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) y(static_cast<Eigen::Index>(i)) = vals[i] - offset;

  const Eigen::MatrixXd sq = squared_distances(pts);
  std::optional<GpHyper> best;
  double best_lml = -std::numeric_limits<double>::infinity();
  for (const double l : kLengthScaleGridM) {
    for (const double sf : kSigmaFGridDb) {
      for (const double sn : kSigmaNGridDb) {
        const GpHyper h{l, sf, sn};
        const auto lml = lml_of(covariance(sq, h), y);
        if (lml && *lml > best_lml) {
          best_lml = *lml;
          best = h;
        }
      }
    }
  }
  if (!best) throw NumericError("no hyperparameter candidate gave a valid factorization");
  return *best;
}

std::vector<GpCandidate> candidates_from(const ProbabilisticFingerprint& fp) {
  std::vector<GpCandidate> out;
  out.reserve(fp.cells.size());
  for (const auto& [idx, cell] : fp.cells) out.push_back({to_string(idx), cell.rep_location});
  return out;
}

GpModels fit_tower_models(const Trace& train, const GeoPoint& origin,
                          const GpTrainingOptions& options) {
  if (options.max_points_per_tower < kMinGpPoints) {
    throw InvalidInput("per-tower point cap must be at least 5");
  }
  std::map<std::string, std::pair<std::vector<LocalPoint>, std::vector<double>>> data;
  for (const auto& s : train.scans) {
    if (!s.truth) throw InvalidInput("scan_id " + std::to_string(s.scan_id) + " has no ground truth");
    const LocalPoint p = project(*s.truth, origin);
    for (const auto& r : s.readings) {
      auto& [pts, vals] = data[r.tower_id];
      pts.push_back(p);
      vals.push_back(r.rssi_dbm);
    }
  }

  GpModels models;
  for (auto& [tower, d] : data) {
    auto& [pts, vals] = d;
    if (pts.size() < kMinGpPoints) continue;
    if (pts.size() > options.max_points_per_tower) {
      std::vector<std::size_t> idx(pts.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::mt19937_64 rng(derive_seed(options.seed, "gp-subsample:" + tower));
      for (std::size_t i = idx.size() - 1; i > 0; --i) {
        std::swap(idx[i], idx[rng() % (i + 1)]);
      }
      idx.resize(options.max_points_per_tower);
      std::sort(idx.begin(), idx.end());
      std::vector<LocalPoint> p2;
      std::vector<double> v2;
      for (const std::size_t i : idx) {
        p2.push_back(pts[i]);
        v2.push_back(vals[i]);
      }
      pts = std::move(p2);
      vals = std::move(v2);
    }
    const GpHyper h = options.fixed_hyper ? *options.fixed_hyper
                                          : select_hyperparams(pts, vals, options.prior);
    models.emplace(tower, fit(std::move(pts), std::move(vals), h, options.prior));
  }
  return models;
}

namespace {

double gaussian_log_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(variance)) - d * d / (2.0 * variance);
}

LocationEstimate finish(std::span<const GpCandidate> candidates, const std::vector<double>& ll,
                        TopK k, const GeoPoint& origin, const Stopwatch& watch) {
  std::vector<ScoredLocation> scored(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    scored[c] = {candidates[c].id, candidates[c].location, ll[c]};
  }
  WeightedCentroid wc = weighted_top_k(scored, k);
  LocationEstimate est;
  est.location = wc.location;
  est.geo = unproject(wc.location, origin);
  est.method = Method::gp;
  est.top_candidates = std::move(wc.top);
  est.elapsed_ns = watch.elapsed_ns();
  return est;
}

}  // namespace

LocationEstimate gp_locate(const GpModels& models, std::span<const GpCandidate> candidates,
                           const RssiScan& scan, TopK k, const GeoPoint& origin) {
  const Stopwatch watch;
  if (candidates.empty()) throw InvalidInput("no candidate locations");
  std::vector<double> ll(candidates.size(), 0.0);
  bool any = false;
  for (const auto& r : scan.readings) {
    const auto it = models.find(r.tower_id);
    if (it == models.end()) continue;
    any = true;
    const GpModel& model = it->second;
    const double sn2 = model.hyper().sigma_n_db * model.hyper().sigma_n_db;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const GpPrediction p = model.predict(candidates[c].location);
      ll[c] += gaussian_log_pdf(r.rssi_dbm, p.mean_dbm, p.variance_db2 + sn2);
    }
  }
  if (!any) throw NotLocatable("no tower of the scan has a GP model");
  return finish(candidates, ll, k, origin, watch);
}

GpRadioMap::GpRadioMap(GpModels models, std::vector<GpCandidate> candidates,
                       const GeoPoint& origin)
    : models_(std::move(models)), candidates_(std::move(candidates)), origin_(origin) {
  if (candidates_.empty()) throw InvalidInput("no candidate locations");
  const auto m = static_cast<Eigen::Index>(candidates_.size());
  for (const auto& [tower, model] : models_) {
    const GpHyper& h = model.hyper();
    const double sf2 = h.sigma_f_db * h.sigma_f_db;
    const double sn2 = h.sigma_n_db * h.sigma_n_db;
    const auto n = static_cast<Eigen::Index>(model.size());
    Eigen::MatrixXd kstar(n, m);
    for (Eigen::Index c = 0; c < m; ++c) {
      for (Eigen::Index i = 0; i < n; ++i) {
        kstar(i, c) = kernel(model.inputs()[static_cast<std::size_t>(i)],
                             candidates_[static_cast<std::size_t>(c)].location, h);
      }
    }
    model.factor().triangularView<Eigen::Lower>().solveInPlace(kstar);
    const Eigen::VectorXd explained = kstar.colwise().squaredNorm();
    TowerTerms t;
    t.total_variance.resize(static_cast<std::size_t>(m));
    t.log_norm.resize(static_cast<std::size_t>(m));
    for (Eigen::Index c = 0; c < m; ++c) {
      const double v = std::max(0.0, sf2 - explained(c)) + sn2;
      t.total_variance[static_cast<std::size_t>(c)] = v;
      t.log_norm[static_cast<std::size_t>(c)] = -0.5 * (kLog2Pi + std::log(v));
    }
    terms_.emplace(tower, std::move(t));
  }
}

LocationEstimate GpRadioMap::locate(const RssiScan& scan, TopK k) const {
  const Stopwatch watch;
  std::vector<double> ll(candidates_.size(), 0.0);
  bool any = false;
  for (const auto& r : scan.readings) {
    const auto it = models_.find(r.tower_id);
    if (it == models_.end()) continue;
    any = true;
    const GpModel& model = it->second;
    const TowerTerms& t = terms_.at(r.tower_id);
    for (std::size_t c = 0; c < candidates_.size(); ++c) {
      const double d = r.rssi_dbm - model.predict_mean(candidates_[c].location);
      ll[c] += t.log_norm[c] - d * d / (2.0 * t.total_variance[c]);
    }
  }
  if (!any) throw NotLocatable("no tower of the scan has a GP model");
  return finish(candidates_, ll, k, origin_, watch);
}

}  // namespace cellsense

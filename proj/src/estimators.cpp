#include "cellsense/estimators.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "cellsense/error.hpp"
#include "stopwatch.hpp"
#include "text.hpp"

namespace cellsense {

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::cellsense: return "cellsense";
    case Method::knn: return "knn";
    case Method::cellid: return "cellid";
    case Method::gp: return "gp";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (const Method m : {Method::cellsense, Method::knn, Method::cellid, Method::gp}) {
    if (name == to_string(m)) return m;
  }
  throw InvalidInput("unknown method '" + std::string(name) + "'");
}

TopK TopK::of(std::size_t k) {
  if (k == 0) throw InvalidInput("K must be at least 1");
  return TopK(k);
}

TopK TopK::parse(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "all") return all();
  const auto v = text::parse_uint(text);
  if (!v || *v == 0) throw InvalidInput("K must be ALL or a positive integer");
  return of(static_cast<std::size_t>(*v));
}

std::string TopK::str() const { return is_all() ? "ALL" : std::to_string(k_); }

std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  if (log_weights.empty()) return {};
  const double max = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(max)) throw NumericError("log weights are not finite");
  std::vector<double> w(log_weights.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_weights[i] - max);
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return w;
}

WeightedCentroid weighted_top_k(std::span<const ScoredLocation> scored, TopK k) {
  if (scored.empty()) throw InvalidInput("no candidate locations");
  for (const auto& s : scored) {
    if (std::isnan(s.log_score)) throw NumericError("log score is NaN");
  }
  const std::size_t kk = k.resolve(scored.size());
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  const auto better = [&](std::size_t a, std::size_t b) {
    if (scored[a].log_score != scored[b].log_score) {
      return scored[a].log_score > scored[b].log_score;
    }
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk),
                    order.end(), better);

  const double max = scored[order[0]].log_score;
  if (!std::isfinite(max)) throw NumericError("best log score is not finite");
  std::vector<double> w(kk);
  double sum = 0.0;
  for (std::size_t i = 0; i < kk; ++i) {
    w[i] = std::exp(scored[order[i]].log_score - max);
    sum += w[i];
  }
  WeightedCentroid out;
  out.top.reserve(kk);
  for (std::size_t i = 0; i < kk; ++i) {
    const ScoredLocation& s = scored[order[i]];
    const double wi = w[i] / sum;
    out.location.x += wi * s.location.x;
    out.location.y += wi * s.location.y;
    out.top.push_back({std::string(s.id), wi});
  }
  return out;
}

// ---------------------------------------------------------------------------
// CellSense

CellSenseLocator::CellSenseLocator(const ProbabilisticFingerprint& fp, const CellPrior& prior)
    : origin_(fp.grid.origin) {
  if (fp.cells.empty()) throw InvalidInput("fingerprint has no cells");
  if (!(fp.alpha > 0.0)) throw InvalidInput("alpha must be positive");
  empty_log_prob_ = std::log(fp.alpha / (fp.alpha * kRssiBins));

  const std::size_t n = fp.cells.size();
  cells_.reserve(n);
  cell_ids_.reserve(n);
  rep_.reserve(n);
  for (const auto& [idx, cell] : fp.cells) {
    const auto c = static_cast<std::size_t>(cells_.size());
    cells_.push_back(idx);
    cell_ids_.push_back(to_string(idx));
    rep_.push_back(cell.rep_location);
    for (const auto& [tower, h] : cell.histograms) {
      auto [it, inserted] = slots_.try_emplace(tower);
      if (inserted) it->second.assign(n, -1);
      it->second[c] = static_cast<std::int32_t>(tables_.size() / kRssiBins);
      const double denom = std::log(h.total + fp.alpha * kRssiBins);
      for (int b = 0; b < kRssiBins; ++b) {
        tables_.push_back(std::log(h.counts[static_cast<std::size_t>(b)] + fp.alpha) - denom);
      }
    }
  }

  if (!prior.empty()) {
    log_prior_.assign(n, 0.0);
    for (const auto& [idx, weight] : prior) {
      if (!(weight > 0.0) || !std::isfinite(weight)) {
        throw InvalidInput("prior weights must be positive and finite");
      }
      const auto it = std::lower_bound(cells_.begin(), cells_.end(), idx);
      if (it == cells_.end() || *it != idx) {
        throw InvalidInput("prior names cell " + to_string(idx) + " which is not stored");
      }
      log_prior_[static_cast<std::size_t>(it - cells_.begin())] = std::log(weight);
    }
  }
}

std::vector<double> CellSenseLocator::log_likelihoods(std::span<const RssiScan> scans) const {
  if (scans.empty()) throw InvalidInput("at least one scan is required");
  const std::size_t n = cells_.size();
  std::vector<double> ll = log_prior_.empty() ? std::vector<double>(n, 0.0) : log_prior_;
  for (const RssiScan& scan : scans) {
    for (const TowerReading& r : scan.readings) {
      if (!rssi_in_range(r.rssi_dbm)) throw InvalidInput("scan rssi out of range");
      const auto it = slots_.find(r.tower_id);
      if (it == slots_.end()) {
        for (double& v : ll) v += empty_log_prob_;
        continue;
      }
      const std::vector<std::int32_t>& slot = it->second;
      const auto bin = static_cast<std::size_t>(r.rssi_dbm - kRssiMin);
      for (std::size_t c = 0; c < n; ++c) {
        const std::int32_t s = slot[c];
        ll[c] += s < 0 ? empty_log_prob_
                       : tables_[static_cast<std::size_t>(s) * kRssiBins + bin];
      }
    }
  }
  return ll;
}

LocationEstimate CellSenseLocator::locate(std::span<const RssiScan> scans,
                                          const EstimatorParams& params) const {
  const Stopwatch watch;
  if (params.n_samples == 0) throw InvalidInput("N must be at least 1");
  if (scans.size() != params.n_samples) {
    throw InvalidInput("expected " + std::to_string(params.n_samples) + " scans, got " +
                       std::to_string(scans.size()));
  }
  const std::vector<double> ll = log_likelihoods(scans);
  std::vector<ScoredLocation> scored(ll.size());
  for (std::size_t c = 0; c < ll.size(); ++c) scored[c] = {cell_ids_[c], rep_[c], ll[c]};
  WeightedCentroid wc = weighted_top_k(scored, params.k);

  LocationEstimate est;
  est.location = wc.location;
  est.geo = unproject(wc.location, origin_);
  est.method = Method::cellsense;
  est.top_candidates = std::move(wc.top);
  est.elapsed_ns = watch.elapsed_ns();
  return est;
}

std::map<CellIndex, double> log_posterior(const ProbabilisticFingerprint& fp,
                                          std::span<const RssiScan> scans) {
  const CellSenseLocator locator(fp);
  const std::vector<double> ll = locator.log_likelihoods(scans);
  std::map<CellIndex, double> out;
  for (std::size_t c = 0; c < ll.size(); ++c) out.emplace_hint(out.end(), locator.cells()[c], ll[c]);
  return out;
}

LocationEstimate cellsense_locate(const ProbabilisticFingerprint& fp,
                                  std::span<const RssiScan> scans,
                                  const EstimatorParams& params) {
  return CellSenseLocator(fp).locate(scans, params);
}

// ---------------------------------------------------------------------------
// KNN

double rssi_distance(const std::map<std::string, int>& a, const std::map<std::string, int>& b) {
  double sum = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  const auto add = [&](int x, int y) {
    const double d = x - y;
    sum += d * d;
  };
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      add(ia->second, kKnnMissingDbm);
      ++ia;
    } else if (ia == a.end() || ib->first < ia->first) {
      add(kKnnMissingDbm, ib->second);
      ++ib;
    } else {
      add(ia->second, ib->second);
      ++ia;
      ++ib;
    }
  }
  return std::sqrt(sum);
}

LocationEstimate knn_locate(const DeterministicFingerprint& dfp, const RssiScan& scan,
                            std::size_t k) {
  const Stopwatch watch;
  if (k == 0) throw InvalidInput("k must be at least 1");
  if (dfp.points.empty()) throw InvalidInput("deterministic fingerprint is empty");
  std::map<std::string, int> query;
  for (const auto& r : scan.readings) query.emplace(r.tower_id, r.rssi_dbm);

  const std::size_t n = dfp.points.size();
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = {rssi_distance(query, dfp.points[i].rssi), i};
  const std::size_t kk = std::min(k, n);
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());

  LocationEstimate est;
  est.method = Method::knn;
  for (std::size_t i = 0; i < kk; ++i) {
    const LocalPoint& p = dfp.points[dist[i].second].location;
    est.location.x += p.x;
    est.location.y += p.y;
    est.top_candidates.push_back({"p" + std::to_string(dist[i].second), 1.0 / kk});
  }
  est.location.x /= static_cast<double>(kk);
  est.location.y /= static_cast<double>(kk);
  est.geo = unproject(est.location, dfp.origin);
  est.elapsed_ns = watch.elapsed_ns();
  return est;
}

// ---------------------------------------------------------------------------
// Cell-ID

LocationEstimate cellid_locate(const TowerDb& db, const RssiScan& scan) {
  const Stopwatch watch;
  if (scan.readings.empty()) throw InvalidInput("scan has no readings");
  const TowerReading* chosen = nullptr;
  const TowerReading* serving = scan.serving();
  if (serving != nullptr && db.towers.contains(serving->tower_id)) {
    chosen = serving;
  } else {
    for (const auto& r : scan.readings) {
      if (!db.towers.contains(r.tower_id)) continue;
      if (chosen == nullptr || r.rssi_dbm > chosen->rssi_dbm ||
          (r.rssi_dbm == chosen->rssi_dbm && r.tower_id < chosen->tower_id)) {
        chosen = &r;
      }
    }
  }
  if (chosen == nullptr) throw NotLocatable("no tower of the scan is in the tower database");

  LocationEstimate est;
  est.method = Method::cellid;
  est.location = db.towers.at(chosen->tower_id);
  est.geo = unproject(est.location, db.origin);
  est.top_candidates.push_back({chosen->tower_id, 1.0});
  est.elapsed_ns = watch.elapsed_ns();
  return est;
}

}  // namespace cellsense

#include "sigmap/shapley.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sigmap/rng.hpp"

namespace sigmap {

// ------------------------------------------------------------------ learners

std::vector<double> OneNnLearner::fit_predict(const Dataset& train,
                                              std::span<const std::size_t> trainIdx,
                                              const Dataset& test,
                                              std::uint64_t) const {
  if (trainIdx.empty()) throw Error("1-nn: empty training set");
  std::vector<std::vector<double>> tx;
  std::vector<double> ty;
  const std::vector<double> labels = train.labels();
  tx.reserve(trainIdx.size());
  for (auto i : trainIdx) {
    tx.push_back(encode_features(train.records()[i], train.feature_set(),
                                 train.dictionary())
                     .values);
    ty.push_back(labels[i]);
  }
  std::vector<double> out;
  out.reserve(test.size());
  for (const auto& m : test.records()) {
    auto q = encode_features(m, train.feature_set(), train.dictionary()).values;
    std::size_t best = 0;
    double bestD = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < tx.size(); ++i) {
      double d = 0.0;
      for (std::size_t f = 0; f < q.size(); ++f) {
        double diff = q[f] - tx[i][f];
        d += diff * diff;
      }
      if (d < bestD) {
        bestD = d;
        best = i;
      }
    }
    out.push_back(ty[best]);
  }
  (void)classification_;
  return out;
}

std::vector<double> ForestLearner::fit_predict(const Dataset& train,
                                               std::span<const std::size_t> trainIdx,
                                               const Dataset& test,
                                               std::uint64_t seed) const {
  std::vector<std::size_t> idx(trainIdx.begin(), trainIdx.end());
  Dataset sub = train.subset(idx);
  ForestHyper hp = hp_;
  hp.seed = seed;
  ForestModel m = fit_forest(sub, WeightVector::ones(sub.size()), hp);
  std::vector<double> out;
  out.reserve(test.size());
  for (const auto& rec : test.records()) {
    if (hp.task == ForestTask::Classification)
      out.push_back(m.predict_class(rec));
    else
      out.push_back(m.predict_mean(rec));
  }
  return out;
}

// -------------------------------------------------------------------- metric

double PerfMetric::score(const std::vector<double>& pred,
                         const std::vector<double>& truth) const {
  if (pred.size() != truth.size()) throw Error("metric: length mismatch");
  if (pred.empty()) throw Error("metric: empty test set");
  const double n = static_cast<double>(pred.size());
  switch (kind) {
    case Kind::NegMse: {
      double s = 0.0;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        double e = pred[i] - truth[i];
        s += e * e;
      }
      return -s / n;
    }
    case Kind::NegReweightedError: {
      if (testWeights.size() != pred.size())
        throw Error("metric: test weights not aligned");
      double s = 0.0;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        double e = pred[i] - truth[i];
        s += testWeights[i] * e * e;
      }
      return -s / n;
    }
    case Kind::Recall0: {
      std::size_t tp = 0, total = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        if (truth[i] == 0.0) {
          ++total;
          if (pred[i] == 0.0) ++tp;
        }
      }
      return total ? static_cast<double>(tp) / static_cast<double>(total) : 0.0;
    }
    case Kind::Accuracy: {
      std::size_t ok = 0;
      for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == truth[i]) ++ok;
      return static_cast<double>(ok) / n;
    }
  }
  throw Error("metric: unknown kind");
}

// ------------------------------------------------------------------- engine

namespace {

// Scores a subset; empty or sub-minimum subsets use the constant predictor
// equal to the full-train label mean (regression) or mode (classification).
class Valuator {
 public:
  Valuator(const Dataset& train, const Dataset& test, const Learner& learner,
           const PerfMetric& metric)
      : train_(train), test_(test), learner_(learner), metric_(metric) {
    testLabels_ = test.labels();
    std::vector<double> tl = train.labels();
    if (train.classification_labels()) {
      std::map<double, std::size_t> counts;
      for (double v : tl) ++counts[v];
      double best = tl.front();
      std::size_t bestN = 0;
      for (const auto& [v, c] : counts)
        if (c > bestN) {  // ties favor the lower label (map is ordered)
          bestN = c;
          best = v;
        }
      prior_ = best;
    } else {
      double s = 0.0;
      for (double v : tl) s += v;
      prior_ = s / static_cast<double>(tl.size());
    }
  }

  double value(std::span<const std::size_t> subset, std::uint64_t seed) const {
    if (subset.size() < learner_.min_fit_size()) {
      std::vector<double> constPred(test_.size(), prior_);
      return metric_.score(constPred, testLabels_);
    }
    return metric_.score(learner_.fit_predict(train_, subset, test_, seed),
                         testLabels_);
  }

  double prior() const { return prior_; }

 private:
  const Dataset& train_;
  const Dataset& test_;
  const Learner& learner_;
  const PerfMetric& metric_;
  std::vector<double> testLabels_;
  double prior_ = 0.0;
};

}  // namespace

ShapleyResult tmc_shapley(const Dataset& train, const Dataset& test,
                          const Learner& learner, const PerfMetric& metric,
                          const ShapleyConfig& cfg) {
  const std::size_t n = train.size();
  if (n < 2) throw Error("tmc_shapley: need at least 2 training points");
  Valuator val(train, test, learner, metric);

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const double vFull = val.value(all, derive_seed(cfg.seed, 0xFFFFFFFFULL));
  const double vEmpty = val.value({}, 0);
  const double truncTol =
      cfg.truncationTol ? *cfg.truncationTol : 0.01 * std::fabs(vFull);

  const std::size_t maxIter =
      cfg.fixedPermutations
          ? *cfg.fixedPermutations
          : std::max<std::size_t>(
                cfg.convergenceWindow + 1,
                static_cast<std::size_t>(4.0 * cfg.maxIterFactor *
                                         static_cast<double>(n)));
  const std::size_t relaxAfter = static_cast<std::size_t>(
      cfg.maxIterFactor * static_cast<double>(n));

  // One permutation's marginal vector; seeds derive from the permutation
  // index, so the result is independent of worker partitioning.
  auto run_permutation = [&](std::size_t permIdx, std::vector<double>& marginals) {
    Rng rng(derive_seed(cfg.seed, permIdx));
    std::vector<std::size_t> perm(all);
    rng.shuffle(perm);
    const std::uint64_t learnerSeed = derive_seed(cfg.seed ^ 0x5EEDF00DULL, permIdx);
    std::fill(marginals.begin(), marginals.end(), 0.0);
    double prev = vEmpty;
    std::vector<std::size_t> prefix;
    prefix.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (std::fabs(prev - vFull) < truncTol) break;  // truncation: rest are 0
      prefix.push_back(perm[k]);
      double v = val.value(prefix, learnerSeed);
      marginals[perm[k]] = v - prev;
      prev = v;
    }
  };

  ShapleyResult res;
  res.phi.assign(n, 0.0);

  const std::size_t workers = std::max<std::size_t>(1, cfg.workers);
  if (workers > 1) {
    // fixed budget, merged by count-weighted averaging (equal counts here)
    std::vector<std::vector<double>> sums(workers, std::vector<double>(n, 0.0));
    std::vector<std::size_t> counts(workers, 0);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        std::vector<double> marg(n);
        for (std::size_t p = w; p < maxIter; p += workers) {
          run_permutation(p, marg);
          for (std::size_t i = 0; i < n; ++i) sums[w][i] += marg[i];
          ++counts[w];
        }
      });
    for (auto& t : pool) t.join();
    std::size_t total = 0;
    for (std::size_t w = 0; w < workers; ++w) {
      total += counts[w];
      for (std::size_t i = 0; i < n; ++i) res.phi[i] += sums[w][i];
    }
    for (double& p : res.phi) p /= static_cast<double>(total);
    res.iterations = total;
    res.converged = false;
    res.history.emplace_back(total, res.phi);
    return res;
  }

  std::vector<double> sum(n, 0.0);
  std::vector<double> marg(n);
  std::vector<std::vector<double>> ring(cfg.convergenceWindow);
  const std::size_t snapshotEvery = std::max<std::size_t>(1, maxIter / 200);
  std::size_t t = 0;
  bool converged = false;
  for (t = 0; t < maxIter; ++t) {
    run_permutation(t, marg);
    for (std::size_t i = 0; i < n; ++i) sum[i] += marg[i];
    std::vector<double> phiNow(n);
    for (std::size_t i = 0; i < n; ++i)
      phiNow[i] = sum[i] / static_cast<double>(t + 1);
    if ((t + 1) % snapshotEvery == 0 || t + 1 == maxIter)
      res.history.emplace_back(t + 1, phiNow);
    const std::vector<double>& old = ring[t % cfg.convergenceWindow];
    if (!cfg.fixedPermutations && t >= cfg.convergenceWindow && !old.empty()) {
      double err = 0.0;
      std::size_t used = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (std::fabs(phiNow[i]) < 1e-12) continue;  // guard zero denominators
        err += std::fabs(phiNow[i] - old[i]) / std::fabs(phiNow[i]);
        ++used;
      }
      if (used) err /= static_cast<double>(used);
      double tol = (t + 1 > relaxAfter) ? cfg.relaxedTol : cfg.convergenceTol;
      if (used && err < tol) {
        converged = true;
        ring[t % cfg.convergenceWindow] = std::move(phiNow);
        ++t;
        break;
      }
    }
    ring[t % cfg.convergenceWindow] = std::move(phiNow);
  }
  res.iterations = t;
  res.converged = cfg.fixedPermutations ? true : converged;
  for (std::size_t i = 0; i < n; ++i)
    res.phi[i] = sum[i] / static_cast<double>(t);
  if (res.history.empty() || res.history.back().first != t)
    res.history.emplace_back(t, res.phi);
  return res;
}

std::vector<double> exact_shapley(const Dataset& train, const Dataset& test,
                                  const Learner& learner, const PerfMetric& metric,
                                  std::uint64_t learnerSeed) {
  const std::size_t n = train.size();
  if (n > 12) throw Error("exact_shapley: |train| must be <= 12");
  if (n < 1) throw Error("exact_shapley: empty train");
  Valuator val(train, test, learner, metric);

  const std::size_t nSubsets = std::size_t{1} << n;
  std::vector<double> V(nSubsets);
  std::vector<std::size_t> subset;
  for (std::size_t mask = 0; mask < nSubsets; ++mask) {
    subset.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (std::size_t{1} << i)) subset.push_back(i);
    V[mask] = val.value(subset, learnerSeed);
  }

  // binomial coefficients C(n-1, k)
  std::vector<double> binom(n, 1.0);
  for (std::size_t k = 1; k < n; ++k)
    binom[k] = binom[k - 1] * static_cast<double>(n - k) / static_cast<double>(k);

  std::vector<double> phi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    for (std::size_t mask = 0; mask < nSubsets; ++mask) {
      if (mask & bit) continue;
      std::size_t k = static_cast<std::size_t>(__builtin_popcountll(mask));
      phi[i] += (V[mask | bit] - V[mask]) / binom[k];
    }
    phi[i] /= static_cast<double>(n);  // C = 1/n gives exact efficiency
  }
  return phi;
}

std::vector<double> loo_values(const Dataset& train, const Dataset& test,
                               const Learner& learner, const PerfMetric& metric,
                               std::uint64_t learnerSeed) {
  const std::size_t n = train.size();
  if (n < 2) throw Error("loo_values: need at least 2 training points");
  Valuator val(train, test, learner, metric);
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  double vFull = val.value(all, learnerSeed);
  std::vector<double> phi(n);
  std::vector<std::size_t> rest;
  rest.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    rest.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) rest.push_back(j);
    phi[i] = vFull - val.value(rest, learnerSeed);
  }
  return phi;
}

RemovalCurve removal_curve(const Dataset& train, const Dataset& heldout,
                           const std::vector<double>& values,
                           const Learner& learner, const PerfMetric& metric,
                           double batchFrac, RemovalOrder order,
                           std::uint64_t seed) {
  const std::size_t n = train.size();
  if (values.size() != n) throw Error("removal_curve: values not aligned to train");
  if (!(batchFrac > 0.0 && batchFrac < 1.0))
    throw Error("removal_curve: batchFrac must be in (0,1)");

  std::vector<std::size_t> order_idx(n);
  for (std::size_t i = 0; i < n; ++i) order_idx[i] = i;
  switch (order) {
    case RemovalOrder::LowestFirst:
      std::stable_sort(order_idx.begin(), order_idx.end(),
                       [&](std::size_t a, std::size_t b) {
                         return values[a] < values[b];
                       });
      break;
    case RemovalOrder::HighestFirst:
      std::stable_sort(order_idx.begin(), order_idx.end(),
                       [&](std::size_t a, std::size_t b) {
                         return values[a] > values[b];
                       });
      break;
    case RemovalOrder::Random: {
      Rng rng(seed);
      rng.shuffle(order_idx);
      break;
    }
  }

  Valuator val(train, heldout, learner, metric);
  const std::vector<double> trainLabels = train.labels();
  const std::size_t batch = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(batchFrac * static_cast<double>(n))));

  RemovalCurve out;
  for (std::size_t removed = 0;; removed += batch) {
    if (removed >= n) break;
    std::vector<std::size_t> remaining(order_idx.begin() + static_cast<long>(removed),
                                       order_idx.end());
    std::sort(remaining.begin(), remaining.end());
    if (remaining.size() < std::max<std::size_t>(2, learner.min_fit_size())) {
      out.truncated = true;
      break;
    }
    RemovalStep step;
    step.fractionRemoved = static_cast<double>(removed) / static_cast<double>(n);
    step.remaining = remaining.size();
    // The learner stream depends only on the removal count, never on the
    // ordering seed, so curves for different orders share the same learner
    // draws at each step and their fraction-0 points coincide exactly.
    std::uint64_t learnerSeed = derive_seed(0x5EEDF00DULL, removed);
    step.score = val.value(remaining, learnerSeed);

    std::map<double, std::size_t> classCounts;
    for (auto i : remaining) ++classCounts[trainLabels[i]];
    for (const auto& [c, cnt] : classCounts) step.remainingClassCounts.emplace_back(c, cnt);

    std::vector<double> preds =
        learner.fit_predict(train, remaining, heldout, learnerSeed);
    std::map<double, std::size_t> predCounts;
    for (double p : preds) ++predCounts[p];
    for (const auto& [c, cnt] : predCounts) step.predictedClassCounts.emplace_back(c, cnt);

    out.steps.push_back(std::move(step));
  }
  return out;
}

// ------------------------------------------------------------------- exports

std::string shapley_csv(const ShapleyResult& r, const Dataset& train) {
  std::ostringstream out;
  out.precision(17);
  out << "index,phi,lat,lng\n";
  for (std::size_t i = 0; i < r.phi.size(); ++i)
    out << i << ',' << r.phi[i] << ',' << train.records()[i].location.lat << ','
        << train.records()[i].location.lng << '\n';
  return out.str();
}

std::string shapley_geojson(const ShapleyResult& r, const Dataset& train) {
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t i = 0; i < r.phi.size(); ++i) {
    nlohmann::json f;
    f["type"] = "Feature";
    f["properties"] = {{"index", i}, {"phi", r.phi[i]}};
    f["geometry"] = {{"type", "Point"},
                     {"coordinates", {train.records()[i].location.lng,
                                      train.records()[i].location.lat}}};
    features.push_back(f);
  }
  nlohmann::json root;
  root["type"] = "FeatureCollection";
  root["features"] = features;
  return root.dump();
}

std::string removal_curve_csv(const RemovalCurve& c) {
  std::ostringstream out;
  out.precision(17);
  out << "step,fraction_removed,score,remaining,class_counts,predicted_class_counts\n";
  for (std::size_t s = 0; s < c.steps.size(); ++s) {
    const auto& st = c.steps[s];
    auto fmt = [](const std::vector<std::pair<double, std::size_t>>& v) {
      std::ostringstream o;
      for (std::size_t i = 0; i < v.size(); ++i)
        o << (i ? ";" : "") << v[i].first << ':' << v[i].second;
      return o.str();
    };
    out << s << ',' << st.fractionRemoved << ',' << st.score << ','
        << st.remaining << ',' << fmt(st.remainingClassCounts) << ','
        << fmt(st.predictedClassCounts) << '\n';
  }
  return out.str();
}

}  // namespace sigmap

#include "sigmap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sigmap {

double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size()) throw Error("rmse: length mismatch");
  if (pred.empty()) throw Error("rmse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double e = pred[i] - truth[i];
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

ConfusionMatrix::ConfusionMatrix(const std::vector<double>& pred,
                                 const std::vector<double>& truth) {
  if (pred.size() != truth.size()) throw Error("confusion: length mismatch");
  classes_ = truth;
  classes_.insert(classes_.end(), pred.begin(), pred.end());
  std::sort(classes_.begin(), classes_.end());
  classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
  counts_.assign(classes_.size(), std::vector<std::size_t>(classes_.size(), 0));
  auto idx = [&](double v) {
    return static_cast<std::size_t>(
        std::lower_bound(classes_.begin(), classes_.end(), v) - classes_.begin());
  };
  for (std::size_t i = 0; i < pred.size(); ++i) ++counts_[idx(truth[i])][idx(pred[i])];
}

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (const auto& row : counts_)
    for (auto c : row) t += c;
  return t;
}

const ClassMetrics& ClassificationMetrics::for_class(double label) const {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == label) return perClass[i];
  throw Error("classification metrics: unknown class");
}

ClassificationMetrics classification_metrics(const std::vector<double>& pred,
                                             const std::vector<double>& truth) {
  ConfusionMatrix cm(pred, truth);
  ClassificationMetrics out;
  out.classes = cm.classes();
  const std::size_t k = out.classes.size();
  std::size_t correct = 0;
  double recallSum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = cm.count(c, c);
    std::size_t trueTotal = 0, predTotal = 0;
    for (std::size_t j = 0; j < k; ++j) {
      trueTotal += cm.count(c, j);
      predTotal += cm.count(j, c);
    }
    correct += tp;
    ClassMetrics m;
    if (trueTotal == 0) {
      m.recallDegenerate = true;
    } else {
      m.recall = static_cast<double>(tp) / static_cast<double>(trueTotal);
    }
    if (predTotal == 0) {
      m.precisionDegenerate = true;
    } else {
      m.precision = static_cast<double>(tp) / static_cast<double>(predTotal);
    }
    m.f1 = (m.precision + m.recall > 0.0)
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    recallSum += m.recall;
    out.perClass.push_back(m);
  }
  out.accuracy = cm.total() ? static_cast<double>(correct) /
                                  static_cast<double>(cm.total())
                            : 0.0;
  out.balancedAccuracy = k ? recallSum / static_cast<double>(k) : 0.0;
  return out;
}

GridSearchResult grid_search(const Dataset& train, const Dataset& holdout,
                             ForestHyper base,
                             const std::vector<std::size_t>& treeGridIn,
                             const std::vector<std::size_t>& depthGridIn) {
  if (treeGridIn.empty() || depthGridIn.empty())
    throw Error("grid_search: empty grid");
  std::vector<std::size_t> treeGrid = treeGridIn, depthGrid = depthGridIn;
  std::sort(treeGrid.begin(), treeGrid.end());
  std::sort(depthGrid.begin(), depthGrid.end());
  GridSearchResult out;
  std::vector<double> holdoutLabels = holdout.labels();
  for (std::size_t nt : treeGrid)
    for (std::size_t md : depthGrid) {
      ForestHyper hp = base;
      hp.nTrees = nt;
      hp.maxDepth = md;
      ForestModel m = fit_forest(train, WeightVector::ones(train.size()), hp);
      std::vector<double> preds;
      preds.reserve(holdout.size());
      for (const auto& rec : holdout.records())
        preds.push_back(hp.task == ForestTask::Classification ? m.predict_class(rec)
                                                              : m.predict_mean(rec));
      out.table.push_back({hp, rmse(preds, holdoutLabels)});
    }
  // argmin; the grid is iterated in ascending (nTrees, maxDepth) order and
  // only a strictly smaller error replaces the incumbent, so ties break
  // toward the smaller configuration
  std::size_t bestIdx = 0;
  for (std::size_t i = 1; i < out.table.size(); ++i)
    if (out.table[i].holdoutRmse < out.table[bestIdx].holdoutRmse) bestIdx = i;
  out.best = out.table[bestIdx].hyper;
  return out;
}

void ExperimentReport::add_row(std::initializer_list<std::string> cells) {
  if (cells.size() != columns.size())
    throw Error("report: row width mismatch");
  rows.emplace_back(cells);
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream out;
  for (const auto& [k, v] : metadata) out << "# " << k << "=" << v << "\n";
  for (std::size_t c = 0; c < columns.size(); ++c)
    out << (c ? "," : "") << columns[c];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << "\n";
  }
  return out.str();
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw Error("quantile: empty input");
  std::sort(v.begin(), v.end());
  double pos = q * static_cast<double>(v.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

}  // namespace sigmap

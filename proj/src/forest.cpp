#include "sigmap/forest.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "json.hpp"
#include "sigmap/rng.hpp"

namespace sigmap {

using nlohmann::json;

void ForestHyper::validate() const {
  if (nTrees < 1) throw Error("forest: nTrees must be >= 1");
  if (maxDepth < 1) throw Error("forest: maxDepth must be >= 1");
  if (minSamplesLeaf < 1) throw Error("forest: minSamplesLeaf must be >= 1");
}

std::size_t DecisionTree::depth() const {
  // longest root-to-leaf edge count
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& n = nodes[i];
    if (!n.isLeaf) {
      d[static_cast<std::size_t>(n.left)] = d[i] + 1;
      d[static_cast<std::size_t>(n.right)] = d[i] + 1;
      best = std::max(best, d[i] + 1);
    }
  }
  return best;
}

namespace {

struct TrainData {
  std::vector<std::vector<double>> X;  // N x F
  std::vector<double> y;               // regression target or class index
  std::vector<double> w;
  std::vector<bool> categorical;
  std::size_t nClasses = 0;
};

struct LeafStats {
  double mean = 0.0;
  double variance = 0.0;
  std::vector<double> classMass;
};

LeafStats node_stats(const TrainData& td, const std::vector<std::uint32_t>& idx,
                     const LeafStats& parent) {
  double sw = 0.0, swy = 0.0, swy2 = 0.0;
  std::vector<double> mass(td.nClasses, 0.0);
  for (auto i : idx) {
    double wi = td.w[i];
    sw += wi;
    swy += wi * td.y[i];
    swy2 += wi * td.y[i] * td.y[i];
    if (td.nClasses) mass[static_cast<std::size_t>(td.y[i])] += wi;
  }
  if (sw <= 0.0) return parent;  // zero-weight leaf predicts the parent statistic
  LeafStats out;
  out.mean = swy / sw;
  out.variance = std::max(0.0, swy2 / sw - out.mean * out.mean);
  if (td.nClasses) {
    out.classMass.resize(td.nClasses);
    for (std::size_t c = 0; c < td.nClasses; ++c) out.classMass[c] = mass[c] / sw;
  }
  return out;
}

struct SplitChoice {
  bool found = false;
  int feature = -1;
  bool categorical = false;
  double threshold = 0.0;
  double category = 0.0;
  double gain = 0.0;
};

// Impurity mass of a side: total_w * variance (regression) or total_w * gini
// (classification), computed from accumulated sums.
struct SideAccum {
  double sw = 0.0, swy = 0.0, swy2 = 0.0;
  std::vector<double> mass;
  std::size_t count = 0;

  double impurity(std::size_t nClasses) const {
    if (sw <= 0.0) return 0.0;
    if (nClasses == 0) return swy2 - swy * swy / sw;  // weighted SSE
    double g = 1.0;
    for (double m : mass) {
      double p = m / sw;
      g -= p * p;
    }
    return sw * g;
  }
};

class TreeBuilder {
 public:
  TreeBuilder(const TrainData& td, const ForestHyper& hp, Rng& rng)
      : td_(td), hp_(hp), rng_(rng) {
    nFeatures_ = td.X.empty() ? 0 : td.X[0].size();
    featPerSplit_ = hp.maxFeatures == MaxFeatures::All
                        ? nFeatures_
                        : std::max<std::size_t>(
                              1, static_cast<std::size_t>(
                                     std::sqrt(static_cast<double>(nFeatures_))));
  }

  DecisionTree build(std::vector<std::uint32_t> rootIdx) {
    tree_.nodes.clear();
    LeafStats rootParent = node_stats(td_, rootIdx, LeafStats{});
    grow(std::move(rootIdx), 0, rootParent);
    return std::move(tree_);
  }

 private:
  std::int32_t grow(std::vector<std::uint32_t> idx, std::size_t depth,
                    const LeafStats& parentStats) {
    LeafStats stats = node_stats(td_, idx, parentStats);
    std::int32_t self = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();

    bool canSplit = depth < hp_.maxDepth && idx.size() >= 2 * hp_.minSamplesLeaf;
    SplitChoice best;
    if (canSplit) best = find_split(idx);
    if (!best.found) {
      make_leaf(self, stats);
      return self;
    }
    std::vector<std::uint32_t> leftIdx, rightIdx;
    for (auto i : idx) {
      bool goLeft = best.categorical ? td_.X[i][best.feature] == best.category
                                     : td_.X[i][best.feature] <= best.threshold;
      (goLeft ? leftIdx : rightIdx).push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();
    TreeNode& n = tree_.nodes[self];
    n.isLeaf = false;
    n.featureIndex = best.feature;
    n.categoricalSplit = best.categorical;
    n.threshold = best.threshold;
    n.category = best.category;
    std::int32_t l = grow(std::move(leftIdx), depth + 1, stats);
    std::int32_t r = grow(std::move(rightIdx), depth + 1, stats);
    tree_.nodes[self].left = l;
    tree_.nodes[self].right = r;
    return self;
  }

  void make_leaf(std::int32_t node, const LeafStats& stats) {
    TreeNode& n = tree_.nodes[node];
    n.isLeaf = true;
    n.mean = stats.mean;
    n.variance = stats.variance;
    n.classMass = stats.classMass;
  }

  SplitChoice find_split(const std::vector<std::uint32_t>& idx) {
    // feature subset drawn without replacement (partial Fisher-Yates)
    std::vector<std::size_t> feats(nFeatures_);
    for (std::size_t f = 0; f < nFeatures_; ++f) feats[f] = f;
    if (featPerSplit_ < nFeatures_) {
      for (std::size_t i = 0; i < featPerSplit_; ++i) {
        std::size_t j = i + static_cast<std::size_t>(
                                rng_.next_below(nFeatures_ - i));
        std::swap(feats[i], feats[j]);
      }
      feats.resize(featPerSplit_);
    }

    SideAccum total;
    total.mass.assign(td_.nClasses, 0.0);
    for (auto i : idx) {
      double wi = td_.w[i];
      total.sw += wi;
      total.swy += wi * td_.y[i];
      total.swy2 += wi * td_.y[i] * td_.y[i];
      if (td_.nClasses) total.mass[static_cast<std::size_t>(td_.y[i])] += wi;
      ++total.count;
    }
    if (total.sw <= 0.0) return {};  // all-zero-weight node stays a leaf
    double parentImpurity = total.impurity(td_.nClasses);

    SplitChoice best;
    for (std::size_t f : feats) {
      if (td_.categorical[f])
        consider_categorical(idx, f, total, parentImpurity, best);
      else
        consider_numeric(idx, f, total, parentImpurity, best);
    }
    return best;
  }

  void consider_numeric(const std::vector<std::uint32_t>& idx, std::size_t f,
                        const SideAccum& total, double parentImpurity,
                        SplitChoice& best) {
    struct Row { double x, y, w; };
    // Thresholds come from positive-weight records only, so zero-weight
    // records cannot move a split; all records still count toward
    // minSamplesLeaf occupancy.
    std::vector<Row> rows;
    rows.reserve(idx.size());
    std::size_t zeroBelowOrEqual = 0;
    std::vector<double> zeroX;
    for (auto i : idx) {
      if (td_.w[i] > 0.0)
        rows.push_back({td_.X[i][f], td_.y[i], td_.w[i]});
      else
        zeroX.push_back(td_.X[i][f]);
    }
    if (rows.size() < 2) return;
    std::sort(rows.begin(), rows.end(),
              [](const Row& a, const Row& b) { return a.x < b.x; });
    std::sort(zeroX.begin(), zeroX.end());

    SideAccum left;
    left.mass.assign(td_.nClasses, 0.0);
    for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
      left.sw += rows[k].w;
      left.swy += rows[k].w * rows[k].y;
      left.swy2 += rows[k].w * rows[k].y * rows[k].y;
      if (td_.nClasses) left.mass[static_cast<std::size_t>(rows[k].y)] += rows[k].w;
      ++left.count;
      if (rows[k].x == rows[k + 1].x) continue;
      double thr = rows[k].x + (rows[k + 1].x - rows[k].x) / 2.0;
      // occupancy counts include zero-weight records routed by this threshold
      while (zeroBelowOrEqual < zeroX.size() && zeroX[zeroBelowOrEqual] <= thr)
        ++zeroBelowOrEqual;
      std::size_t nLeft = left.count + zeroBelowOrEqual;
      std::size_t nRight = idx.size() - nLeft;
      if (nLeft < hp_.minSamplesLeaf || nRight < hp_.minSamplesLeaf) continue;
      SideAccum right;
      right.sw = total.sw - left.sw;
      right.swy = total.swy - left.swy;
      right.swy2 = total.swy2 - left.swy2;
      if (td_.nClasses) {
        right.mass.resize(td_.nClasses);
        for (std::size_t c = 0; c < td_.nClasses; ++c)
          right.mass[c] = total.mass[c] - left.mass[c];
      }
      double gain = parentImpurity - left.impurity(td_.nClasses) -
                    right.impurity(td_.nClasses);
      if (gain > best.gain + 1e-12 && gain > 1e-12) {
        best.found = true;
        best.feature = static_cast<int>(f);
        best.categorical = false;
        best.threshold = thr;
        best.gain = gain;
      }
    }
  }

  void consider_categorical(const std::vector<std::uint32_t>& idx, std::size_t f,
                            const SideAccum& total, double parentImpurity,
                            SplitChoice& best) {
    // one-vs-rest on single category values
    struct Acc { SideAccum a; std::size_t records = 0; };
    std::map<double, Acc> byCat;
    for (auto i : idx) {
      Acc& acc = byCat[td_.X[i][f]];
      if (acc.a.mass.empty() && td_.nClasses) acc.a.mass.assign(td_.nClasses, 0.0);
      double wi = td_.w[i];
      acc.a.sw += wi;
      acc.a.swy += wi * td_.y[i];
      acc.a.swy2 += wi * td_.y[i] * td_.y[i];
      if (td_.nClasses) acc.a.mass[static_cast<std::size_t>(td_.y[i])] += wi;
      ++acc.a.count;
      ++acc.records;
    }
    if (byCat.size() < 2) return;
    for (const auto& [cat, acc] : byCat) {
      std::size_t nLeft = acc.records;
      std::size_t nRight = idx.size() - nLeft;
      if (nLeft < hp_.minSamplesLeaf || nRight < hp_.minSamplesLeaf) continue;
      SideAccum right;
      right.sw = total.sw - acc.a.sw;
      right.swy = total.swy - acc.a.swy;
      right.swy2 = total.swy2 - acc.a.swy2;
      if (td_.nClasses) {
        right.mass.resize(td_.nClasses);
        for (std::size_t c = 0; c < td_.nClasses; ++c)
          right.mass[c] = total.mass[c] - (acc.a.mass.empty() ? 0.0 : acc.a.mass[c]);
      }
      double gain = parentImpurity - acc.a.impurity(td_.nClasses) -
                    right.impurity(td_.nClasses);
      if (gain > best.gain + 1e-12 && gain > 1e-12) {
        best.found = true;
        best.feature = static_cast<int>(f);
        best.categorical = true;
        best.category = cat;
        best.gain = gain;
      }
    }
  }

  const TrainData& td_;
  const ForestHyper& hp_;
  Rng& rng_;
  std::size_t nFeatures_ = 0;
  std::size_t featPerSplit_ = 0;
  DecisionTree tree_;
};

double leaf_value(const DecisionTree& t, const FeatureVector& x,
                  const TreeNode** leafOut = nullptr) {
  const TreeNode* n = &t.nodes[0];
  while (!n->isLeaf) {
    bool goLeft = n->categoricalSplit
                      ? x.values[static_cast<std::size_t>(n->featureIndex)] == n->category
                      : x.values[static_cast<std::size_t>(n->featureIndex)] <= n->threshold;
    n = &t.nodes[static_cast<std::size_t>(goLeft ? n->left : n->right)];
  }
  if (leafOut) *leafOut = n;
  return n->mean;
}

}  // namespace

ForestModel fit_forest(const Dataset& train, const WeightVector& w,
                       const ForestHyper& hp, PredictDiag* diag) {
  hp.validate();
  w.validate(train.size());
  if (train.size() < 2 * hp.minSamplesLeaf)
    throw Error("forest: need at least 2*minSamplesLeaf training points");

  TrainData td;
  td.w = w.weights;
  const FeatureSchema schema = FeatureSchema::for_selector(train.feature_set());
  td.categorical = std::vector<bool>(schema.categorical.begin(), schema.categorical.end());
  td.X.reserve(train.size());
  for (const auto& m : train.records())
    td.X.push_back(encode_features(m, train.feature_set(), train.dictionary()).values);

  ForestModel model;
  std::vector<double> labels = train.labels();
  if (hp.task == ForestTask::Classification) {
    std::vector<double> classes = labels;
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    model.classValues_ = classes;
    td.nClasses = classes.size();
    td.y.reserve(labels.size());
    for (double v : labels) {
      auto it = std::lower_bound(classes.begin(), classes.end(), v);
      td.y.push_back(static_cast<double>(it - classes.begin()));
    }
  } else {
    td.y = labels;
  }

  model.hyper_ = hp;
  model.dict_ = train.dictionary();
  model.featureSet_ = train.feature_set();
  model.diag = diag;
  model.trees_.resize(hp.nTrees);

  auto build_tree = [&](std::size_t t) {
    Rng rng(derive_seed(hp.seed, t));
    const std::size_t n = train.size();
    std::vector<std::uint32_t> boot(n);
    for (std::size_t i = 0; i < n; ++i)
      boot[i] = static_cast<std::uint32_t>(rng.next_below(n));
    TreeBuilder builder(td, hp, rng);
    model.trees_[t] = builder.build(std::move(boot));
  };

  std::size_t nThreads = std::max<std::size_t>(1, hp.threads);
  if (nThreads == 1 || hp.nTrees == 1) {
    for (std::size_t t = 0; t < hp.nTrees; ++t) build_tree(t);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (std::size_t k = 0; k < std::min(nThreads, hp.nTrees); ++k)
      pool.emplace_back([&] {
        for (std::size_t t = next.fetch_add(1); t < hp.nTrees; t = next.fetch_add(1))
          build_tree(t);
      });
    for (auto& th : pool) th.join();
  }
  return model;
}

double ForestModel::predict_mean(const FeatureVector& x) const {
  double sum = 0.0;
  for (const auto& t : trees_) sum += leaf_value(t, x);
  return sum / static_cast<double>(trees_.size());
}

double ForestModel::predict_std(const FeatureVector& x) const {
  double sum = 0.0, sum2 = 0.0;
  for (const auto& t : trees_) {
    double v = leaf_value(t, x);
    sum += v;
    sum2 += v * v;
  }
  double n = static_cast<double>(trees_.size());
  double mean = sum / n;
  return std::sqrt(std::max(0.0, sum2 / n - mean * mean));
}

namespace {

FeatureVector encode_checked(const ForestModel& m, const Measurement& meas,
                             PredictDiag* diag, FeatureSelector fs,
                             const EncodingDictionary& dict) {
  FeatureVector x = encode_features(meas, fs, dict);
  if (diag) {
    const FeatureSchema schema = FeatureSchema::for_selector(fs);
    for (std::size_t i = 0; i < schema.categorical.size(); ++i)
      if (schema.categorical[i] && x.values[i] < 0.0) {
        diag->unseenCategoryRoutes.fetch_add(1, std::memory_order_relaxed);
        break;
      }
  }
  (void)m;
  return x;
}

}  // namespace

double ForestModel::predict_mean(const Measurement& m) const {
  return predict_mean(encode_checked(*this, m, diag, featureSet_, dict_));
}

double ForestModel::predict_std(const Measurement& m) const {
  return predict_std(encode_checked(*this, m, diag, featureSet_, dict_));
}

std::vector<double> ForestModel::predict_proba(const FeatureVector& x) const {
  if (hyper_.task != ForestTask::Classification)
    throw Error("predict_proba: model is not a classifier");
  std::vector<double> proba(classValues_.size(), 0.0);
  for (const auto& t : trees_) {
    const TreeNode* leaf = nullptr;
    leaf_value(t, x, &leaf);
    if (leaf->classMass.empty()) continue;
    for (std::size_t c = 0; c < proba.size(); ++c) proba[c] += leaf->classMass[c];
  }
  double total = 0.0;
  for (double p : proba) total += p;
  if (total > 0.0)
    for (double& p : proba) p /= total;
  return proba;
}

double ForestModel::predict_class(const FeatureVector& x) const {
  std::vector<double> proba = predict_proba(x);
  std::size_t best = 0;
  for (std::size_t c = 1; c < proba.size(); ++c)
    if (proba[c] > proba[best]) best = c;  // ties keep the lower class label
  return classValues_[best];
}

double ForestModel::predict_class(const Measurement& m) const {
  return predict_class(encode_checked(*this, m, diag, featureSet_, dict_));
}

// ------------------------------------------------------------- serialization

std::string ForestModel::serialize() const {
  json j;
  j["format"] = "sigmap-forest";
  j["version"] = 1;
  j["hyper"] = {{"nTrees", hyper_.nTrees},
                {"maxDepth", hyper_.maxDepth},
                {"minSamplesLeaf", hyper_.minSamplesLeaf},
                {"maxFeatures", hyper_.maxFeatures == MaxFeatures::All ? "all" : "sqrt"},
                {"task", hyper_.task == ForestTask::Regression ? "regression"
                                                               : "classification"},
                {"seed", hyper_.seed}};
  j["featureSet"] = selector_name(featureSet_);
  json cells = json::array();
  for (const auto& [c, code] : dict_.cellCodes)
    cells.push_back({c.mcc, c.mnc, c.tac, c.ci, code});
  j["cellCodes"] = cells;
  json devs = json::array();
  for (const auto& [d, code] : dict_.deviceCodes) devs.push_back({d, code});
  j["deviceCodes"] = devs;
  j["classValues"] = classValues_;
  json trees = json::array();
  for (const auto& t : trees_) {
    json nodes = json::array();
    for (const auto& n : t.nodes) {
      json jn = {{"leaf", n.isLeaf}};
      if (n.isLeaf) {
        jn["mean"] = n.mean;
        jn["var"] = n.variance;
        if (!n.classMass.empty()) jn["mass"] = n.classMass;
      } else {
        jn["f"] = n.featureIndex;
        jn["cat"] = n.categoricalSplit;
        jn[n.categoricalSplit ? "c" : "t"] =
            n.categoricalSplit ? n.category : n.threshold;
        jn["l"] = n.left;
        jn["r"] = n.right;
      }
      nodes.push_back(jn);
    }
    trees.push_back(nodes);
  }
  j["trees"] = trees;
  return j.dump();
}

ForestModel ForestModel::deserialize(const std::string& bytes) {
  json j = json::parse(bytes);
  if (j.value("format", "") != "sigmap-forest" || j.value("version", 0) != 1)
    throw Error("forest deserialize: unknown container format");
  ForestModel m;
  const json& h = j["hyper"];
  m.hyper_.nTrees = h["nTrees"].get<std::size_t>();
  m.hyper_.maxDepth = h["maxDepth"].get<std::size_t>();
  m.hyper_.minSamplesLeaf = h["minSamplesLeaf"].get<std::size_t>();
  m.hyper_.maxFeatures =
      h["maxFeatures"].get<std::string>() == "all" ? MaxFeatures::All : MaxFeatures::Sqrt;
  m.hyper_.task = h["task"].get<std::string>() == "regression"
                      ? ForestTask::Regression
                      : ForestTask::Classification;
  m.hyper_.seed = h["seed"].get<std::uint64_t>();
  std::string fsName = j["featureSet"].get<std::string>();
  for (FeatureSelector fs : {FeatureSelector::XY, FeatureSelector::XYT,
                             FeatureSelector::All, FeatureSelector::AllMinusCid})
    if (selector_name(fs) == fsName) m.featureSet_ = fs;
  for (const auto& e : j["cellCodes"])
    m.dict_.cellCodes[CellId{e[0], e[1], e[2], e[3]}] = e[4];
  for (const auto& e : j["deviceCodes"])
    m.dict_.deviceCodes[e[0].get<std::string>()] = e[1];
  m.classValues_ = j["classValues"].get<std::vector<double>>();
  for (const auto& jt : j["trees"]) {
    DecisionTree t;
    for (const auto& jn : jt) {
      TreeNode n;
      n.isLeaf = jn["leaf"].get<bool>();
      if (n.isLeaf) {
        n.mean = jn["mean"].get<double>();
        n.variance = jn["var"].get<double>();
        if (jn.contains("mass")) n.classMass = jn["mass"].get<std::vector<double>>();
      } else {
        n.featureIndex = jn["f"].get<int>();
        n.categoricalSplit = jn["cat"].get<bool>();
        if (n.categoricalSplit)
          n.category = jn["c"].get<double>();
        else
          n.threshold = jn["t"].get<double>();
        n.left = jn["l"].get<std::int32_t>();
        n.right = jn["r"].get<std::int32_t>();
      }
      t.nodes.push_back(std::move(n));
    }
    m.trees_.push_back(std::move(t));
  }
  return m;
}

}  // namespace sigmap

#ifndef SIGMAP_FOREST_HPP
#define SIGMAP_FOREST_HPP

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sigmap/datamodel.hpp"

namespace sigmap {

enum class ForestTask { Regression, Classification };
enum class MaxFeatures { All, Sqrt };

struct ForestHyper {
  std::size_t nTrees = 20;
  std::size_t maxDepth = 20;
  std::size_t minSamplesLeaf = 1;
  MaxFeatures maxFeatures = MaxFeatures::All;
  ForestTask task = ForestTask::Regression;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

// Axis-parallel split; equal-to-threshold values route left. Categorical
// splits are one-vs-rest: value == category routes left, everything else
// (including categories unseen at training time) routes right.
struct TreeNode {
  bool isLeaf = true;
  int featureIndex = -1;
  double threshold = 0.0;
  bool categoricalSplit = false;
  double category = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  // leaf payload
  double mean = 0.0;      // weighted mean (regression)
  double variance = 0.0;  // weighted population variance
  std::vector<double> classMass;  // weighted class proportions (classification)
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // node 0 is the root

  std::size_t depth() const;
};

struct PredictDiag {
  std::atomic<std::size_t> unseenCategoryRoutes{0};
};

class ForestModel {
 public:
  ForestModel() = default;

  const ForestHyper& hyper() const { return hyper_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }
  const EncodingDictionary& dictionary() const { return dict_; }
  const std::vector<double>& class_values() const { return classValues_; }
  FeatureSelector feature_set() const { return featureSet_; }

  double predict_mean(const FeatureVector& x) const;
  double predict_std(const FeatureVector& x) const;
  double predict_mean(const Measurement& m) const;
  double predict_std(const Measurement& m) const;

  // Ties break toward the lower class label.
  double predict_class(const Measurement& m) const;
  double predict_class(const FeatureVector& x) const;
  std::vector<double> predict_proba(const FeatureVector& x) const;

  // Optional held-out residual-variance diagnostic (the construction-error
  // term of the dispersion model). Not used by any downstream operation.
  void set_oob_residual_variance(double v) { oobResidualVariance_ = v; }
  std::optional<double> oob_residual_variance() const { return oobResidualVariance_; }

  std::string serialize() const;  // versioned JSON container
  static ForestModel deserialize(const std::string& bytes);

  friend ForestModel fit_forest(const Dataset&, const WeightVector&,
                                const ForestHyper&, PredictDiag*);

  PredictDiag* diag = nullptr;  // optional, shared across predict calls

 private:
  ForestHyper hyper_;
  std::vector<DecisionTree> trees_;
  EncodingDictionary dict_;
  std::vector<double> classValues_;  // sorted distinct labels (classification)
  FeatureSelector featureSet_ = FeatureSelector::XY;
  std::optional<double> oobResidualVariance_;
};

// Weighted random forest. Per tree: uniform bootstrap of N indices with
// replacement, weighted-MSE (regression) or weighted-Gini (classification)
// split criterion, weighted leaf statistics. Deterministic given the seed;
// per-tree streams are derived so results do not depend on thread count.
ForestModel fit_forest(const Dataset& train, const WeightVector& w,
                       const ForestHyper& hp, PredictDiag* diag = nullptr);

}  // namespace sigmap

#endif

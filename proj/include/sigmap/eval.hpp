#ifndef SIGMAP_EVAL_HPP
#define SIGMAP_EVAL_HPP

#include <map>
#include <string>
#include <vector>

#include "sigmap/datamodel.hpp"
#include "sigmap/forest.hpp"

namespace sigmap {

double rmse(const std::vector<double>& pred, const std::vector<double>& truth);

class ConfusionMatrix {
 public:
  ConfusionMatrix(const std::vector<double>& pred, const std::vector<double>& truth);

  const std::vector<double>& classes() const { return classes_; }
  std::size_t count(std::size_t trueClass, std::size_t predClass) const {
    return counts_[trueClass][predClass];
  }
  std::size_t total() const;

 private:
  std::vector<double> classes_;
  std::vector<std::vector<std::size_t>> counts_;
};

struct ClassMetrics {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  bool recallDegenerate = false;     // no true instances of the class
  bool precisionDegenerate = false;  // no predicted instances of the class
};

struct ClassificationMetrics {
  std::vector<double> classes;
  std::vector<ClassMetrics> perClass;
  double accuracy = 0.0;
  double balancedAccuracy = 0.0;  // mean of per-class recalls

  const ClassMetrics& for_class(double label) const;
};

// Zero-denominator recalls/precisions report 0 with the degenerate flag set,
// never NaN.
ClassificationMetrics classification_metrics(const std::vector<double>& pred,
                                             const std::vector<double>& truth);

struct GridSearchEntry {
  ForestHyper hyper;
  double holdoutRmse = 0.0;
};

struct GridSearchResult {
  ForestHyper best;
  std::vector<GridSearchEntry> table;
};

// Exhaustive search over (nTrees, maxDepth) pairs; ties break toward smaller
// (nTrees, maxDepth).
GridSearchResult grid_search(const Dataset& train, const Dataset& holdout,
                             ForestHyper base,
                             const std::vector<std::size_t>& treeGrid,
                             const std::vector<std::size_t>& depthGrid);

// Flat metric table: every row is traceable to a (seed, config) pair.
struct ExperimentReport {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::map<std::string, std::string> metadata;

  std::string to_csv() const;
  void add_row(std::initializer_list<std::string> cells);
};

double median(std::vector<double> v);
double quantile(std::vector<double> v, double q);

}  // namespace sigmap

#endif

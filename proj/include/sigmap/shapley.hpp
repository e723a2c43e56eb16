#ifndef SIGMAP_SHAPLEY_HPP
#define SIGMAP_SHAPLEY_HPP

#include <optional>
#include <span>
#include <vector>

#include "sigmap/datamodel.hpp"
#include "sigmap/forest.hpp"

namespace sigmap {

// Deterministic fit/predict pair used as the black-box learning algorithm for
// data valuation. Must be a pure function of (train subset, seed).
class Learner {
 public:
  virtual ~Learner() = default;
  // Fits on train[trainIdx] and predicts every test record.
  virtual std::vector<double> fit_predict(const Dataset& train,
                                          std::span<const std::size_t> trainIdx,
                                          const Dataset& test,
                                          std::uint64_t seed) const = 0;
  // Below this size the valuation engine substitutes a constant predictor.
  virtual std::size_t min_fit_size() const { return 1; }
};

// 1-nearest-neighbour in encoded feature space. Cheap enough for the
// exact-enumeration oracle.
class OneNnLearner : public Learner {
 public:
  explicit OneNnLearner(bool classification = false)
      : classification_(classification) {}
  std::vector<double> fit_predict(const Dataset& train,
                                  std::span<const std::size_t> trainIdx,
                                  const Dataset& test,
                                  std::uint64_t seed) const override;

 private:
  bool classification_;
};

class ForestLearner : public Learner {
 public:
  explicit ForestLearner(ForestHyper hp) : hp_(hp) {}
  std::vector<double> fit_predict(const Dataset& train,
                                  std::span<const std::size_t> trainIdx,
                                  const Dataset& test,
                                  std::uint64_t seed) const override;
  std::size_t min_fit_size() const override { return 2 * hp_.minSamplesLeaf; }

 private:
  ForestHyper hp_;
};

// Higher is better for every kind (errors are negated).
struct PerfMetric {
  enum class Kind { NegMse, NegReweightedError, Recall0, Accuracy };
  Kind kind = Kind::NegMse;
  std::vector<double> testWeights;  // NegReweightedError only, aligned to test

  double score(const std::vector<double>& pred,
               const std::vector<double>& truth) const;
};

struct ShapleyConfig {
  double convergenceTol = 0.05;
  std::size_t convergenceWindow = 100;
  double maxIterFactor = 2.0;  // multiple of |train|
  double relaxedTol = 0.30;
  // Relative to |V(full)| when unset.
  std::optional<double> truncationTol;
  std::uint64_t seed = 0;
  // Run exactly this many permutations, ignoring the convergence criterion
  // (oracle-comparison mode).
  std::optional<std::size_t> fixedPermutations;
  std::size_t workers = 1;
};

struct ShapleyResult {
  std::vector<double> phi;
  std::size_t iterations = 0;
  bool converged = false;
  // Sparse running-mean snapshots (iteration, phi at that iteration).
  std::vector<std::pair<std::size_t, std::vector<double>>> history;
};

// Truncated Monte-Carlo data Shapley over random permutations of the
// training indices. V of the empty prefix is the score of the constant
// predictor equal to the full-train label mean (regression) or mode
// (classification).
ShapleyResult tmc_shapley(const Dataset& train, const Dataset& test,
                          const Learner& learner, const PerfMetric& metric,
                          const ShapleyConfig& cfg);

// Exact enumeration over all subsets, C = 1/n so that efficiency
// sum(phi) = V(D) - V(empty) holds exactly. |train| <= 12.
std::vector<double> exact_shapley(const Dataset& train, const Dataset& test,
                                  const Learner& learner, const PerfMetric& metric,
                                  std::uint64_t learnerSeed = 0);

// phi_i = V(D) - V(D \ {i}).
std::vector<double> loo_values(const Dataset& train, const Dataset& test,
                               const Learner& learner, const PerfMetric& metric,
                               std::uint64_t learnerSeed = 0);

enum class RemovalOrder { LowestFirst, HighestFirst, Random };

struct RemovalStep {
  double fractionRemoved = 0.0;
  double score = 0.0;
  std::size_t remaining = 0;
  std::vector<std::pair<double, std::size_t>> remainingClassCounts;
  std::vector<std::pair<double, std::size_t>> predictedClassCounts;
};

struct RemovalCurve {
  std::vector<RemovalStep> steps;
  bool truncated = false;  // remaining train fell below the learner minimum
};

RemovalCurve removal_curve(const Dataset& train, const Dataset& heldout,
                           const std::vector<double>& values,
                           const Learner& learner, const PerfMetric& metric,
                           double batchFrac, RemovalOrder order,
                           std::uint64_t seed = 0);

std::string shapley_csv(const ShapleyResult& r, const Dataset& train);
std::string shapley_geojson(const ShapleyResult& r, const Dataset& train);
std::string removal_curve_csv(const RemovalCurve& c);

}  // namespace sigmap

#endif

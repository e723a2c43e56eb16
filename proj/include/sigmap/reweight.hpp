#ifndef SIGMAP_REWEIGHT_HPP
#define SIGMAP_REWEIGHT_HPP

#include <functional>
#include <variant>

#include "sigmap/datamodel.hpp"
#include "sigmap/ingest.hpp"

namespace sigmap {

struct FixedBandwidth {
  double hM = 100.0;
};

// Abramson square-root-law adaptive bandwidths: a fixed-h pilot estimate
// s0, then h_i = pilotH * (s0(x_i)/g)^(-alpha) with g the geometric mean of
// s0 over the training points.
struct AdaptiveBandwidth {
  double pilotHM = 100.0;
  double alpha = 0.5;
};

// Fixed-bandwidth product kernel over (x, y, hourOfDay); the space-time
// variant for cells with extreme sampling concentration.
struct FixedSpaceTimeBandwidth {
  double hM = 100.0;
  double hHours = 2.0;
};

using KdeMode =
    std::variant<FixedBandwidth, AdaptiveBandwidth, FixedSpaceTimeBandwidth>;

struct KdePoint {
  XY xy;
  double hour = 0.0;
};

class DensityModel {
 public:
  static DensityModel fit(const std::vector<KdePoint>& locations, KdeMode mode);

  // Gaussian kernel sum / N, per m^2 (spatial modes) or per m^2-hour
  // (space-time mode).
  double density(const KdePoint& p) const;
  double density(const XY& p) const { return density(KdePoint{p, 0.0}); }

  const std::vector<double>& bandwidths() const { return bandwidths_; }
  const KdeMode& mode() const { return mode_; }
  bool space_time() const;

 private:
  std::vector<KdePoint> points_;
  std::vector<double> bandwidths_;  // per-point spatial bandwidth
  double hourBandwidth_ = 0.0;
  KdeMode mode_ = FixedBandwidth{};
};

struct CustomTarget {
  std::function<double(const LatLng&)> massAt;  // non-negative
};

struct UniformTarget {};

struct PopulationTarget {
  const PopulationGrid* grid = nullptr;
};

using TargetSpec = std::variant<UniformTarget, PopulationTarget, CustomTarget>;

struct ImportanceWeights {
  WeightVector weights;  // normalized to mean 1
  std::string targetKind;
  double normalization = 1.0;  // mean raw ratio divided out
  std::vector<double> densities;
  std::vector<double> targetMass;
};

// Builds KDE input points for a dataset in the given local frame.
std::vector<KdePoint> kde_points(const Dataset& d, const LocalFrame& frame);

// Raw ratio W(x)/s(x) per the target, normalized to mean 1. Densities below
// max(1e-12, 1e-6 * peak) are an error listing offending indices, not a
// clamp.
ImportanceWeights importance_ratios(const Dataset& d, const TargetSpec& target,
                                    const DensityModel& s, const LocalFrame& frame);

// (1/N) sum w_i (pred_i - truth_i)^2.
double reweighted_error(const std::vector<double>& pred,
                        const std::vector<double>& truth,
                        const std::vector<double>& w);

std::string importance_weights_csv(const ImportanceWeights& iw);

}  // namespace sigmap

#endif

#ifndef SIGMAP_BASELINES_HPP
#define SIGMAP_BASELINES_HPP

#include <memory>
#include <vector>

#include "sigmap/datamodel.hpp"

namespace sigmap {

// Training view for the spatial baselines: local-frame positions and labels.
struct SpatialSample {
  XY pos;
  double y = 0.0;
};

std::vector<SpatialSample> spatial_samples(const Dataset& d, const LocalFrame& frame);

// ------------------------------------------------------------------- LDPL

struct LdplModel {
  double p0Dbm = -30.0;
  double nHat = 2.0;
  double d0M = 1.0;
  XY bsLocation;

  double predict(const XY& l) const;
};

// Friis free-space received power at d0 = 1 m with 0 dBi gains, for a 0 dBm
// transmitter: P0 = -20 log10(4 pi d0 f / c).
double friis_p0_dbm(double freqHz, double d0M = 1.0);

// Closed-form least squares of y on -10 log10(d/d0) with fixed intercept p0.
LdplModel fit_ldpl_hom(const std::vector<SpatialSample>& train, const XY& bs,
                       double p0Dbm, double d0M);

struct LdplKnnModel {
  LdplModel base;
  std::vector<XY> positions;
  std::vector<double> perPointPle;
  std::size_t k = 10;

  // Inverse-distance-weighted mean PLE over the k nearest training points
  // (weights 1/max(dist, 1 m); a coincident training point wins outright).
  double ple_at(const XY& l) const;
  double predict(const XY& l) const;
};

LdplKnnModel fit_ldpl_knn(const std::vector<SpatialSample>& train, const XY& bs,
                          double p0Dbm, double d0M, std::size_t k);

// ---------------------------------------------------------------- kriging

struct SemivariogramBin {
  double lagM = 0.0;  // bin center
  double gammaHat = 0.0;
  std::size_t pairs = 0;
};

// Exponential model gamma(h) = nugget + sill * (1 - exp(-h/range)).
struct Semivariogram {
  double nugget = 0.0;
  double sill = 1.0;
  double rangeM = 100.0;
  std::vector<SemivariogramBin> bins;
  double maxLagM = 200.0;
  double binWidthM = 10.0;

  double gamma(double h) const;
};

// Empirical bins: gammaHat = half the mean squared label difference over
// pairs in the bin; model fitted by damped (Levenberg-Marquardt-style) least
// squares with non-negativity clamps.
Semivariogram fit_semivariogram(const std::vector<SpatialSample>& train,
                                double maxLagM, double binWidthM);

std::string semivariogram_bins_csv(const Semivariogram& sv);

struct OkPrediction {
  double mean = 0.0;
  double variance = 0.0;  // kriging variance
  double lambdaSum = 0.0; // diagnostics; 1 within 1e-9 by the constraint row
};

class KrigingModel {
 public:
  // Co-located duplicates are averaged before fitting.
  KrigingModel(std::vector<SpatialSample> train, Semivariogram sv,
               std::size_t kNeighbors = 10);

  OkPrediction predict(const XY& l) const;
  const Semivariogram& semivariogram() const { return sv_; }

 private:
  std::vector<SpatialSample> train_;
  Semivariogram sv_;
  std::size_t k_;
};

// --------------------------------------------------------------------- OKD

class OkdModel {
 public:
  OkdModel(const std::vector<SpatialSample>& train, const XY& bs, double p0Dbm,
           double d0M, double maxLagM = 200.0, double binWidthM = 10.0,
           std::size_t kNeighbors = 10);

  double predict(const XY& l) const;
  double mean_ple() const { return nHat_; }
  double trend(const XY& l) const;

 private:
  double nHat_;
  double p0_;
  double d0_;
  XY bs_;
  std::unique_ptr<KrigingModel> residualKriging_;
  bool zeroResiduals_ = false;
};

}  // namespace sigmap

#endif

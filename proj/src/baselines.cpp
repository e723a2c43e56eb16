#include "sigmap/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace sigmap {

std::vector<SpatialSample> spatial_samples(const Dataset& d, const LocalFrame& frame) {
  std::vector<SpatialSample> out;
  out.reserve(d.size());
  const std::vector<double> labels = d.labels();
  for (std::size_t i = 0; i < d.size(); ++i)
    out.push_back({to_local(frame, d.records()[i].location), labels[i]});
  return out;
}

// ---------------------------------------------------------------------- LDPL

double friis_p0_dbm(double freqHz, double d0M) {
  constexpr double c = 299792458.0;
  return -20.0 * std::log10(4.0 * kPi * d0M * freqHz / c);
}

double LdplModel::predict(const XY& l) const {
  double d = std::max(planar_dist(l, bsLocation), d0M);
  return p0Dbm - 10.0 * nHat * std::log10(d / d0M);
}

LdplModel fit_ldpl_hom(const std::vector<SpatialSample>& train, const XY& bs,
                       double p0Dbm, double d0M) {
  if (!(d0M > 0.0)) throw Error("ldpl: d0 must be positive");
  // y = p0 - n * z with z = 10 log10(d/d0); closed-form LS for n
  double szz = 0.0, sz = 0.0;
  for (const auto& s : train) {
    double d = planar_dist(s.pos, bs);
    if (d <= d0M) continue;
    double z = 10.0 * std::log10(d / d0M);
    szz += z * z;
    sz += z * (p0Dbm - s.y);
  }
  if (szz <= 0.0)
    throw Error("ldpl: no training point beyond d0 (regressor identically zero)");
  LdplModel m;
  m.p0Dbm = p0Dbm;
  m.d0M = d0M;
  m.bsLocation = bs;
  m.nHat = sz / szz;
  return m;
}

double LdplKnnModel::ple_at(const XY& l) const {
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i)
    dist.emplace_back(planar_dist(l, positions[i]), i);
  std::size_t kk = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(kk), dist.end());
  if (dist[0].first == 0.0) return perPointPle[dist[0].second];  // coincident point
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < kk; ++j) {
    double w = 1.0 / std::max(dist[j].first, 1.0);
    num += w * perPointPle[dist[j].second];
    den += w;
  }
  return num / den;
}

double LdplKnnModel::predict(const XY& l) const {
  double d = std::max(planar_dist(l, base.bsLocation), base.d0M);
  return base.p0Dbm - 10.0 * ple_at(l) * std::log10(d / base.d0M);
}

LdplKnnModel fit_ldpl_knn(const std::vector<SpatialSample>& train, const XY& bs,
                          double p0Dbm, double d0M, std::size_t k) {
  if (k < 1) throw Error("ldpl-knn: k must be >= 1");
  LdplKnnModel m;
  m.base = fit_ldpl_hom(train, bs, p0Dbm, d0M);
  for (const auto& s : train) {
    double d = planar_dist(s.pos, bs);
    if (d <= d0M) continue;  // perceived PLE undefined at the reference distance
    m.positions.push_back(s.pos);
    m.perPointPle.push_back((p0Dbm - s.y) / (10.0 * std::log10(d / d0M)));
  }
  if (m.positions.empty()) throw Error("ldpl-knn: no usable training points");
  m.k = std::min(k, m.positions.size());
  return m;
}

// -------------------------------------------------------------- semivariogram

double Semivariogram::gamma(double h) const {
  if (h <= 0.0) return nugget;
  return nugget + sill * (1.0 - std::exp(-h / rangeM));
}

namespace {

double sv_sse(const std::vector<SemivariogramBin>& bins, double nugget,
              double sill, double range) {
  double sse = 0.0;
  for (const auto& b : bins) {
    double m = nugget + sill * (1.0 - std::exp(-b.lagM / range));
    double r = b.gammaHat - m;
    sse += r * r;
  }
  return sse;
}

}  // namespace

Semivariogram fit_semivariogram(const std::vector<SpatialSample>& train,
                                double maxLagM, double binWidthM) {
  if (!(maxLagM > 0.0) || !(binWidthM > 0.0))
    throw Error("semivariogram: lag parameters must be positive");
  std::size_t nBins = static_cast<std::size_t>(std::ceil(maxLagM / binWidthM));
  std::vector<double> sumSq(nBins, 0.0);
  std::vector<std::size_t> pairs(nBins, 0);
  for (std::size_t i = 0; i < train.size(); ++i)
    for (std::size_t j = i + 1; j < train.size(); ++j) {
      double h = planar_dist(train[i].pos, train[j].pos);
      if (h >= maxLagM) continue;
      std::size_t b = static_cast<std::size_t>(h / binWidthM);
      double dy = train[i].y - train[j].y;
      sumSq[b] += dy * dy;
      ++pairs[b];
    }

  Semivariogram sv;
  sv.maxLagM = maxLagM;
  sv.binWidthM = binWidthM;
  for (std::size_t b = 0; b < nBins; ++b) {
    if (pairs[b] == 0) continue;
    SemivariogramBin bin;
    bin.lagM = (static_cast<double>(b) + 0.5) * binWidthM;
    bin.gammaHat = 0.5 * sumSq[b] / static_cast<double>(pairs[b]);
    bin.pairs = pairs[b];
    sv.bins.push_back(bin);
  }
  if (sv.bins.size() < 3)
    throw Error("semivariogram: fewer than 3 non-empty bins, fit underdetermined");

  // damped least squares on (nugget, sill, range) with clamped steps
  double nugget = sv.bins.front().gammaHat;
  double maxGamma = 0.0;
  for (const auto& b : sv.bins) maxGamma = std::max(maxGamma, b.gammaHat);
  double sill = std::max(maxGamma - nugget, 1e-12);
  double range = maxLagM / 3.0;
  double lambda = 1e-3;
  double sse = sv_sse(sv.bins, nugget, sill, range);
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::Matrix3d JtJ = Eigen::Matrix3d::Zero();
    Eigen::Vector3d Jtr = Eigen::Vector3d::Zero();
    for (const auto& b : sv.bins) {
      double e = std::exp(-b.lagM / range);
      double model = nugget + sill * (1.0 - e);
      double r = b.gammaHat - model;
      Eigen::Vector3d g;  // d(model)/d(params)
      g << 1.0, 1.0 - e, -sill * e * b.lagM / (range * range);
      JtJ += g * g.transpose();
      Jtr += g * r;
    }
    Eigen::Matrix3d damped = JtJ;
    for (int i = 0; i < 3; ++i) damped(i, i) += lambda * (JtJ(i, i) + 1e-12);
    Eigen::Vector3d step = damped.ldlt().solve(Jtr);
    double n2 = std::max(0.0, nugget + step(0));
    double s2 = std::max(1e-12, sill + step(1));
    double r2 = std::min(std::max(1e-6, range + step(2)), 100.0 * maxLagM);
    double sse2 = sv_sse(sv.bins, n2, s2, r2);
    if (sse2 < sse) {
      nugget = n2;
      sill = s2;
      range = r2;
      if (sse - sse2 < 1e-14 * (1.0 + sse)) { sse = sse2; break; }
      sse = sse2;
      lambda = std::max(lambda * 0.5, 1e-12);
    } else {
      lambda *= 4.0;
      if (lambda > 1e12) break;
    }
  }
  sv.nugget = nugget;
  sv.sill = sill;
  sv.rangeM = range;
  return sv;
}

std::string semivariogram_bins_csv(const Semivariogram& sv) {
  std::ostringstream out;
  out.precision(17);
  out << "lag_m,gamma_hat,pairs\n";
  for (const auto& b : sv.bins)
    out << b.lagM << ',' << b.gammaHat << ',' << b.pairs << '\n';
  return out.str();
}

// -------------------------------------------------------------------- kriging

KrigingModel::KrigingModel(std::vector<SpatialSample> train, Semivariogram sv,
                           std::size_t kNeighbors)
    : sv_(std::move(sv)), k_(kNeighbors) {
  // average co-located labels so the OK system stays nonsingular
  std::map<std::pair<double, double>, std::pair<double, std::size_t>> merged;
  for (const auto& s : train) {
    auto& acc = merged[{s.pos.x, s.pos.y}];
    acc.first += s.y;
    ++acc.second;
  }
  train_.reserve(merged.size());
  for (const auto& [pos, acc] : merged)
    train_.push_back({XY{pos.first, pos.second},
                      acc.first / static_cast<double>(acc.second)});
  if (train_.empty()) throw Error("kriging: empty training set");
  if (k_ > train_.size()) k_ = train_.size();
  if (k_ < 1) throw Error("kriging: kNeighbors must be >= 1");
}

OkPrediction KrigingModel::predict(const XY& l) const {
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(train_.size());
  for (std::size_t i = 0; i < train_.size(); ++i)
    dist.emplace_back(planar_dist(l, train_[i].pos), i);
  std::size_t k = std::min(k_, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());

  const long n = static_cast<long>(k);
  Eigen::MatrixXd A(n + 1, n + 1);
  Eigen::VectorXd b(n + 1);
  for (long i = 0; i < n; ++i) {
    const XY& pi = train_[dist[static_cast<std::size_t>(i)].second].pos;
    for (long j = 0; j < n; ++j) {
      const XY& pj = train_[dist[static_cast<std::size_t>(j)].second].pos;
      A(i, j) = i == j ? 0.0 : sv_.gamma(planar_dist(pi, pj));
    }
    A(i, n) = 1.0;
    A(n, i) = 1.0;
    b(i) = sv_.gamma(dist[static_cast<std::size_t>(i)].first);
  }
  A(n, n) = 0.0;
  b(n) = 1.0;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible())
    throw Error("kriging: singular system (degenerate semivariogram or geometry)");
  Eigen::VectorXd sol = lu.solve(b);

  OkPrediction out;
  for (long i = 0; i < n; ++i) {
    out.mean += sol(i) * train_[dist[static_cast<std::size_t>(i)].second].y;
    out.variance += sol(i) * b(i);
    out.lambdaSum += sol(i);
  }
  out.variance += sol(n);  // Lagrange multiplier term
  return out;
}

// ------------------------------------------------------------------------ OKD

OkdModel::OkdModel(const std::vector<SpatialSample>& train, const XY& bs,
                   double p0Dbm, double d0M, double maxLagM, double binWidthM,
                   std::size_t kNeighbors)
    : p0_(p0Dbm), d0_(d0M), bs_(bs) {
  std::vector<double> ples;
  for (const auto& s : train) {
    double d = planar_dist(s.pos, bs);
    if (d <= d0M) continue;
    ples.push_back((p0Dbm - s.y) / (10.0 * std::log10(d / d0M)));
  }
  if (ples.empty()) throw Error("okd: no training point beyond d0");
  double sum = 0.0;
  for (double n : ples) sum += n;
  nHat_ = sum / static_cast<double>(ples.size());

  std::vector<SpatialSample> residuals;
  double maxAbs = 0.0;
  for (const auto& s : train) {
    double delta = s.y - trend(s.pos);
    residuals.push_back({s.pos, delta});
    maxAbs = std::max(maxAbs, std::fabs(delta));
  }
  if (maxAbs < 1e-9) {
    zeroResiduals_ = true;  // pure-LDPL data; OKD reduces to the trend
    return;
  }
  Semivariogram sv = fit_semivariogram(residuals, maxLagM, binWidthM);
  residualKriging_ =
      std::make_unique<KrigingModel>(std::move(residuals), std::move(sv), kNeighbors);
}

double OkdModel::trend(const XY& l) const {
  double d = std::max(planar_dist(l, bs_), d0_);
  return p0_ - 10.0 * nHat_ * std::log10(d / d0_);
}

double OkdModel::predict(const XY& l) const {
  if (zeroResiduals_) return trend(l);
  return trend(l) + residualKriging_->predict(l).mean;
}

}  // namespace sigmap

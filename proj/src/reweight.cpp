#include "sigmap/reweight.hpp"

#include <cmath>
#include <sstream>

namespace sigmap {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

double kernel2d(double distSq, double h) {
  return std::exp(-distSq / (2.0 * h * h)) / (kTwoPi * h * h);
}
}  // namespace

bool DensityModel::space_time() const {
  return std::holds_alternative<FixedSpaceTimeBandwidth>(mode_);
}

DensityModel DensityModel::fit(const std::vector<KdePoint>& locations, KdeMode mode) {
  if (locations.size() < 2) throw Error("kde: need at least 2 locations");
  bool allSame = true;
  for (const auto& p : locations)
    if (p.xy.x != locations[0].xy.x || p.xy.y != locations[0].xy.y) {
      allSame = false;
      break;
    }
  if (allSame) throw Error("kde: all locations identical (degenerate density)");

  DensityModel m;
  m.points_ = locations;
  m.mode_ = mode;

  if (const auto* f = std::get_if<FixedBandwidth>(&mode)) {
    if (!(f->hM > 0.0)) throw Error("kde: bandwidth must be positive");
    m.bandwidths_.assign(locations.size(), f->hM);
  } else if (const auto* st = std::get_if<FixedSpaceTimeBandwidth>(&mode)) {
    if (!(st->hM > 0.0) || !(st->hHours > 0.0))
      throw Error("kde: bandwidths must be positive");
    m.bandwidths_.assign(locations.size(), st->hM);
    m.hourBandwidth_ = st->hHours;
  } else {
    const auto& a = std::get<AdaptiveBandwidth>(mode);
    if (!(a.pilotHM > 0.0)) throw Error("kde: pilot bandwidth must be positive");
    DensityModel pilot;
    pilot.points_ = locations;
    pilot.bandwidths_.assign(locations.size(), a.pilotHM);
    std::vector<double> s0(locations.size());
    double logSum = 0.0;
    for (std::size_t i = 0; i < locations.size(); ++i) {
      s0[i] = pilot.density(locations[i]);
      logSum += std::log(s0[i]);
    }
    double g = std::exp(logSum / static_cast<double>(locations.size()));
    m.bandwidths_.resize(locations.size());
    for (std::size_t i = 0; i < locations.size(); ++i)
      m.bandwidths_[i] = a.pilotHM * std::pow(s0[i] / g, -a.alpha);
  }
  return m;
}

double DensityModel::density(const KdePoint& p) const {
  double sum = 0.0;
  const bool st = hourBandwidth_ > 0.0;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    double dx = p.xy.x - points_[i].xy.x;
    double dy = p.xy.y - points_[i].xy.y;
    double k = kernel2d(dx * dx + dy * dy, bandwidths_[i]);
    if (st) {
      double dh = p.hour - points_[i].hour;
      k *= std::exp(-dh * dh / (2.0 * hourBandwidth_ * hourBandwidth_)) /
           std::sqrt(kTwoPi * hourBandwidth_ * hourBandwidth_);
    }
    sum += k;
  }
  return sum / static_cast<double>(points_.size());
}

std::vector<KdePoint> kde_points(const Dataset& d, const LocalFrame& frame) {
  std::vector<KdePoint> out;
  out.reserve(d.size());
  for (const auto& m : d.records())
    out.push_back({to_local(frame, m.location), static_cast<double>(m.hourOfDay)});
  return out;
}

ImportanceWeights importance_ratios(const Dataset& d, const TargetSpec& target,
                                    const DensityModel& s, const LocalFrame& frame) {
  if (d.empty()) throw Error("importance_ratios: empty dataset");
  const std::size_t n = d.size();
  ImportanceWeights out;
  out.densities.resize(n);
  out.targetMass.resize(n);

  std::vector<KdePoint> pts = kde_points(d, frame);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.densities[i] = s.density(pts[i]);
    peak = std::max(peak, out.densities[i]);
  }
  double floor = std::max(1e-12, 1e-6 * peak);
  std::vector<std::size_t> offenders;
  for (std::size_t i = 0; i < n; ++i)
    if (out.densities[i] < floor) offenders.push_back(i);
  if (!offenders.empty()) {
    std::ostringstream msg;
    msg << "importance_ratios: sampling density below floor at indices [";
    for (std::size_t k = 0; k < offenders.size() && k < 20; ++k)
      msg << (k ? "," : "") << offenders[k];
    if (offenders.size() > 20) msg << ",...";
    msg << "]; increase the KDE bandwidth";
    throw Error(msg.str());
  }

  for (std::size_t i = 0; i < n; ++i) {
    const LatLng& l = d.records()[i].location;
    double w;
    if (std::holds_alternative<UniformTarget>(target)) {
      out.targetKind = "uniform";
      w = 1.0;
    } else if (const auto* p = std::get_if<PopulationTarget>(&target)) {
      out.targetKind = "population";
      auto dm = p->grid->density(l);
      if (!dm)
        throw Error("importance_ratios: record " + std::to_string(i) +
                    " outside the population grid");
      w = *dm;
    } else {
      out.targetKind = "custom";
      w = std::get<CustomTarget>(target).massAt(l);
      if (!(w >= 0.0))
        throw Error("importance_ratios: custom target negative at record " +
                    std::to_string(i));
    }
    out.targetMass[i] = w;
  }

  std::vector<double> raw(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    raw[i] = out.targetMass[i] / out.densities[i];
    sum += raw[i];
  }
  double mean = sum / static_cast<double>(n);
  if (!(mean > 0.0)) throw Error("importance_ratios: target mass is zero everywhere");
  out.normalization = mean;
  out.weights.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.weights.weights[i] = raw[i] / mean;
  return out;
}

double reweighted_error(const std::vector<double>& pred,
                        const std::vector<double>& truth,
                        const std::vector<double>& w) {
  if (pred.size() != truth.size() || pred.size() != w.size())
    throw Error("reweighted_error: length mismatch");
  if (pred.empty()) throw Error("reweighted_error: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double e = pred[i] - truth[i];
    sum += w[i] * e * e;
  }
  return sum / static_cast<double>(pred.size());
}

std::string importance_weights_csv(const ImportanceWeights& iw) {
  std::ostringstream out;
  out.precision(17);
  out << "index,weight,density,target_mass\n";
  for (std::size_t i = 0; i < iw.weights.weights.size(); ++i)
    out << i << ',' << iw.weights.weights[i] << ',' << iw.densities[i] << ','
        << iw.targetMass[i] << '\n';
  return out.str();
}

}  // namespace sigmap

#include "sigmap/quality.hpp"

#include <cmath>
#include <set>

namespace sigmap {

std::string quality_name(QualityKind k) {
  switch (k) {
    case QualityKind::Identity: return "identity";
    case QualityKind::Coverage: return "coverage";
    case QualityKind::Bars: return "bars";
    case QualityKind::Cdp: return "cdp";
  }
  return "?";
}

CdpParams fit_cdp_two_point(double y1, double p1, double y2, double p2,
                            double c, KpiKind kind) {
  if (p1 <= c || p2 <= c) throw Error("cdp fit: anchor probabilities must exceed c");
  if (y1 == y2) throw Error("cdp fit: anchors coincide");
  // (p1-c)/(p2-c) = exp(-b (y1 - y2))
  double b = std::log((p1 - c) / (p2 - c)) / (y2 - y1);
  if (!(b > 0.0)) throw Error("cdp fit: anchors do not give a decreasing curve");
  double a = (p1 - c) * std::exp(b * y1);
  CdpParams out;
  out.a = a;
  out.b = b;
  out.c = c;
  out.fittedFor = kind;
  return out;
}

CdpParams default_cdp_rsrp() {
  return fit_cdp_two_point(-120.0, 0.50, -90.0, 0.02, 0.01, KpiKind::Rsrp);
}

CdpParams default_cdp_cqi() {
  return fit_cdp_two_point(1.0, 0.50, 10.0, 0.02, 0.01, KpiKind::Cqi);
}

QualityFn QualityFn::cdp(const CdpParams& p) {
  if (!(p.a > 0.0)) throw Error("cdp: a must be positive");
  if (!(p.b > 0.0)) throw Error("cdp: b must be positive");
  if (!(p.c >= 0.0 && p.c < 1.0)) throw Error("cdp: c must be in [0,1)");
  QualityFn q(QualityKind::Cdp);
  q.params_ = p;
  return q;
}

const CdpParams& QualityFn::cdp_params() const {
  if (kind_ != QualityKind::Cdp) throw Error("quality fn is not cdp");
  return params_;
}

int bars_of(double y) {
  if (y <= -124.0) return 0;
  if (y <= -115.0) return 1;
  if (y <= -105.0) return 2;
  if (y <= -85.0) return 3;
  return 4;
}

double QualityFn::apply(double y, KpiKind kind) const {
  switch (kind_) {
    case QualityKind::Identity:
      return y;
    case QualityKind::Coverage:
      return y <= kCoverageThresholdDbm ? 0.0 : 1.0;
    case QualityKind::Bars:
      return static_cast<double>(bars_of(y));
    case QualityKind::Cdp: {
      if (kind != params_.fittedFor)
        throw Error("cdp parameters were fitted for " + kpi_name(params_.fittedFor) +
                    ", not " + kpi_name(kind));
      double p = params_.a * std::exp(-params_.b * y) + params_.c;
      if (p < 0.0) p = 0.0;
      if (p > 1.0) p = 1.0;
      return p;
    }
  }
  throw Error("unknown quality kind");
}

double QualityFn::invert_cdp(double p) const {
  const CdpParams& q = cdp_params();
  if (p <= q.c)
    throw Error("invert_cdp: p <= c, below the invertible range");
  if (p >= 1.0)
    throw Error("invert_cdp: p >= 1, the clamp is not invertible");
  return -std::log((p - q.c) / q.a) / q.b;
}

Dataset transform_dataset(const Dataset& d, const QualityFn& q,
                          bool* singleClassWarning) {
  Dataset out = d;
  std::vector<double> labels;
  labels.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    labels.push_back(q.apply(d.label(i), d.label_kpi()));
  if (singleClassWarning) {
    std::set<double> distinct(labels.begin(), labels.end());
    *singleClassWarning = q.classification_output() && distinct.size() <= 1;
  }
  if (q.kind() == QualityKind::Identity)
    return out;
  out.set_label_override(std::move(labels), q.classification_output());
  return out;
}

}  // namespace sigmap

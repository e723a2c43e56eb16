#ifndef SIGMAP_QUALITY_HPP
#define SIGMAP_QUALITY_HPP

#include "sigmap/datamodel.hpp"

namespace sigmap {

enum class QualityKind { Identity, Coverage, Bars, Cdp };

std::string quality_name(QualityKind k);

// Exponential call-drop model a*exp(-b*y) + c, clamped to [0,1].
struct CdpParams {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  KpiKind fittedFor = KpiKind::Rsrp;
};

// Solves a*exp(-b*y1)+c = p1, a*exp(-b*y2)+c = p2 for a, b given c.
CdpParams fit_cdp_two_point(double y1, double p1, double y2, double p2,
                            double c, KpiKind kind);

// Default RSRP fit: Q(-120) = 0.50, Q(-90) = 0.02, c = 0.01. Shape matches
// empirical call-drop curves: near zero above -100 dBm, steep below.
CdpParams default_cdp_rsrp();
// Default CQI fit: Q(1) = 0.50, Q(10) = 0.02, c = 0.01.
CdpParams default_cdp_cqi();

inline constexpr double kCoverageThresholdDbm = -115.0;

class QualityFn {
 public:
  static QualityFn identity() { return QualityFn(QualityKind::Identity); }
  static QualityFn coverage() { return QualityFn(QualityKind::Coverage); }
  static QualityFn bars() { return QualityFn(QualityKind::Bars); }
  static QualityFn cdp(const CdpParams& p);

  QualityKind kind() const { return kind_; }
  const CdpParams& cdp_params() const;

  // Bars boundaries are lower-exclusive / upper-inclusive:
  //   0: y <= -124, 1: (-124,-115], 2: (-115,-105], 3: (-105,-85], 4: y > -85
  // so Coverage(y) = 0 exactly when Bars(y) is 0 or 1.
  double apply(double y, KpiKind kind = KpiKind::Rsrp) const;

  // Inverse of the CDP curve: y = -ln((p-c)/a)/b. Only valid strictly inside
  // the unclamped range; p <= c or p >= 1 is an error.
  double invert_cdp(double p) const;

  bool classification_output() const {
    return kind_ == QualityKind::Coverage || kind_ == QualityKind::Bars;
  }

 private:
  explicit QualityFn(QualityKind k) : kind_(k) {}
  QualityKind kind_;
  CdpParams params_;
};

int bars_of(double rsrpDbm);

// Features untouched; labels replaced by apply(q, y). Coverage/Bars mark the
// dataset classification-labeled. Returns the number of distinct label values
// via singleClassWarning when the output collapses to one class.
Dataset transform_dataset(const Dataset& d, const QualityFn& q,
                          bool* singleClassWarning = nullptr);

}  // namespace sigmap

#endif

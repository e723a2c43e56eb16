#include "sigmap/geo.hpp"

namespace sigmap {

double distance_m(const LatLng& a, const LatLng& b) {
  double phi1 = deg2rad(a.lat);
  double phi2 = deg2rad(b.lat);
  double dphi = deg2rad(b.lat - a.lat);
  double dlam = deg2rad(b.lng - a.lng);
  double s1 = std::sin(dphi / 2.0);
  double s2 = std::sin(dlam / 2.0);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  if (h > 1.0) h = 1.0;
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

}  // namespace sigmap

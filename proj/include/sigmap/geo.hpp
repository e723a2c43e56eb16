#ifndef SIGMAP_GEO_HPP
#define SIGMAP_GEO_HPP

#include <cmath>
#include <utility>

namespace sigmap {

struct LatLng {
  double lat = 0.0;
  double lng = 0.0;
};

inline constexpr double kEarthRadiusM = 6371000.0;
inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }

// Haversine great-circle distance on the mean Earth radius.
double distance_m(const LatLng& a, const LatLng& b);

// Equirectangular local tangent frame. Adequate for study areas up to a few
// tens of km; agrees with haversine within 0.5% at those scales.
struct LocalFrame {
  LatLng origin;
  double metersPerDegLat = 0.0;
  double metersPerDegLng = 0.0;

  static LocalFrame at(const LatLng& origin) {
    LocalFrame f;
    f.origin = origin;
    f.metersPerDegLat = kEarthRadiusM * kPi / 180.0;
    f.metersPerDegLng = f.metersPerDegLat * std::cos(deg2rad(origin.lat));
    return f;
  }
};

struct XY {
  double x = 0.0;  // meters east of origin
  double y = 0.0;  // meters north of origin
};

inline XY to_local(const LocalFrame& f, const LatLng& p) {
  return XY{(p.lng - f.origin.lng) * f.metersPerDegLng,
            (p.lat - f.origin.lat) * f.metersPerDegLat};
}

inline LatLng from_local(const LocalFrame& f, const XY& p) {
  return LatLng{f.origin.lat + p.y / f.metersPerDegLat,
                f.origin.lng + p.x / f.metersPerDegLng};
}

inline double planar_dist(const XY& a, const XY& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace sigmap

#endif

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sigmap/geo.hpp"
#include "sigmap/rng.hpp"

using namespace sigmap;

TEST_CASE("rng: determinism and stream derivation") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(derive_seed(42, 0) == derive_seed(42, 0));
  CHECK(derive_seed(42, 0) != derive_seed(42, 1));
  CHECK(derive_seed(42, 0) != derive_seed(43, 0));
}

TEST_CASE("rng: bounded draws stay in range") {
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    CHECK(r.next_below(13) < 13);
    double d = r.next_double();
    CHECK(d >= 0.0);
    CHECK(d < 1.0);
  }
  CHECK(Rng(1).next_below(1) == 0);
  CHECK(Rng(1).next_below(0) == 0);
}

TEST_CASE("rng: shuffle is a permutation") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> orig = v;
  Rng r(3);
  r.shuffle(v);
  CHECK(v != orig);  // 50! leaves essentially no chance of identity
  std::sort(v.begin(), v.end());
  CHECK(v == orig);
}

TEST_CASE("rng: normal moments") {
  Rng r(11);
  const int n = 20000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = r.next_normal();
    sum += x;
    sq += x * x;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("geo: haversine identity, hand value, symmetry") {
  LatLng p{12.3, 45.6};
  CHECK(distance_m(p, p) == doctest::Approx(0.0));
  // One degree of longitude along the equator on R = 6,371,000 m.
  CHECK(distance_m(LatLng{0, 0}, LatLng{0, 1}) ==
        doctest::Approx(111194.93).epsilon(0.5 / 111194.93));
  Rng r(5);
  for (int i = 0; i < 50; ++i) {
    LatLng a{r.uniform(-80, 80), r.uniform(-179, 179)};
    LatLng b{r.uniform(-80, 80), r.uniform(-179, 179)};
    CHECK(distance_m(a, b) == doctest::Approx(distance_m(b, a)).epsilon(1e-12));
  }
}

TEST_CASE("geo: triangle inequality on sampled triples") {
  Rng r(9);
  for (int i = 0; i < 200; ++i) {
    LatLng a{r.uniform(-60, 60), r.uniform(-179, 179)};
    LatLng b{r.uniform(-60, 60), r.uniform(-179, 179)};
    LatLng c{r.uniform(-60, 60), r.uniform(-179, 179)};
    double ab = distance_m(a, b), bc = distance_m(b, c), ac = distance_m(a, c);
    CHECK(ac <= ab + bc + 1e-6 * (ab + bc));
  }
}

TEST_CASE("geo: local frame basics") {
  LatLng origin{37.0, -122.0};
  LocalFrame f = LocalFrame::at(origin);
  XY o = to_local(f, origin);
  CHECK(o.x == doctest::Approx(0.0));
  CHECK(o.y == doctest::Approx(0.0));

  // 0.001 deg of longitude at the equator is ~111.19 m.
  LocalFrame eq = LocalFrame::at(LatLng{0, 0});
  XY q = to_local(eq, LatLng{0, 0.001});
  CHECK(q.x == doctest::Approx(111.19493).epsilon(1e-4));

  Rng r(13);
  for (int i = 0; i < 100; ++i) {
    LatLng p{origin.lat + r.uniform(-0.1, 0.1), origin.lng + r.uniform(-0.1, 0.1)};
    LatLng back = from_local(f, to_local(f, p));
    CHECK(back.lat == doctest::Approx(p.lat).epsilon(1e-12));
    CHECK(back.lng == doctest::Approx(p.lng).epsilon(1e-12));
  }
}

TEST_CASE("geo: projection agrees with haversine under 20 km, |lat| < 60") {
  Rng r(17);
  for (int i = 0; i < 200; ++i) {
    LatLng a{r.uniform(-59, 59), r.uniform(-179, 179)};
    // offsets below ~20 km
    double dLat = r.uniform(-0.1, 0.1);
    double dLng = r.uniform(-0.1, 0.1);
    LatLng b{a.lat + dLat, a.lng + dLng};
    LocalFrame f = LocalFrame::at(a);
    double proj = planar_dist(to_local(f, a), to_local(f, b));
    double hav = distance_m(a, b);
    if (hav > 1.0) CHECK(std::abs(proj - hav) / hav < 0.005);
  }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "sigmap/reweight.hpp"
#include "sigmap/rng.hpp"

using namespace sigmap;

namespace {

Measurement mk(double lat, double lng) {
  Measurement m;
  m.location = {lat, lng};
  m.timestampUtc = 1600000000;
  m.dayOfWeek = 1;
  m.hourOfDay = 12;
  m.cell = CellId{310, 410, 7, 1};
  m.deviceModel = "d";
  m.rsrp = -90.0;
  return m;
}

std::vector<KdePoint> pts(std::initializer_list<XY> xs) {
  std::vector<KdePoint> out;
  for (const XY& p : xs) out.push_back(KdePoint{p, 0.0});
  return out;
}

}  // namespace

TEST_CASE("fixed-h density matches the closed-form Gaussian kernel") {
  // Two points so far apart that each kernel is isolated: the density near
  // either one is the single-kernel closed form divided by N = 2.
  double h = 50.0;
  DensityModel s =
      DensityModel::fit(pts({XY{0, 0}, XY{50000, 0}}), FixedBandwidth{h});
  CHECK(s.density(XY{0, 0}) ==
        doctest::Approx(0.5 / (2.0 * kPi * h * h)).epsilon(1e-12));
  // One bandwidth away: times exp(-1/2).
  CHECK(s.density(XY{h, 0}) ==
        doctest::Approx(0.5 * std::exp(-0.5) / (2.0 * kPi * h * h)).epsilon(1e-12));
  // Far from both kernels: essentially zero against the peak.
  CHECK(s.density(XY{25000, 40000}) < 1e-12 * s.density(XY{0, 0}));
}

TEST_CASE("cluster density peaks at the centroid") {
  DensityModel s = DensityModel::fit(
      pts({XY{-30, 0}, XY{30, 0}, XY{0, -30}, XY{0, 30}}), FixedBandwidth{60.0});
  double center = s.density(XY{0, 0});
  for (double r : {100.0, 200.0, 400.0})
    for (double a = 0.0; a < 6.0; a += 0.7)
      CHECK(center > s.density(XY{r * std::cos(a), r * std::sin(a)}));
}

TEST_CASE("quadrature mass of the fixed-h estimate is one") {
  Rng r(19);
  std::vector<KdePoint> p;
  for (int i = 0; i < 40; ++i)
    p.push_back(KdePoint{XY{r.uniform(-200, 200), r.uniform(-200, 200)}, 0.0});
  DensityModel s = DensityModel::fit(p, FixedBandwidth{40.0});
  double step = 10.0, mass = 0.0;
  for (double x = -600; x <= 600; x += step)
    for (double y = -600; y <= 600; y += step)
      mass += s.density(XY{x, y}) * step * step;
  CHECK(mass == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("density is translation equivariant") {
  Rng r(29);
  std::vector<KdePoint> a, b;
  XY shift{312.5, -87.25};
  for (int i = 0; i < 25; ++i) {
    XY q{r.uniform(-150, 150), r.uniform(-150, 150)};
    a.push_back(KdePoint{q, 0.0});
    b.push_back(KdePoint{XY{q.x + shift.x, q.y + shift.y}, 0.0});
  }
  for (KdeMode mode : {KdeMode{FixedBandwidth{70.0}},
                       KdeMode{AdaptiveBandwidth{70.0, 0.5}}}) {
    DensityModel sa = DensityModel::fit(a, mode);
    DensityModel sb = DensityModel::fit(b, mode);
    for (int i = 0; i < 10; ++i) {
      XY q{r.uniform(-100, 100), r.uniform(-100, 100)};
      double da = sa.density(q);
      double db = sb.density(XY{q.x + shift.x, q.y + shift.y});
      CHECK(da == doctest::Approx(db).epsilon(1e-12));
    }
  }
}

TEST_CASE("adaptive bandwidths widen in sparse regions and narrow in dense") {
  // Tight cluster near the origin plus isolated outliers far away.
  std::vector<KdePoint> p;
  Rng r(41);
  for (int i = 0; i < 30; ++i)
    p.push_back(KdePoint{XY{r.uniform(-20, 20), r.uniform(-20, 20)}, 0.0});
  p.push_back(KdePoint{XY{900, 900}, 0.0});
  p.push_back(KdePoint{XY{-950, 880}, 0.0});
  DensityModel s = DensityModel::fit(p, AdaptiveBandwidth{60.0, 0.5});
  const std::vector<double>& h = s.bandwidths();
  REQUIRE(h.size() == p.size());
  double clusterMax = *std::max_element(h.begin(), h.begin() + 30);
  CHECK(h[30] > clusterMax);  // isolated points get wider kernels
  CHECK(h[31] > clusterMax);
  // Abramson normalization: geometric mean of s0 maps to the pilot h.
  for (double v : h) CHECK(v > 0.0);
}

TEST_CASE("space-time mode separates coincident locations at different hours") {
  std::vector<KdePoint> p;
  for (int i = 0; i < 10; ++i)
    p.push_back(KdePoint{XY{static_cast<double>(i % 3), 0}, 8.0});
  for (int i = 0; i < 2; ++i)
    p.push_back(KdePoint{XY{static_cast<double>(i), 0}, 20.0});
  DensityModel s = DensityModel::fit(p, FixedSpaceTimeBandwidth{50.0, 1.0});
  CHECK(s.space_time());
  CHECK(s.density(KdePoint{XY{0, 0}, 8.0}) > s.density(KdePoint{XY{0, 0}, 20.0}));
  DensityModel flat = DensityModel::fit(p, FixedBandwidth{50.0});
  CHECK_FALSE(flat.space_time());
  CHECK(flat.density(KdePoint{XY{0, 0}, 8.0}) ==
        doctest::Approx(flat.density(KdePoint{XY{0, 0}, 20.0})).epsilon(1e-12));
}

TEST_CASE("grid-uniform data under a uniform target gets near-unit weights") {
  std::vector<Measurement> recs;
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j)
      recs.push_back(mk(40.0 + i * 4e-4, -75.0 + j * 4e-4));
  Dataset d(recs, KpiKind::Rsrp, FeatureSelector::XY);
  LocalFrame frame = LocalFrame::at({40.0022, -74.9978});
  DensityModel s = DensityModel::fit(kde_points(d, frame), FixedBandwidth{120.0});
  ImportanceWeights iw = importance_ratios(d, UniformTarget{}, s, frame);
  double mean = std::accumulate(iw.weights.weights.begin(),
                                iw.weights.weights.end(), 0.0) /
                static_cast<double>(recs.size());
  CHECK(mean == doctest::Approx(1.0).epsilon(1e-9));  // mean-1 normalization
  // Edge records see less kernel mass, so under mean-1 normalization the
  // interior sits somewhat below 1 — but it must be flat: interior weights
  // agree with each other far more tightly than with the corner weights.
  double lo = 1e9, hi = 0.0;
  for (int i = 4; i < 8; ++i)
    for (int j = 4; j < 8; ++j) {
      double w = iw.weights.weights[static_cast<std::size_t>(i * 12 + j)];
      lo = std::min(lo, w);
      hi = std::max(hi, w);
    }
  CHECK(hi / lo < 1.10);
  CHECK(lo > 0.4);
  CHECK(hi < 1.2);
  double corner = iw.weights.weights[0];
  CHECK(corner > 1.5 * hi);  // under-sampled edge is up-weighted
}

TEST_CASE("duplicated location halves its importance ratio") {
  // Two records at A, one at B, far enough apart that kernels do not mix.
  std::vector<Measurement> recs = {mk(40.0, -75.0), mk(40.0, -75.0),
                                   mk(40.02, -75.0)};
  Dataset d(recs, KpiKind::Rsrp, FeatureSelector::XY);
  LocalFrame frame = LocalFrame::at({40.01, -75.0});
  DensityModel s = DensityModel::fit(kde_points(d, frame), FixedBandwidth{30.0});
  ImportanceWeights iw = importance_ratios(d, UniformTarget{}, s, frame);
  // Raw ratios 1/2 : 1/2 : 1 normalize to 3/4 : 3/4 : 3/2.
  CHECK(iw.weights.weights[0] == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(iw.weights.weights[1] == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(iw.weights.weights[2] == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(iw.weights.weights[2] / iw.weights.weights[0] ==
        doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("a custom target proportional to the sampling density gives unit weights") {
  Rng r(53);
  std::vector<Measurement> recs;
  for (int i = 0; i < 40; ++i)
    recs.push_back(mk(40.0 + r.uniform(0, 5e-3), -75.0 + r.uniform(0, 5e-3)));
  Dataset d(recs, KpiKind::Rsrp, FeatureSelector::XY);
  LocalFrame frame = LocalFrame::at({40.0025, -74.9975});
  DensityModel s = DensityModel::fit(kde_points(d, frame), FixedBandwidth{80.0});
  CustomTarget t;
  // Target mass = 7x the estimated density; the scale must cancel.
  t.massAt = [&](const LatLng& p) { return 7.0 * s.density(to_local(frame, p)); };
  ImportanceWeights iw = importance_ratios(d, TargetSpec{t}, s, frame);
  for (double w : iw.weights.weights) CHECK(w == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("weights are invariant to rescaling the target") {
  std::vector<Measurement> recs;
  Rng r(61);
  for (int i = 0; i < 30; ++i)
    recs.push_back(mk(40.0 + r.uniform(0, 4e-3), -75.0 + r.uniform(0, 4e-3)));
  Dataset d(recs, KpiKind::Rsrp, FeatureSelector::XY);
  LocalFrame frame = LocalFrame::at({40.002, -74.998});
  DensityModel s = DensityModel::fit(kde_points(d, frame), FixedBandwidth{60.0});
  CustomTarget t1, t2;
  t1.massAt = [](const LatLng& p) { return 1.0 + std::abs(p.lat - 40.0) * 100.0; };
  t2.massAt = [&](const LatLng& p) { return 1000.0 * t1.massAt(p); };
  ImportanceWeights a = importance_ratios(d, TargetSpec{t1}, s, frame);
  ImportanceWeights b = importance_ratios(d, TargetSpec{t2}, s, frame);
  for (std::size_t i = 0; i < recs.size(); ++i)
    CHECK(a.weights.weights[i] ==
          doctest::Approx(b.weights.weights[i]).epsilon(1e-12));
}

TEST_CASE("density floor violations are an error naming the culprits") {
  // One record extremely far from the kernel mass.
  std::vector<Measurement> recs = {mk(40.0, -75.0), mk(40.001, -75.0),
                                   mk(41.5, -75.0)};
  Dataset d(recs, KpiKind::Rsrp, FeatureSelector::XY);
  LocalFrame frame = LocalFrame::at({40.0, -75.0});
  // Density fitted on the two near points only, so the far record falls
  // below the floor when ratios are evaluated.
  DensityModel s = DensityModel::fit(
      pts({to_local(frame, recs[0].location), to_local(frame, recs[1].location)}),
      FixedBandwidth{40.0});
  try {
    importance_ratios(d, UniformTarget{}, s, frame);
    FAIL("expected a density-floor error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("2") != std::string::npos);  // offending index is named
  }
}

TEST_CASE("reweighted error arithmetic") {
  // Hand value: ((1)(1)^2 + (3)(-1)^2 + (0)(100)^2) / 3 = 4/3... with w =
  // {1,3,0} and residuals {1,-1,100}: (1 + 3 + 0)/3 = 4/3.
  std::vector<double> pred = {1.0, 2.0, 100.0};
  std::vector<double> truth = {0.0, 3.0, 0.0};
  CHECK(reweighted_error(pred, truth, {1.0, 3.0, 0.0}) ==
        doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  // Documented hand value: residuals {1, 2}, w {2, 1.5} -> (2 + 6)/2 = 4... and
  // residuals {1, 1}, w {2, 2} -> 2.0.
  CHECK(reweighted_error({1.0, 1.0}, {0.0, 0.0}, {2.0, 2.0}) ==
        doctest::Approx(2.0).epsilon(1e-12));
  // Unit weights reduce to the MSE.
  CHECK(reweighted_error(pred, truth, {1.0, 1.0, 1.0}) ==
        doctest::Approx((1.0 + 1.0 + 10000.0) / 3.0).epsilon(1e-12));
  // Perfect predictions score zero regardless of weights.
  CHECK(reweighted_error(truth, truth, {5.0, 0.1, 2.0}) == 0.0);
  CHECK_THROWS_AS(reweighted_error(pred, truth, {1.0}), Error);
}

TEST_CASE("importance weight csv lists every record") {
  std::vector<Measurement> recs = {mk(40.0, -75.0), mk(40.001, -75.0)};
  Dataset d(recs, KpiKind::Rsrp, FeatureSelector::XY);
  LocalFrame frame = LocalFrame::at({40.0, -75.0});
  DensityModel s = DensityModel::fit(kde_points(d, frame), FixedBandwidth{80.0});
  ImportanceWeights iw = importance_ratios(d, UniformTarget{}, s, frame);
  std::string csv = importance_weights_csv(iw);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 rows
  CHECK(csv.find("weight") != std::string::npos);
}

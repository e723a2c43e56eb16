#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "sigmap/quality.hpp"

using namespace sigmap;

namespace {

Measurement mk(double rsrp) {
  Measurement m;
  m.location = {40.0, -75.0};
  m.timestampUtc = 1600000000;
  m.cell = CellId{310, 410, 1, 1};
  m.deviceModel = "d";
  m.rsrp = rsrp;
  return m;
}

}  // namespace

TEST_CASE("coverage indicator threshold") {
  QualityFn q = QualityFn::coverage();
  CHECK(q.apply(-120.0) == 0.0);
  CHECK(q.apply(-80.0) == 1.0);
  CHECK(q.apply(-115.0) == 0.0);       // boundary: <= -115 is bad coverage
  CHECK(q.apply(-114.9999) == 1.0);
}

TEST_CASE("signal bars levels and boundaries") {
  CHECK(bars_of(-124.0) == 0);
  CHECK(bars_of(-90.0) == 3);
  CHECK(bars_of(-50.0) == 4);
  // lower-exclusive / upper-inclusive interval edges
  CHECK(bars_of(-123.9999) == 1);
  CHECK(bars_of(-115.0) == 1);
  CHECK(bars_of(-114.9999) == 2);
  CHECK(bars_of(-105.0) == 2);
  CHECK(bars_of(-85.0) == 3);
  CHECK(bars_of(-84.9999) == 4);
}

TEST_CASE("coverage and bars agree: bad coverage iff 0-1 bars") {
  QualityFn cov = QualityFn::coverage();
  for (double y = -150.0; y <= -30.0; y += 0.03125) {
    bool bad = cov.apply(y) == 0.0;
    int b = bars_of(y);
    CHECK(bad == (b <= 1));
  }
}

TEST_CASE("cdp two-point fit hits its anchors") {
  CdpParams p = default_cdp_rsrp();
  QualityFn q = QualityFn::cdp(p);
  CHECK(q.apply(-120.0) == doctest::Approx(0.50).epsilon(1e-9));
  CHECK(q.apply(-90.0) == doctest::Approx(0.02).epsilon(1e-9));
  CHECK(p.c == 0.01);
  CHECK(p.a > 0.0);
  CHECK(p.b > 0.0);
  // Monotone decreasing in y; steep at low RSRP, near-flat above -100 dBm.
  CHECK(q.apply(-120.0) > q.apply(-90.0));
  CHECK(q.apply(-130.0) > q.apply(-120.0));
  CHECK(q.apply(-80.0) < 0.02);
  // Saturation: clamped to 1 deep in the dropout zone.
  CHECK(q.apply(-150.0) == 1.0);

  CdpParams cqi = default_cdp_cqi();
  QualityFn qc = QualityFn::cdp(cqi);
  CHECK(qc.apply(1.0, KpiKind::Cqi) == doctest::Approx(0.50).epsilon(1e-9));
  CHECK(qc.apply(10.0, KpiKind::Cqi) == doctest::Approx(0.02).epsilon(1e-9));
}

TEST_CASE("cdp applied to the wrong KPI kind is an error") {
  QualityFn q = QualityFn::cdp(default_cdp_rsrp());
  CHECK_THROWS_AS(q.apply(-90.0, KpiKind::Cqi), Error);
}

TEST_CASE("cdp inversion round trip and domain errors") {
  QualityFn q = QualityFn::cdp(default_cdp_rsrp());
  const CdpParams& p = q.cdp_params();
  // 100 grid points strictly inside the invertible band.
  for (int i = 1; i <= 100; ++i) {
    double prob = p.c + (1.0 - p.c) * i / 101.5;
    double y = q.invert_cdp(prob);
    CHECK(q.apply(y) == doctest::Approx(prob).epsilon(1e-9));
  }
  // p = c + a corresponds to y = 0 dBm formally.
  CHECK(q.invert_cdp(p.c + p.a) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK_THROWS_AS(q.invert_cdp(p.c), Error);        // at or below the floor
  CHECK_THROWS_AS(q.invert_cdp(p.c / 2.0), Error);
  CHECK_THROWS_AS(q.invert_cdp(1.0), Error);        // at or above saturation
}

TEST_CASE("cdp parameter validation") {
  CdpParams bad;
  bad.a = -1.0;
  bad.b = 0.1;
  bad.c = 0.01;
  CHECK_THROWS_AS(QualityFn::cdp(bad), Error);
  bad.a = 1e-6;
  bad.b = 0.0;
  CHECK_THROWS_AS(QualityFn::cdp(bad), Error);
  bad.b = 0.1;
  bad.c = 1.0;
  CHECK_THROWS_AS(QualityFn::cdp(bad), Error);
}

TEST_CASE("transform_dataset semantics") {
  std::vector<Measurement> recs = {mk(-120), mk(-100), mk(-80)};
  Dataset d(recs, KpiKind::Rsrp, FeatureSelector::XY);

  Dataset ident = transform_dataset(d, QualityFn::identity());
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(ident.label(i) == d.label(i));
  CHECK_FALSE(ident.classification_labels());

  Dataset cov = transform_dataset(d, QualityFn::coverage());
  CHECK(cov.classification_labels());
  CHECK(cov.label(0) == 0.0);
  CHECK(cov.label(1) == 1.0);

  // All labels above the threshold: one class, warning raised.
  std::vector<Measurement> good = {mk(-100), mk(-90), mk(-80)};
  bool warn = false;
  Dataset covGood = transform_dataset(
      Dataset(good, KpiKind::Rsrp, FeatureSelector::XY), QualityFn::coverage(),
      &warn);
  CHECK(warn);
  for (std::size_t i = 0; i < covGood.size(); ++i) CHECK(covGood.label(i) == 1.0);

  Dataset bars = transform_dataset(d, QualityFn::bars());
  CHECK(bars.classification_labels());
  CHECK(bars.label(0) == 1.0);
  CHECK(bars.label(2) == 4.0);

  Dataset cdp = transform_dataset(d, QualityFn::cdp(default_cdp_rsrp()));
  CHECK_FALSE(cdp.classification_labels());
  for (std::size_t i = 0; i < cdp.size(); ++i) {
    CHECK(cdp.label(i) >= 0.0);
    CHECK(cdp.label(i) <= 1.0);
  }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "sigmap/synth.hpp"

using namespace sigmap;

namespace {

GroundTruth simple_gt(double n = 2.0, double shadow = 0.0) {
  GroundTruth gt;
  gt.frame = LocalFrame::at({40.0, -75.0});
  gt.stations = {Station{CellId{310, 410, 1, 1}, {40.0, -75.0}, -30.0}};
  gt.pleField = {PleSeed{{40.0, -75.0}, n}};
  gt.shadowSigmaDb = shadow;
  return gt;
}

LatLng offset_m(const GroundTruth& gt, double eastM, double northM) {
  return from_local(gt.frame, XY{eastM, northM});
}

}  // namespace

TEST_CASE("path-loss mean: hand values") {
  GroundTruth gt = simple_gt(2.0);
  const CellId cell = gt.stations[0].cell;
  // P0 = -30, n = 2, d = 100 m, d0 = 1 m.
  CHECK(true_rsrp(gt, cell, offset_m(gt, 100.0, 0.0)) ==
        doctest::Approx(-70.0).epsilon(1e-9));
  // At the reference distance the log term vanishes. (The clamp flag is
  // checked away from d0: projecting exactly 1 m out and back can land an
  // ulp inside the near field.)
  CHECK(true_rsrp(gt, cell, offset_m(gt, 1.0, 0.0)) ==
        doctest::Approx(-30.0).epsilon(1e-9));
  bool clamped = true;
  CHECK(true_rsrp(gt, cell, offset_m(gt, 2.0, 0.0), &clamped) ==
        doctest::Approx(-30.0 - 20.0 * std::log10(2.0)).epsilon(1e-6));
  CHECK_FALSE(clamped);
  // Doubling distance at n = 2 drops the mean by 20 log10(2).
  double y1 = true_rsrp(gt, cell, offset_m(gt, 200.0, 0.0));
  double y2 = true_rsrp(gt, cell, offset_m(gt, 400.0, 0.0));
  CHECK(y1 - y2 == doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-9));
  // Inside the near field the distance clamps to d0 with a flag.
  clamped = false;
  CHECK(true_rsrp(gt, cell, offset_m(gt, 0.1, 0.0), &clamped) ==
        doctest::Approx(-30.0));
  CHECK(clamped);
}

TEST_CASE("ple field validation and region lookup") {
  GroundTruth gt = simple_gt();
  gt.pleField = {PleSeed{{40.0, -75.0}, 2.0}, PleSeed{{40.01, -75.0}, 4.0}};
  CHECK(gt.ple_at({40.001, -75.0}) == 2.0);
  CHECK(gt.ple_at({40.009, -75.0}) == 4.0);
  gt.pleField[0].exponent = 1.0;  // outside [2, 6]
  CHECK_THROWS_AS(gt.validate(), Error);
  gt.pleField.clear();
  CHECK_THROWS_AS(gt.validate(), Error);
}

TEST_CASE("zero shadowing: labels equal the noise-free mean") {
  GroundTruth gt = simple_gt(3.0, 0.0);
  UniformSampling proc{{40.0, -75.0}, {40.009, -74.989}};
  Dataset d = sample_measurements(gt, proc, 50, TimeModel{}, 3);
  REQUIRE(d.size() == 50);
  for (const auto& m : d.records()) {
    double want = true_rsrp(gt, m.cell, m.location);
    CHECK(m.rsrp == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("uniform sampler: chi-square over a 20-bin grid") {
  GroundTruth gt = simple_gt();
  UniformSampling proc{{40.0, -75.0}, {40.01, -74.99}};
  const std::size_t n = 10000;
  Dataset d = sample_measurements(gt, proc, n, TimeModel{}, 17);
  // 4 x 5 grid of equal-probability cells.
  std::vector<std::size_t> counts(20, 0);
  for (const auto& m : d.records()) {
    int row = std::min(3, static_cast<int>((m.location.lat - 40.0) / 0.01 * 4));
    int col = std::min(4, static_cast<int>((m.location.lng + 75.0) / 0.01 * 5));
    ++counts[row * 5 + col];
  }
  double expected = static_cast<double>(n) / 20.0;
  double chi2 = 0.0;
  for (auto c : counts) {
    double dd = static_cast<double>(c) - expected;
    chi2 += dd * dd / expected;
  }
  // 19 dof; p > 0.01 means chi2 below the 0.99 quantile, 36.19.
  CHECK(chi2 < 36.19);
}

TEST_CASE("hotspot sampler concentrates its mass") {
  GroundTruth gt = simple_gt();
  // sigma chosen so the 3-sigma disc is ~10% of the ~1.1 km box.
  HotspotSampling proc;
  proc.minCorner = {40.0, -75.0};
  proc.maxCorner = {40.01, -74.987};
  proc.hotspots = {Hotspot{{40.005, -74.9935}, 65.0, 0.8}};
  const std::size_t n = 10000;
  Dataset d = sample_measurements(gt, proc, n, TimeModel{}, 23);
  std::size_t inside = 0;
  for (const auto& m : d.records())
    if (distance_m(m.location, proc.hotspots[0].center) <= 3 * 65.0) ++inside;
  CHECK(inside >= static_cast<std::size_t>(0.75 * n));
}

TEST_CASE("time model and metadata fields") {
  GroundTruth gt = simple_gt();
  TimeModel tm;
  tm.weekdays = {1, 3};
  tm.hours = {8, 17};
  UniformSampling proc{{40.0, -75.0}, {40.009, -74.989}};
  Dataset d = sample_measurements(gt, proc, 200, tm, 5);
  for (const auto& m : d.records()) {
    CHECK((m.dayOfWeek == 1 || m.dayOfWeek == 3));
    CHECK((m.hourOfDay == 8 || m.hourOfDay == 17));
    CHECK(m.bsDistanceM.has_value());
    CHECK_NOTHROW(m.validate());
  }
}

TEST_CASE("sampling is deterministic per seed") {
  GroundTruth gt = simple_gt(2.5, 4.0);
  UniformSampling proc{{40.0, -75.0}, {40.009, -74.989}};
  Dataset a = sample_measurements(gt, proc, 80, TimeModel{}, 99);
  Dataset b = sample_measurements(gt, proc, 80, TimeModel{}, 99);
  Dataset c = sample_measurements(gt, proc, 80, TimeModel{}, 100);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < 80; ++i) {
    same &= a.records()[i].rsrp == b.records()[i].rsrp &&
            a.records()[i].location.lat == b.records()[i].location.lat;
    differs |= a.records()[i].rsrp != c.records()[i].rsrp;
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("label corruption arithmetic") {
  GroundTruth gt = simple_gt(3.0, 0.0);
  UniformSampling proc{{40.0, -75.0}, {40.009, -74.989}};
  Dataset d = sample_measurements(gt, proc, 100, TimeModel{}, 7);

  std::vector<std::size_t> idx;
  Dataset same = inject_label_corruption(d, 0.0, 10.0, 1, &idx);
  CHECK(idx.empty());
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(same.label(i) == d.label(i));

  Dataset noisy = inject_label_corruption(d, 0.1, 10.0, 1, &idx);
  CHECK(idx.size() == 10);  // exactly ceil(0.1 * 100)
  std::size_t changed = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    double delta = std::abs(noisy.label(i) - d.label(i));
    if (delta > 0.0) {
      ++changed;
      // +-magnitude exactly, unless the envelope clamp bit.
      bool exact = delta == doctest::Approx(10.0).epsilon(1e-12);
      bool clampedToEdge = noisy.label(i) == kRsrpMinDbm || noisy.label(i) == kRsrpMaxDbm;
      CHECK((exact || clampedToEdge));
    }
  }
  CHECK(changed == idx.size());
}

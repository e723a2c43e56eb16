#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "sigmap/config.hpp"
#include "sigmap/eval.hpp"
#include "sigmap/rng.hpp"

using namespace sigmap;

namespace {

Measurement mk(double lat, double lng, double rsrp) {
  Measurement m;
  m.location = {lat, lng};
  m.timestampUtc = 1600000000;
  m.dayOfWeek = 1;
  m.hourOfDay = 12;
  m.cell = CellId{310, 410, 7, 1};
  m.deviceModel = "d";
  m.rsrp = rsrp;
  return m;
}

}  // namespace

TEST_CASE("rmse hand values") {
  // Residuals {3, 4}: sqrt((9 + 16)/2) = sqrt(12.5) ~ 3.5355.
  CHECK(rmse({3.0, 4.0}, {0.0, 0.0}) ==
        doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
  CHECK(rmse({1.0, 1.0}, {1.0, 1.0}) == 0.0);
  CHECK_THROWS_AS(rmse({1.0}, {1.0, 2.0}), Error);
  CHECK_THROWS_AS(rmse({}, {}), Error);
}

TEST_CASE("classification metrics on a worked example") {
  // truth:  0 0 1 1 1   pred: 0 1 1 1 1
  std::vector<double> truth = {0, 0, 1, 1, 1};
  std::vector<double> pred = {0, 1, 1, 1, 1};
  ClassificationMetrics m = classification_metrics(pred, truth);
  CHECK(m.accuracy == doctest::Approx(0.8));
  CHECK(m.for_class(0).recall == doctest::Approx(0.5));
  CHECK(m.for_class(0).precision == doctest::Approx(1.0));
  CHECK(m.for_class(1).recall == doctest::Approx(1.0));
  CHECK(m.for_class(1).precision == doctest::Approx(0.75));
  CHECK(m.balancedAccuracy == doctest::Approx(0.75));
  CHECK(m.for_class(1).f1 == doctest::Approx(2.0 * 0.75 / 1.75));
  CHECK_FALSE(m.for_class(0).recallDegenerate);

  ConfusionMatrix cm(pred, truth);
  CHECK(cm.count(0, 0) == 1);
  CHECK(cm.count(0, 1) == 1);
  CHECK(cm.count(1, 1) == 3);
  CHECK(cm.total() == 5);
}

TEST_CASE("degenerate classes flag instead of NaN") {
  // No true zeros; no predicted ones.
  ClassificationMetrics m = classification_metrics({0, 0, 0}, {1, 1, 0});
  CHECK(m.for_class(1).recall == 0.0);
  CHECK(m.for_class(1).precisionDegenerate);
  ClassificationMetrics n = classification_metrics({1, 1}, {1, 1});
  // Only one class present anywhere: its recall is clean, nothing NaN.
  CHECK(n.accuracy == 1.0);
  for (const auto& c : n.perClass) {
    CHECK(std::isfinite(c.recall));
    CHECK(std::isfinite(c.precision));
    CHECK(std::isfinite(c.f1));
  }
}

TEST_CASE("grid search: argmin selection, singleton, determinism") {
  Rng r(3);
  std::vector<Measurement> tr, ho;
  for (int i = 0; i < 60; ++i) {
    double lat = 40.0 + r.uniform(0, 4e-3), lng = -75.0 + r.uniform(0, 4e-3);
    double y = -95.0 + 2000.0 * (lat - 40.002) + r.uniform(-1, 1);
    (i % 4 ? tr : ho).push_back(mk(lat, lng, y));
  }
  Dataset train(tr, KpiKind::Rsrp, FeatureSelector::XY);
  Dataset hold(ho, KpiKind::Rsrp, FeatureSelector::XY);
  ForestHyper base;
  base.seed = 5;

  GridSearchResult g = grid_search(train, hold, base, {5, 20}, {2, 8});
  REQUIRE(g.table.size() == 4);
  // The winner is the table argmin.
  double best = 1e18;
  for (const auto& e : g.table) best = std::min(best, e.holdoutRmse);
  bool found = false;
  for (const auto& e : g.table)
    if (e.hyper.nTrees == g.best.nTrees && e.hyper.maxDepth == g.best.maxDepth) {
      CHECK(e.holdoutRmse == doctest::Approx(best).epsilon(1e-12));
      found = true;
    }
  CHECK(found);

  GridSearchResult g2 = grid_search(train, hold, base, {5, 20}, {2, 8});
  CHECK(g2.best.nTrees == g.best.nTrees);
  CHECK(g2.best.maxDepth == g.best.maxDepth);
  for (std::size_t i = 0; i < g.table.size(); ++i)
    CHECK(g.table[i].holdoutRmse == g2.table[i].holdoutRmse);

  GridSearchResult one = grid_search(train, hold, base, {10}, {4});
  CHECK(one.best.nTrees == 10);
  CHECK(one.best.maxDepth == 4);
  REQUIRE(one.table.size() == 1);
}

TEST_CASE("experiment report emits traceable csv") {
  ExperimentReport rep;
  rep.columns = {"seed", "model", "rmse"};
  rep.add_row({"0", "rf", "4.25"});
  rep.add_row({"1", "rf", "4.50"});
  rep.metadata["scenario"] = "unit";
  std::string csv = rep.to_csv();
  CHECK(csv.find("seed,model,rmse") != std::string::npos);
  CHECK(csv.find("0,rf,4.25") != std::string::npos);
  CHECK(csv.find("1,rf,4.50") != std::string::npos);
  CHECK_THROWS_AS(rep.add_row({"too", "few"}), Error);
}

TEST_CASE("median and quantile") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == doctest::Approx(2.5));
  CHECK(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.0) == 1.0);
  CHECK(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 1.0) == 5.0);
  CHECK(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.5) == 3.0);
  CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 0.1) == doctest::Approx(1.3));
  CHECK_THROWS_AS(median({}), Error);
}

TEST_CASE("config: parsing, precedence, resolved text") {
  ScenarioConfig c = ScenarioConfig::from_string(
      "# comment line\n"
      "seed = 42\n"
      "synth.samples = 500\n"
      "split = 0.7,0.3\n"
      "quality = coverage\n");
  CHECK(c.get_u64("seed", 0) == 42);
  CHECK(c.get_int("synth.samples", 0) == 500);
  CHECK(c.get_str("quality", "") == "coverage");
  CHECK(c.get_doubles("split", {}) == std::vector<double>{0.7, 0.3});
  // Defaults apply only when the key is absent.
  CHECK(c.get_double("synth.area_m", 1000.0) == 1000.0);
  CHECK_FALSE(c.has("synth.area_m"));

  // Flag overrides win over file values.
  c.set("seed", "7");
  CHECK(c.get_u64("seed", 0) == 7);
  CHECK_THROWS_AS(c.set("not.a.key", "1"), Error);

  std::string res = c.resolved();
  CHECK(res.find("seed = 7") != std::string::npos);
  CHECK(res.find("quality = coverage") != std::string::npos);
  // Stable hash: same resolved text, same hash.
  CHECK(c.hash() == c.hash());
  ScenarioConfig d = ScenarioConfig::from_string(res);
  CHECK(d.hash() == c.hash());
}

TEST_CASE("config: unknown keys are collected with line numbers") {
  try {
    ScenarioConfig::from_string(
        "seed = 1\n"
        "tyop.key = 2\n"
        "synth.samples = 10\n"
        "another.bad = 3\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("tyop.key") != std::string::npos);
    CHECK(msg.find("another.bad") != std::string::npos);  // both reported
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("line 4") != std::string::npos);
  }
  CHECK_THROWS_AS(ScenarioConfig::from_string("novalue\n"), Error);
}

TEST_CASE("config: indexed keys come back in ascending order") {
  ScenarioConfig c = ScenarioConfig::from_string(
      "synth.station.2 = 40.0,-75.0,-30\n"
      "synth.station.0 = 40.1,-75.1,-31\n"
      "synth.station.10 = 40.2,-75.2,-32\n"
      "synth.station.1 = 40.3,-75.3,-33\n");
  std::vector<std::string> v = c.indexed("synth.station.");
  REQUIRE(v.size() == 4);
  CHECK(v[0] == "40.1,-75.1,-31");
  CHECK(v[1] == "40.3,-75.3,-33");
  CHECK(v[2] == "40.0,-75.0,-30");
  CHECK(v[3] == "40.2,-75.2,-32");  // numeric, not lexicographic, order
}

TEST_CASE("config hash ignores execution-environment keys") {
  ScenarioConfig a = ScenarioConfig::from_string("seed = 1\nout = /tmp/a\nthreads = 1\n");
  ScenarioConfig b = ScenarioConfig::from_string("seed = 1\nout = /tmp/b\nthreads = 8\n");
  CHECK(a.hash() == b.hash());
  ScenarioConfig c = ScenarioConfig::from_string("seed = 2\nout = /tmp/a\n");
  CHECK(a.hash() != c.hash());
}

TEST_CASE("fnv1a64 reference vectors") {
  // Published FNV-1a 64-bit test vectors.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64_hex("") == "cbf29ce484222325");
}

#include "sigmap/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "sigmap/baselines.hpp"
#include "sigmap/quality.hpp"
#include "sigmap/rng.hpp"
#include "sigmap/shapley.hpp"

namespace sigmap {

namespace {

// Seed-stream tags. Every stochastic stage derives its stream from the
// per-seed split seed and one of these, so reruns and thread-count changes
// cannot perturb results.
constexpr std::uint64_t kTagDataset = 0xDA7A;
constexpr std::uint64_t kTagSplit = 101;
constexpr std::uint64_t kTagRf = 11;        // forests trained on the raw KPI
constexpr std::uint64_t kTagRfDirect = 12;  // forests trained on Q-domain labels
constexpr std::uint64_t kTagCorrupt = 21;
constexpr std::uint64_t kTagShapley = 22;
constexpr std::uint64_t kTagRandomOrder = 23;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(std::stod(tok));
    } catch (...) {
      throw Error("scenario: non-numeric entry in '" + s + "'");
    }
  }
  return out;
}

struct Group {
  std::string name;
  Dataset data;
  std::optional<CellId> cell;
};

std::vector<Group> groups_of(const Scenario& sc, const Dataset& d) {
  std::vector<Group> out;
  if (sc.granularity == "all") {
    out.push_back({"all", d, std::nullopt});
  } else if (sc.granularity == "cell") {
    for (auto& [cell, part] : group_by_cell(d)) {
      std::ostringstream name;
      name << "cell:" << cell.mcc << "-" << cell.mnc << "-" << cell.tac << "-"
           << cell.ci;
      out.push_back({name.str(), std::move(part), cell});
    }
  } else if (sc.granularity == "ta") {
    for (auto& [ta, part] : group_by_ta(d)) {
      std::ostringstream name;
      name << "ta:" << ta.mcc << "-" << ta.mnc << "-" << ta.tac;
      out.push_back({name.str(), std::move(part), std::nullopt});
    }
  } else {
    throw Error("scenario: unknown granularity '" + sc.granularity +
                "' (expected cell, ta, or all)");
  }
  // Groups too small to split and fit are dropped, not errors: sparse cells
  // are routine in crowdsourced data.
  std::erase_if(out, [](const Group& g) { return g.data.size() < 30; });
  if (out.empty()) throw Error("scenario: no group has >= 30 records");
  return out;
}

// Base-station position and reference power for the LDPL-family baselines.
// Synthetic per-cell groups use the generating station; otherwise the
// strongest-received-power training point stands in for the station.
std::pair<XY, double> bs_info(const Scenario& sc, const Group& g,
                              const std::vector<SpatialSample>& train,
                              const LocalFrame& frame) {
  double p0 = sc.cfg.get_double("ldpl.p0_dbm",
                                std::numeric_limits<double>::quiet_NaN());
  if (sc.synthetic && g.cell) {
    for (const auto& st : sc.gt.stations)
      if (st.cell == *g.cell)
        return {to_local(frame, st.location), std::isnan(p0) ? st.p0Dbm : p0};
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < train.size(); ++i)
    if (train[i].y > train[best].y) best = i;
  return {train[best].pos, std::isnan(p0) ? -30.0 : p0};
}

std::vector<double> predict_all(const ForestModel& m, const Dataset& test) {
  std::vector<double> out;
  out.reserve(test.size());
  const bool cls = m.hyper().task == ForestTask::Classification;
  for (const auto& rec : test.records())
    out.push_back(cls ? m.predict_class(rec) : m.predict_mean(rec));
  return out;
}

std::uint64_t split_seed(const Scenario& sc, std::size_t s) {
  return derive_seed(sc.masterSeed, kTagSplit + s);
}

struct TargetHolder {
  TargetSpec spec = UniformTarget{};
  std::unique_ptr<PopulationGrid> grid;
};

TargetHolder make_target(const ScenarioConfig& cfg) {
  TargetHolder out;
  std::string kind = cfg.get_str("target", "uniform");
  if (kind == "uniform") {
    out.spec = UniformTarget{};
  } else if (kind == "population") {
    std::string path = cfg.get_str("population.file", "");
    if (path.empty())
      throw Error("target=population requires population.file");
    std::ifstream in(path);
    if (!in) throw Error("cannot open population.file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    out.grid = std::make_unique<PopulationGrid>(load_population_grid(ss.str()));
    out.spec = PopulationTarget{out.grid.get()};
  } else if (kind == "custom") {
    throw Error("target=custom is only reachable through the library API");
  } else {
    throw Error("unknown target '" + kind + "'");
  }
  return out;
}

// Leave-one-out log-likelihood of the training points under the fitted KDE;
// the standard bandwidth-selection score. The self-kernel is subtracted so a
// vanishing bandwidth cannot win by spiking on its own point.
double kde_loo_loglik(const DensityModel& m, const std::vector<KdePoint>& pts,
                      double hourBandwidth) {
  const double n = static_cast<double>(pts.size());
  double ll = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double h = m.bandwidths()[i];
    double self = 1.0 / (2.0 * kPi * h * h);
    if (m.space_time())
      self /= std::sqrt(2.0 * kPi) * hourBandwidth;
    double loo = (n * m.density(pts[i]) - self) / (n - 1.0);
    if (loo <= 0.0) return -std::numeric_limits<double>::infinity();
    ll += std::log(loo);
  }
  return ll;
}

struct KdeChoice {
  KdeMode mode = AdaptiveBandwidth{};
  std::string selectionCsv;  // non-empty when a pilot grid was searched
};

KdeChoice choose_kde(const ScenarioConfig& cfg, const std::vector<KdePoint>& pts) {
  KdeChoice out;
  std::string kind = cfg.get_str("kde.mode", "adaptive");
  if (kind == "fixed") {
    out.mode = FixedBandwidth{cfg.get_double("kde.h_m", 100.0)};
    return out;
  }
  if (kind == "spacetime") {
    out.mode = FixedSpaceTimeBandwidth{cfg.get_double("kde.h_m", 100.0),
                                       cfg.get_double("kde.h_hours", 2.0)};
    return out;
  }
  if (kind != "adaptive")
    throw Error("unknown kde.mode '" + kind + "'");
  double alpha = cfg.get_double("kde.alpha", 0.5);
  std::vector<double> grid = cfg.get_doubles("kde.pilot_grid", {});
  if (grid.empty()) {
    out.mode = AdaptiveBandwidth{cfg.get_double("kde.pilot_h_m", 100.0), alpha};
    return out;
  }
  std::sort(grid.begin(), grid.end());
  std::ostringstream csv;
  csv << "pilot_h_m,loo_loglik,selected\n";
  double bestH = grid.front();
  double bestLl = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, double>> table;
  for (double h : grid) {
    DensityModel m = DensityModel::fit(pts, AdaptiveBandwidth{h, alpha});
    double ll = kde_loo_loglik(m, pts, 0.0);
    table.emplace_back(h, ll);
    if (ll > bestLl) {
      bestLl = ll;
      bestH = h;
    }
  }
  for (auto& [h, ll] : table)
    csv << fmt(h) << "," << fmt(ll) << "," << (h == bestH ? 1 : 0) << "\n";
  out.mode = AdaptiveBandwidth{bestH, alpha};
  out.selectionCsv = csv.str();
  return out;
}

std::string points_geojson(
    const Dataset& d,
    const std::vector<std::pair<std::string, std::vector<double>>>& props) {
  nlohmann::json fc;
  fc["type"] = "FeatureCollection";
  fc["features"] = nlohmann::json::array();
  for (std::size_t i = 0; i < d.size(); ++i) {
    nlohmann::json f;
    f["type"] = "Feature";
    f["geometry"]["type"] = "Point";
    f["geometry"]["coordinates"] = {d.records()[i].location.lng,
                                    d.records()[i].location.lat};
    for (const auto& [name, vals] : props) f["properties"][name] = vals[i];
    fc["features"].push_back(std::move(f));
  }
  return fc.dump(2) + "\n";
}

// Median / IQR / mean over the finite entries of v.
struct SummaryStats {
  double med = 0.0, mean = 0.0, q25 = 0.0, q75 = 0.0;
  std::size_t n = 0;
};

SummaryStats summarize(const std::vector<double>& v) {
  std::vector<double> f;
  for (double x : v)
    if (std::isfinite(x)) f.push_back(x);
  SummaryStats s;
  s.n = f.size();
  if (f.empty()) return s;
  s.med = median(f);
  s.q25 = quantile(f, 0.25);
  s.q75 = quantile(f, 0.75);
  for (double x : f) s.mean += x;
  s.mean /= static_cast<double>(f.size());
  return s;
}

}  // namespace

ForestHyper Scenario::forest_hyper() const {
  ForestHyper hp;
  hp.nTrees = static_cast<std::size_t>(cfg.get_int("forest.trees", 20));
  hp.maxDepth = static_cast<std::size_t>(cfg.get_int("forest.max_depth", 20));
  hp.minSamplesLeaf =
      static_cast<std::size_t>(cfg.get_int("forest.min_samples_leaf", 1));
  std::string mf = cfg.get_str("forest.max_features", "all");
  if (mf == "all")
    hp.maxFeatures = MaxFeatures::All;
  else if (mf == "sqrt")
    hp.maxFeatures = MaxFeatures::Sqrt;
  else
    throw Error("forest.max_features must be all or sqrt");
  hp.threads = threads;
  return hp;
}

Scenario build_scenario(const ScenarioConfig& cfg) {
  Scenario sc;
  sc.cfg = cfg;
  sc.masterSeed = cfg.get_u64("seed", 42);
  sc.numSeeds = static_cast<std::size_t>(cfg.get_int("seeds", 10));
  sc.threads = static_cast<std::size_t>(cfg.get_int("threads", 1));
  sc.granularity = cfg.get_str("granularity", "cell");
  sc.splitFractions = cfg.get_doubles("split", {0.7, 0.3});

  std::string label = cfg.get_str("dataset.label", "rsrp");
  if (label == "rsrp")
    sc.labelKpi = KpiKind::Rsrp;
  else if (label == "rsrq")
    sc.labelKpi = KpiKind::Rsrq;
  else if (label == "cqi")
    sc.labelKpi = KpiKind::Cqi;
  else
    throw Error("dataset.label must be rsrp, rsrq, or cqi");

  std::string feats = cfg.get_str("dataset.features", "xy");
  if (feats == "xy")
    sc.features = FeatureSelector::XY;
  else if (feats == "xyt")
    sc.features = FeatureSelector::XYT;
  else if (feats == "all")
    sc.features = FeatureSelector::All;
  else if (feats == "all-minus-cid")
    sc.features = FeatureSelector::AllMinusCid;
  else
    throw Error("dataset.features must be xy, xyt, all, or all-minus-cid");

  std::string source = cfg.get_str("dataset.source", "synth");
  if (source == "file") {
    sc.synthetic = false;
    sc.datasetFile = cfg.get_str("dataset.file", "");
    if (sc.datasetFile.empty())
      throw Error("dataset.source=file requires dataset.file");
    return sc;
  }
  if (source != "synth")
    throw Error("dataset.source must be synth or file");

  LatLng origin{cfg.get_double("synth.origin.lat", 40.0),
                cfg.get_double("synth.origin.lng", -75.0)};
  double areaM = cfg.get_double("synth.area_m", 1000.0);
  if (areaM <= 0.0) throw Error("synth.area_m must be positive");
  LocalFrame frame = LocalFrame::at(origin);
  LatLng maxCorner = from_local(frame, XY{areaM, areaM});
  LatLng center = from_local(frame, XY{areaM / 2.0, areaM / 2.0});

  sc.gt.frame = frame;
  sc.gt.shadowSigmaDb = cfg.get_double("synth.shadow_sigma_db", 6.0);
  sc.gt.d0M = cfg.get_double("synth.d0_m", 1.0);

  std::vector<std::string> stations = cfg.indexed("synth.station.");
  if (stations.empty()) {
    sc.gt.stations.push_back(Station{CellId{310, 410, 1, 1}, center, -30.0});
  } else {
    int ci = 1;
    for (const std::string& s : stations) {
      std::vector<double> v = parse_list(s);
      if (v.size() < 3)
        throw Error("synth.station.N needs lat,lng,p0[,mcc,mnc,tac,ci]");
      Station st;
      st.location = LatLng{v[0], v[1]};
      st.p0Dbm = v[2];
      st.cell = v.size() >= 7
                    ? CellId{static_cast<int>(v[3]), static_cast<int>(v[4]),
                             static_cast<int>(v[5]), static_cast<int>(v[6])}
                    : CellId{310, 410, 1, ci};
      ++ci;
      sc.gt.stations.push_back(st);
    }
  }

  std::vector<std::string> ples = cfg.indexed("synth.ple.");
  if (ples.empty()) {
    sc.gt.pleField.push_back(PleSeed{center, 3.0});
  } else {
    for (const std::string& s : ples) {
      std::vector<double> v = parse_list(s);
      if (v.size() != 3) throw Error("synth.ple.N needs lat,lng,n");
      sc.gt.pleField.push_back(PleSeed{LatLng{v[0], v[1]}, v[2]});
    }
  }
  sc.gt.validate();

  std::string sampling = cfg.get_str("synth.sampling", "uniform");
  if (sampling == "uniform") {
    sc.sampling = UniformSampling{origin, maxCorner};
  } else if (sampling == "hotspot") {
    HotspotSampling hs;
    hs.minCorner = origin;
    hs.maxCorner = maxCorner;
    for (const std::string& s : cfg.indexed("synth.hotspot.")) {
      std::vector<double> v = parse_list(s);
      if (v.size() != 4)
        throw Error("synth.hotspot.N needs lat,lng,sigma_m,mass");
      hs.hotspots.push_back(Hotspot{LatLng{v[0], v[1]}, v[2], v[3]});
    }
    if (hs.hotspots.empty())
      throw Error("synth.sampling=hotspot needs synth.hotspot.N entries");
    sc.sampling = hs;
  } else if (sampling == "road") {
    RoadBiasedSampling rb;
    rb.minCorner = origin;
    rb.maxCorner = maxCorner;
    rb.crossSectionSigmaM = cfg.get_double("synth.road.sigma_m", 20.0);
    rb.massFraction = cfg.get_double("synth.road.mass", 0.8);
    for (const std::string& s : cfg.indexed("synth.road.")) {
      std::vector<double> v = parse_list(s);
      if (v.size() < 4 || v.size() % 2 != 0)
        throw Error("synth.road.N needs lat,lng pairs (>= 2 points)");
      std::vector<LatLng> line;
      for (std::size_t i = 0; i + 1 < v.size(); i += 2)
        line.push_back(LatLng{v[i], v[i + 1]});
      rb.polylines.push_back(std::move(line));
    }
    if (rb.polylines.empty())
      throw Error("synth.sampling=road needs synth.road.N polylines");
    sc.sampling = rb;
  } else {
    throw Error("synth.sampling must be uniform, hotspot, or road");
  }

  std::vector<double> wd = cfg.get_doubles("synth.time.weekdays", {});
  if (!wd.empty()) {
    sc.time.weekdays.clear();
    for (double d : wd) sc.time.weekdays.push_back(static_cast<int>(d));
  }
  std::vector<double> hrs = cfg.get_doubles("synth.time.hours", {});
  if (!hrs.empty()) {
    sc.time.hours.clear();
    for (double d : hrs) sc.time.hours.push_back(static_cast<int>(d));
  }
  sc.samples = static_cast<std::size_t>(cfg.get_int("synth.samples", 500));
  return sc;
}

Dataset scenario_dataset(const Scenario& sc) {
  if (sc.synthetic)
    return sample_measurements(sc.gt, sc.sampling, sc.samples, sc.time,
                               derive_seed(sc.masterSeed, kTagDataset),
                               sc.features);
  std::ifstream in(sc.datasetFile);
  if (!in) throw Error("cannot open dataset.file: " + sc.datasetFile);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_geojson(ss.str(), sc.labelKpi, sc.features);
}

LocalFrame scenario_frame(const Scenario& sc, const Dataset& d) {
  if (sc.synthetic) return sc.gt.frame;
  if (d.empty()) throw Error("cannot build a frame for an empty dataset");
  double lat = 0.0, lng = 0.0;
  for (const auto& r : d.records()) {
    lat += r.location.lat;
    lng += r.location.lng;
  }
  double n = static_cast<double>(d.size());
  return LocalFrame::at(LatLng{lat / n, lng / n});
}

// ------------------------------------------------------------------ base

PipelineResult pipeline_base(const Scenario& sc) {
  PipelineResult out;
  out.name = "base";
  out.report.columns = {"seed", "group", "model", "n_train", "n_test", "rmse"};
  out.report.metadata["pipeline"] = "base";
  out.report.metadata["config_hash"] = sc.cfg.hash();

  Dataset full = scenario_dataset(sc);
  LocalFrame frame = scenario_frame(sc, full);
  std::vector<Group> groups = groups_of(sc, full);
  double maxLag = sc.cfg.get_double("kriging.max_lag_m", 200.0);
  double binW = sc.cfg.get_double("kriging.bin_width_m", 10.0);
  std::size_t krigK = static_cast<std::size_t>(sc.cfg.get_int("kriging.k", 10));
  ForestHyper hp = sc.forest_hyper();

  std::map<std::string, std::vector<double>> perModel;
  std::string firstSeedGeo;

  for (std::size_t s = 0; s < sc.numSeeds; ++s) {
    std::uint64_t seed = split_seed(sc, s);
    for (const Group& g : groups) {
      SplitResult sp = split(g.data, SplitSpec{sc.splitFractions, seed});
      const Dataset& train = sp.parts[0];
      const Dataset& test = sp.parts.back();
      std::vector<double> truth = test.labels();
      std::vector<SpatialSample> strain = spatial_samples(train, frame);
      std::vector<SpatialSample> stest = spatial_samples(test, frame);
      auto [bs, p0] = bs_info(sc, g, strain, frame);
      double d0 = sc.synthetic ? sc.gt.d0M : 1.0;
      std::size_t knnK = static_cast<std::size_t>(sc.cfg.get_int(
          "ldpl.knn_k",
          static_cast<std::int64_t>(std::max<std::size_t>(1, strain.size() / 10))));

      auto emit = [&](const std::string& model, double rmseVal) {
        out.report.add_row({std::to_string(s), g.name, model,
                            std::to_string(train.size()),
                            std::to_string(test.size()), fmt(rmseVal)});
        perModel[model].push_back(rmseVal);
      };
      // A failed fit (flat labels, degenerate semivariogram) yields a NaN
      // row with a warning in the metadata, not a dead pipeline: sparse
      // groups routinely break one baseline without invalidating the rest.
      auto guarded = [&](const std::string& model, auto&& predictFn) {
        try {
          std::vector<double> pred;
          pred.reserve(stest.size());
          predictFn(pred);
          emit(model, rmse(pred, truth));
        } catch (const Error& e) {
          out.report.metadata["warn." + model + "." + g.name + ".s" +
                              std::to_string(s)] = e.what();
          emit(model, std::numeric_limits<double>::quiet_NaN());
        }
      };

      guarded("ldpl_hom", [&, p0 = p0, bs = bs](std::vector<double>& pred) {
        LdplModel m = fit_ldpl_hom(strain, bs, p0, d0);
        for (const auto& q : stest) pred.push_back(m.predict(q.pos));
      });
      guarded("ldpl_knn", [&, p0 = p0, bs = bs](std::vector<double>& pred) {
        LdplKnnModel m = fit_ldpl_knn(strain, bs, p0, d0, knnK);
        for (const auto& q : stest) pred.push_back(m.predict(q.pos));
      });
      guarded("ok", [&](std::vector<double>& pred) {
        Semivariogram sv = fit_semivariogram(strain, maxLag, binW);
        KrigingModel m(strain, sv, krigK);
        for (const auto& q : stest) pred.push_back(m.predict(q.pos).mean);
      });
      guarded("okd", [&, p0 = p0, bs = bs](std::vector<double>& pred) {
        OkdModel m(strain, bs, p0, d0, maxLag, binW, krigK);
        for (const auto& q : stest) pred.push_back(m.predict(q.pos));
      });

      ForestHyper rfHp = hp;
      rfHp.seed = derive_seed(seed, kTagRf);
      ForestModel rf = fit_forest(train, WeightVector::ones(train.size()), rfHp);
      std::vector<double> rfPred = predict_all(rf, test);
      emit("rf_" + selector_name(sc.features), rmse(rfPred, truth));

      if (s == 0 && firstSeedGeo.empty()) {
        firstSeedGeo = points_geojson(
            test, {{"truth", truth}, {"rf_pred", rfPred}});
      }
    }
  }

  std::ostringstream sum;
  sum << "model,n,median_rmse,mean_rmse,q25_rmse,q75_rmse\n";
  for (const auto& [model, vals] : perModel) {
    SummaryStats st = summarize(vals);
    sum << model << "," << st.n << "," << fmt(st.med) << "," << fmt(st.mean)
        << "," << fmt(st.q25) << "," << fmt(st.q75) << "\n";
  }
  out.artifacts.emplace_back("base_summary.csv", sum.str());
  if (!firstSeedGeo.empty())
    out.artifacts.emplace_back("base_predictions.geojson", firstSeedGeo);
  return out;
}

// --------------------------------------------------------------- quality

PipelineResult pipeline_quality(const Scenario& sc) {
  PipelineResult out;
  out.name = "quality";
  out.report.columns = {"seed", "group",   "task", "variant",
                        "stratum", "metric", "value"};
  out.report.metadata["pipeline"] = "quality";
  out.report.metadata["config_hash"] = sc.cfg.hash();

  CdpParams cdpP = fit_cdp_two_point(
      sc.cfg.get_double("cdp.anchor1.y", -120.0),
      sc.cfg.get_double("cdp.anchor1.p", 0.50),
      sc.cfg.get_double("cdp.anchor2.y", -90.0),
      sc.cfg.get_double("cdp.anchor2.p", 0.02),
      sc.cfg.get_double("cdp.c", 0.01), sc.labelKpi);
  QualityFn qCov = QualityFn::coverage();
  QualityFn qCdp = QualityFn::cdp(cdpP);

  Dataset full = scenario_dataset(sc);
  std::vector<Group> groups = groups_of(sc, full);
  ForestHyper hp = sc.forest_hyper();
  std::string firstSeedGeo;
  std::map<std::string, std::vector<double>> agg;  // task|variant|stratum|metric

  auto emit = [&](std::size_t s, const std::string& group, const std::string& task,
                  const std::string& variant, const std::string& stratum,
                  const std::string& metric, double v) {
    out.report.add_row({std::to_string(s), group, task, variant, stratum,
                        metric, fmt(v)});
    agg[task + "," + variant + "," + stratum + "," + metric].push_back(v);
  };

  for (std::size_t s = 0; s < sc.numSeeds; ++s) {
    std::uint64_t seed = split_seed(sc, s);
    for (const Group& g : groups) {
      SplitResult sp = split(g.data, SplitSpec{sc.splitFractions, seed});
      const Dataset& train = sp.parts[0];
      const Dataset& test = sp.parts.back();
      std::vector<double> yTruth = test.labels();

      // Shared regression forest on the raw KPI: the proxy for both tasks.
      ForestHyper regHp = hp;
      regHp.seed = derive_seed(seed, kTagRf);
      ForestModel reg = fit_forest(train, WeightVector::ones(train.size()), regHp);
      std::vector<double> yHat = predict_all(reg, test);

      // Coverage: proxy thresholds the regressor, direct trains a classifier.
      std::vector<double> covTruth(yTruth.size()), covProxy(yTruth.size());
      for (std::size_t i = 0; i < yTruth.size(); ++i) {
        covTruth[i] = qCov.apply(yTruth[i], sc.labelKpi);
        covProxy[i] = qCov.apply(yHat[i], sc.labelKpi);
      }
      Dataset covTrain = transform_dataset(train, qCov);
      ForestHyper clsHp = hp;
      clsHp.task = ForestTask::Classification;
      clsHp.seed = derive_seed(seed, kTagRfDirect);
      ForestModel covRf =
          fit_forest(covTrain, WeightVector::ones(covTrain.size()), clsHp);
      std::vector<double> covDirect = predict_all(covRf, test);

      for (auto [variant, pred] :
           {std::pair<const char*, const std::vector<double>*>{"proxy", &covProxy},
            {"direct", &covDirect}}) {
        ClassificationMetrics m = classification_metrics(*pred, covTruth);
        double r0 = 0.0;
        for (std::size_t c = 0; c < m.classes.size(); ++c)
          if (m.classes[c] == 0.0) r0 = m.perClass[c].recall;
        emit(s, g.name, "coverage", variant, "all", "recall0", r0);
        emit(s, g.name, "coverage", variant, "all", "accuracy", m.accuracy);
        emit(s, g.name, "coverage", variant, "all", "balanced_accuracy",
             m.balancedAccuracy);
      }

      // CDP: proxy maps the regressor through Q, direct regresses on Q(y).
      std::vector<double> qTruth(yTruth.size()), qProxy(yTruth.size());
      for (std::size_t i = 0; i < yTruth.size(); ++i) {
        qTruth[i] = qCdp.apply(yTruth[i], sc.labelKpi);
        qProxy[i] = qCdp.apply(yHat[i], sc.labelKpi);
      }
      Dataset cdpTrain = transform_dataset(train, qCdp);
      ForestHyper cdpHp = hp;
      cdpHp.seed = derive_seed(seed, kTagRfDirect);
      ForestModel cdpRf =
          fit_forest(cdpTrain, WeightVector::ones(cdpTrain.size()), cdpHp);
      std::vector<double> qDirect = predict_all(cdpRf, test);
      for (double& q : qDirect) q = std::clamp(q, 0.0, 1.0);

      // Inversion back to the KPI domain; predictions are clamped just inside
      // the invertible band first.
      const double lo = cdpP.c + 1e-9, hi = 1.0 - 1e-9;
      std::vector<double> yFromDirect(qDirect.size());
      for (std::size_t i = 0; i < qDirect.size(); ++i)
        yFromDirect[i] = qCdp.invert_cdp(std::clamp(qDirect[i], lo, hi));

      // Strata are grouped by the true bar level of y, never the predicted.
      auto strata = [&](const std::vector<double>& pred,
                        const std::vector<double>& truth,
                        const char* variant, const char* metric) {
        std::map<int, std::pair<std::vector<double>, std::vector<double>>> byBar;
        for (std::size_t i = 0; i < yTruth.size(); ++i) {
          auto& [p, t] = byBar[bars_of(yTruth[i])];
          p.push_back(pred[i]);
          t.push_back(truth[i]);
        }
        emit(s, g.name, "cdp", variant, "all", metric, rmse(pred, truth));
        for (auto& [bar, pt] : byBar)
          emit(s, g.name, "cdp", variant, "bar" + std::to_string(bar), metric,
               rmse(pt.first, pt.second));
      };
      strata(qProxy, qTruth, "proxy", "rmse_q");
      strata(qDirect, qTruth, "direct", "rmse_q");
      strata(yHat, yTruth, "proxy", "rmse_kpi");
      strata(yFromDirect, yTruth, "direct", "rmse_kpi");

      if (s == 0 && firstSeedGeo.empty())
        firstSeedGeo = points_geojson(test, {{"truth", yTruth},
                                             {"proxy_q", qProxy},
                                             {"direct_q", qDirect},
                                             {"truth_q", qTruth}});
    }
  }

  std::ostringstream sum;
  sum << "task,variant,stratum,metric,n,median,mean,q25,q75\n";
  for (const auto& [key, vals] : agg) {
    SummaryStats st = summarize(vals);
    sum << key << "," << st.n << "," << fmt(st.med) << "," << fmt(st.mean)
        << "," << fmt(st.q25) << "," << fmt(st.q75) << "\n";
  }
  out.artifacts.emplace_back("quality_summary.csv", sum.str());
  if (!firstSeedGeo.empty())
    out.artifacts.emplace_back("quality_predictions.geojson", firstSeedGeo);
  return out;
}

// -------------------------------------------------------------- reweight

PipelineResult pipeline_reweight(const Scenario& sc) {
  PipelineResult out;
  out.name = "reweight";
  out.report.columns = {"seed",    "group",  "variant", "n_train",
                        "n_test",  "sqrt_eps", "rmse"};
  out.report.metadata["pipeline"] = "reweight";
  out.report.metadata["config_hash"] = sc.cfg.hash();

  Dataset full = scenario_dataset(sc);
  LocalFrame frame = scenario_frame(sc, full);
  std::vector<Group> groups = groups_of(sc, full);
  TargetHolder target = make_target(sc.cfg);
  out.report.metadata["target"] = sc.cfg.get_str("target", "uniform");
  ForestHyper hp = sc.forest_hyper();

  std::map<std::string, std::map<std::string, std::vector<double>>> perGroup;
  std::string weightCsv, weightGeo, kdeSelCsv;

  for (std::size_t s = 0; s < sc.numSeeds; ++s) {
    std::uint64_t seed = split_seed(sc, s);
    for (const Group& g : groups) {
      SplitResult sp = split(g.data, SplitSpec{sc.splitFractions, seed});
      const Dataset& train = sp.parts[0];
      const Dataset& test = sp.parts.back();
      std::vector<double> truth = test.labels();

      std::vector<KdePoint> trainPts = kde_points(train, frame);
      KdeChoice kde = choose_kde(sc.cfg, trainPts);
      if (!kde.selectionCsv.empty() && kdeSelCsv.empty())
        kdeSelCsv = kde.selectionCsv;
      DensityModel density = DensityModel::fit(trainPts, kde.mode);
      ImportanceWeights trainW =
          importance_ratios(train, target.spec, density, frame);
      ImportanceWeights testW =
          importance_ratios(test, target.spec, density, frame);

      ForestHyper rfHp = hp;
      rfHp.seed = derive_seed(seed, kTagRf);
      ForestModel rfDefault =
          fit_forest(train, WeightVector::ones(train.size()), rfHp);
      ForestModel rfWeighted = fit_forest(train, trainW.weights, rfHp);

      for (auto [variant, model] :
           {std::pair<const char*, const ForestModel*>{"default", &rfDefault},
            {"weighted", &rfWeighted}}) {
        std::vector<double> pred = predict_all(*model, test);
        double eps = reweighted_error(pred, truth, testW.weights.weights);
        double r = rmse(pred, truth);
        out.report.add_row({std::to_string(s), g.name, variant,
                            std::to_string(train.size()),
                            std::to_string(test.size()), fmt(std::sqrt(eps)),
                            fmt(r)});
        perGroup[g.name][variant].push_back(std::sqrt(eps));
      }

      if (s == 0 && weightCsv.empty()) {
        weightCsv = importance_weights_csv(trainW);
        weightGeo = points_geojson(
            train, {{"weight", trainW.weights.weights},
                    {"density", trainW.densities}});
      }
    }
  }

  std::ostringstream sum;
  sum << "group,n_seeds,median_sqrt_eps_default,median_sqrt_eps_weighted,"
         "median_rel_improvement_pct,weighted_wins\n";
  for (auto& [gname, variants] : perGroup) {
    const auto& d = variants["default"];
    const auto& w = variants["weighted"];
    std::vector<double> rel;
    std::size_t wins = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (w[i] <= d[i]) ++wins;
      rel.push_back(100.0 * (d[i] - w[i]) / d[i]);
    }
    sum << gname << "," << d.size() << "," << fmt(median(d)) << ","
        << fmt(median(w)) << "," << fmt(median(rel)) << "," << wins << "\n";
  }
  out.artifacts.emplace_back("reweight_summary.csv", sum.str());
  if (!weightCsv.empty())
    out.artifacts.emplace_back("importance_weights.csv", weightCsv);
  if (!weightGeo.empty())
    out.artifacts.emplace_back("weight_map.geojson", weightGeo);
  if (!kdeSelCsv.empty())
    out.artifacts.emplace_back("kde_selection.csv", kdeSelCsv);
  return out;
}

// -------------------------------------------------------------------- qw

PipelineResult pipeline_qw(const Scenario& sc) {
  PipelineResult out;
  out.name = "qw";
  out.report.columns = {"seed",   "group",  "quality", "weights",
                        "n_train", "n_test", "sqrt_eps"};
  out.report.metadata["pipeline"] = "qw";
  out.report.metadata["config_hash"] = sc.cfg.hash();

  CdpParams cdpP = fit_cdp_two_point(
      sc.cfg.get_double("cdp.anchor1.y", -120.0),
      sc.cfg.get_double("cdp.anchor1.p", 0.50),
      sc.cfg.get_double("cdp.anchor2.y", -90.0),
      sc.cfg.get_double("cdp.anchor2.p", 0.02),
      sc.cfg.get_double("cdp.c", 0.01), sc.labelKpi);
  QualityFn qCdp = QualityFn::cdp(cdpP);

  Dataset full = scenario_dataset(sc);
  LocalFrame frame = scenario_frame(sc, full);
  std::vector<Group> groups = groups_of(sc, full);
  TargetHolder target = make_target(sc.cfg);
  ForestHyper hp = sc.forest_hyper();
  std::map<std::string, std::vector<double>> agg;  // quality|weights

  for (std::size_t s = 0; s < sc.numSeeds; ++s) {
    std::uint64_t seed = split_seed(sc, s);
    for (const Group& g : groups) {
      SplitResult sp = split(g.data, SplitSpec{sc.splitFractions, seed});
      const Dataset& train = sp.parts[0];
      const Dataset& test = sp.parts.back();

      std::vector<KdePoint> trainPts = kde_points(train, frame);
      KdeChoice kde = choose_kde(sc.cfg, trainPts);
      DensityModel density = DensityModel::fit(trainPts, kde.mode);
      ImportanceWeights trainW =
          importance_ratios(train, target.spec, density, frame);
      ImportanceWeights testW =
          importance_ratios(test, target.spec, density, frame);

      for (const char* quality : {"identity", "cdp"}) {
        bool isCdp = std::string(quality) == "cdp";
        Dataset qTrain = isCdp ? transform_dataset(train, qCdp) : train;
        std::vector<double> qTruth = test.labels();
        if (isCdp)
          for (double& y : qTruth) y = qCdp.apply(y, sc.labelKpi);

        for (const char* wkind : {"unit", "importance"}) {
          bool imp = std::string(wkind) == "importance";
          ForestHyper rfHp = hp;
          // Same stream as pipeline_base's forest: the identity/unit cell is
          // the base problem and must reproduce its numbers exactly.
          rfHp.seed = derive_seed(seed, isCdp ? kTagRfDirect : kTagRf);
          ForestModel rf = fit_forest(
              qTrain,
              imp ? trainW.weights : WeightVector::ones(qTrain.size()), rfHp);
          std::vector<double> pred = predict_all(rf, test);
          if (isCdp)
            for (double& q : pred) q = std::clamp(q, 0.0, 1.0);
          double eps = imp
                           ? reweighted_error(pred, qTruth, testW.weights.weights)
                           : reweighted_error(
                                 pred, qTruth,
                                 std::vector<double>(qTruth.size(), 1.0));
          out.report.add_row({std::to_string(s), g.name, quality, wkind,
                              std::to_string(train.size()),
                              std::to_string(test.size()),
                              fmt(std::sqrt(eps))});
          agg[std::string(quality) + "," + wkind].push_back(std::sqrt(eps));
        }
      }
    }
  }

  std::ostringstream sum;
  sum << "quality,weights,n,median_sqrt_eps,mean_sqrt_eps,q25,q75\n";
  for (const auto& [key, vals] : agg) {
    SummaryStats st = summarize(vals);
    sum << key << "," << st.n << "," << fmt(st.med) << "," << fmt(st.mean)
        << "," << fmt(st.q25) << "," << fmt(st.q75) << "\n";
  }
  out.artifacts.emplace_back("qw_summary.csv", sum.str());
  return out;
}

// --------------------------------------------------------------- shapley

PipelineResult pipeline_shapley(const Scenario& sc) {
  PipelineResult out;
  out.name = "shapley";
  out.report.columns = {"seed", "method", "fraction_removed", "remaining",
                        "score"};
  out.report.metadata["pipeline"] = "shapley";
  out.report.metadata["config_hash"] = sc.cfg.hash();

  Dataset base = scenario_dataset(sc);
  double corruptFrac = sc.cfg.get_double("corrupt.fraction", 0.1);
  double corruptMag = sc.cfg.get_double("corrupt.magnitude_db", 40.0);
  double batchFrac = sc.cfg.get_double("shapley.batch_frac", 0.05);
  std::string qualityKind = sc.cfg.get_str("quality", "coverage");
  std::string metricKind = sc.cfg.get_str(
      "shapley.metric", qualityKind == "identity" ? "neg_mse" : "recall0");

  std::vector<double> fracs = sc.splitFractions.size() == 3
                                  ? sc.splitFractions
                                  : std::vector<double>{0.6, 0.2, 0.2};

  ForestHyper lhp;
  lhp.nTrees = static_cast<std::size_t>(sc.cfg.get_int("shapley.learner_trees", 10));
  lhp.maxDepth =
      static_cast<std::size_t>(sc.cfg.get_int("shapley.learner_depth", 6));
  lhp.task = qualityKind == "identity" ? ForestTask::Regression
                                       : ForestTask::Classification;
  ForestLearner learner(lhp);

  PerfMetric metric;
  if (metricKind == "recall0")
    metric.kind = PerfMetric::Kind::Recall0;
  else if (metricKind == "accuracy")
    metric.kind = PerfMetric::Kind::Accuracy;
  else if (metricKind == "neg_mse")
    metric.kind = PerfMetric::Kind::NegMse;
  else
    throw Error("shapley.metric must be recall0, accuracy, or neg_mse");

  std::string phiCsv, phiGeo, detectCsv;
  std::ostringstream detect;
  detect << "seed,method,corrupted_total,corrupted_in_lowest_decile\n";

  for (std::size_t s = 0; s < sc.numSeeds; ++s) {
    std::uint64_t seed = split_seed(sc, s);
    std::vector<std::size_t> corrupted;
    Dataset noisy =
        corruptFrac > 0.0
            ? inject_label_corruption(base, corruptFrac, corruptMag,
                                      derive_seed(seed, kTagCorrupt), &corrupted)
            : base;
    if (qualityKind == "coverage") {
      noisy = transform_dataset(noisy, QualityFn::coverage());
    } else if (qualityKind != "identity") {
      throw Error("pipeline_shapley supports quality = coverage or identity");
    }
    SplitResult sp = split(noisy, SplitSpec{fracs, seed});
    const Dataset& train = sp.parts[0];
    const Dataset& valTest = sp.parts[1];
    const Dataset& heldout = sp.parts[2];

    ShapleyConfig scfg;
    scfg.convergenceTol = sc.cfg.get_double("shapley.convergence_tol", 0.05);
    scfg.convergenceWindow =
        static_cast<std::size_t>(sc.cfg.get_int("shapley.window", 100));
    scfg.maxIterFactor = sc.cfg.get_double("shapley.max_iter_factor", 2.0);
    scfg.relaxedTol = sc.cfg.get_double("shapley.relaxed_tol", 0.30);
    if (sc.cfg.has("shapley.truncation_tol"))
      scfg.truncationTol = sc.cfg.get_double("shapley.truncation_tol", 0.0);
    scfg.seed = derive_seed(seed, kTagShapley);
    scfg.workers = sc.threads;

    ShapleyResult tmc = tmc_shapley(train, valTest, learner, metric, scfg);
    std::vector<double> loo = loo_values(train, valTest, learner, metric,
                                         derive_seed(seed, kTagShapley));
    out.report.metadata["tmc.iterations.s" + std::to_string(s)] =
        std::to_string(tmc.iterations);
    out.report.metadata["tmc.converged.s" + std::to_string(s)] =
        tmc.converged ? "true" : "false";

    // Which corrupted points land in the lowest value decile, per method.
    std::vector<bool> isCorrupt(noisy.size(), false);
    for (std::size_t i : corrupted) isCorrupt[i] = true;
    auto detection = [&](const std::string& method,
                         const std::vector<double>& phi) {
      std::vector<std::size_t> order(phi.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) {
                         return phi[a] < phi[b];
                       });
      std::size_t decile = std::max<std::size_t>(1, phi.size() / 10);
      std::size_t hits = 0, total = 0;
      for (std::size_t i = 0; i < phi.size(); ++i)
        if (isCorrupt[sp.indexMaps[0][i]]) ++total;
      for (std::size_t i = 0; i < decile; ++i)
        if (isCorrupt[sp.indexMaps[0][order[i]]]) ++hits;
      detect << s << "," << method << "," << total << "," << hits << "\n";
    };
    detection("tmc", tmc.phi);
    detection("loo", loo);

    auto emit_curve = [&](const std::string& method, const RemovalCurve& c) {
      for (const RemovalStep& st : c.steps)
        out.report.add_row({std::to_string(s), method, fmt(st.fractionRemoved),
                            std::to_string(st.remaining), fmt(st.score)});
    };
    emit_curve("tmc", removal_curve(train, heldout, tmc.phi, learner, metric,
                                    batchFrac, RemovalOrder::LowestFirst));
    emit_curve("loo", removal_curve(train, heldout, loo, learner, metric,
                                    batchFrac, RemovalOrder::LowestFirst));
    emit_curve("random",
               removal_curve(train, heldout, tmc.phi, learner, metric,
                             batchFrac, RemovalOrder::Random,
                             derive_seed(seed, kTagRandomOrder)));

    if (s == 0) {
      phiCsv = shapley_csv(tmc, train);
      phiGeo = shapley_geojson(tmc, train);
    }
  }

  out.artifacts.emplace_back("shapley_values.csv", phiCsv);
  out.artifacts.emplace_back("shapley_values.geojson", phiGeo);
  out.artifacts.emplace_back("corruption_detection.csv", detect.str());
  return out;
}

PipelineResult run_pipeline(const std::string& name, const Scenario& sc) {
  if (name == "base") return pipeline_base(sc);
  if (name == "quality") return pipeline_quality(sc);
  if (name == "reweight") return pipeline_reweight(sc);
  if (name == "qw") return pipeline_qw(sc);
  if (name == "shapley") return pipeline_shapley(sc);
  throw Error("unknown pipeline '" + name +
              "' (expected base, quality, reweight, qw, or shapley)");
}

std::string write_run(const std::string& outDir, const ScenarioConfig& cfg,
                      const PipelineResult& result,
                      const std::vector<std::string>& inputs) {
  namespace fs = std::filesystem;
  fs::create_directories(outDir);
  auto write = [&](const std::string& name, const std::string& bytes) {
    std::ofstream f(fs::path(outDir) / name, std::ios::binary);
    if (!f) throw Error("cannot write " + name + " under " + outDir);
    f << bytes;
  };

  nlohmann::json manifest;
  manifest["pipeline"] = result.name;
  manifest["config_hash"] = cfg.hash();
  manifest["seed"] = cfg.get_u64("seed", 42);
  manifest["inputs"] = inputs;
  manifest["artifacts"] = nlohmann::json::array();
  auto record = [&](const std::string& name, const std::string& bytes) {
    write(name, bytes);
    manifest["artifacts"].push_back(
        {{"name", name}, {"fnv1a64", fnv1a64_hex(bytes)}});
  };

  record(result.name + ".csv", result.report.to_csv());
  for (const auto& [name, bytes] : result.artifacts) record(name, bytes);
  record("config.resolved.cfg", cfg.resolved());

  std::string manifestBytes = manifest.dump(2) + "\n";
  write("manifest.json", manifestBytes);
  return (fs::path(outDir) / "manifest.json").string();
}

}  // namespace sigmap

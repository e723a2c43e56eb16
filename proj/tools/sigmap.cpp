// sigmap: batch front end for signal-map experiments.
//
// Commands bind scenario configs to the library pipelines; every run writes
// its artifacts, the fully-resolved config, and a checksummed manifest under
// --out. Exit code 0 on success; any failure prints a machine-readable JSON
// error record on stderr and exits non-zero.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sigmap/baselines.hpp"
#include "sigmap/pipelines.hpp"
#include "sigmap/quality.hpp"
#include "sigmap/rng.hpp"
#include "sigmap/shapley.hpp"

namespace {

using namespace sigmap;

int logLevel() {
  const char* v = std::getenv("SIGMAP_LOG");
  if (!v) return 1;  // warn
  std::string s(v);
  if (s == "debug") return 3;
  if (s == "info") return 2;
  if (s == "warn") return 1;
  return 0;  // error / silent
}

void log_info(const std::string& msg) {
  if (logLevel() >= 2) std::cerr << "[sigmap] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (logLevel() >= 3) std::cerr << "[sigmap:debug] " << msg << "\n";
}

struct CommonFlags {
  std::string config;
  std::string out = "out";
  std::string seed, threads, granularity, quality, target;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "Scenario config file (key=value)");
    cmd->add_option("--out", out, "Output directory for artifacts")
        ->capture_default_str();
    cmd->add_option("--seed", seed, "Master seed (overrides config)");
    cmd->add_option("--threads", threads, "Worker cap (overrides config)");
    cmd->add_option("--granularity", granularity,
                    "Model granularity: cell | ta | all");
    cmd->add_option("--quality", quality,
                    "Quality function: identity | coverage | bars | cdp");
    cmd->add_option("--target", target,
                    "Target distribution: uniform | population | custom");
  }

  // Flags override config, config overrides defaults.
  ScenarioConfig resolve() const {
    ScenarioConfig cfg = config.empty() ? ScenarioConfig::from_string("")
                                        : ScenarioConfig::from_file(config);
    if (!seed.empty()) cfg.set("seed", seed);
    if (!threads.empty()) cfg.set("threads", threads);
    if (!granularity.empty()) cfg.set("granularity", granularity);
    if (!quality.empty()) cfg.set("quality", quality);
    if (!target.empty()) cfg.set("target", target);
    cfg.set("out", out);
    log_debug("resolved config:\n" + cfg.resolved());
    return cfg;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PipelineResult kv_result(const std::string& name,
                         std::vector<std::pair<std::string, std::string>> rows) {
  PipelineResult r;
  r.name = name;
  r.report.columns = {"key", "value"};
  for (auto& [k, v] : rows) r.report.add_row({k, v});
  return r;
}

QualityFn quality_fn(const ScenarioConfig& cfg, KpiKind kpi) {
  std::string q = cfg.get_str("quality", "identity");
  if (q == "identity") return QualityFn::identity();
  if (q == "coverage") return QualityFn::coverage();
  if (q == "bars") return QualityFn::bars();
  if (q == "cdp")
    return QualityFn::cdp(fit_cdp_two_point(
        cfg.get_double("cdp.anchor1.y", -120.0),
        cfg.get_double("cdp.anchor1.p", 0.50),
        cfg.get_double("cdp.anchor2.y", -90.0),
        cfg.get_double("cdp.anchor2.p", 0.02), cfg.get_double("cdp.c", 0.01),
        kpi));
  throw Error("quality must be identity, coverage, bars, or cdp");
}

int cmd_synth(const CommonFlags& fl) {
  ScenarioConfig cfg = fl.resolve();
  Scenario sc = build_scenario(cfg);
  if (!sc.synthetic) throw Error("synth requires dataset.source=synth");
  Dataset d = scenario_dataset(sc);
  PipelineResult r = kv_result(
      "synth", {{"records", std::to_string(d.size())},
                {"stations", std::to_string(sc.gt.stations.size())},
                {"label", kpi_name(d.label_kpi())}});
  r.artifacts.emplace_back("dataset.geojson", to_geojson(d));
  write_run(fl.out, cfg, r);
  log_info("wrote " + std::to_string(d.size()) + " records to " + fl.out);
  return 0;
}

int cmd_ingest(const CommonFlags& fl, const std::string& input) {
  ScenarioConfig cfg = fl.resolve();
  std::string label = cfg.get_str("dataset.label", "rsrp");
  KpiKind kpi = label == "cqi" ? KpiKind::Cqi
                               : (label == "rsrq" ? KpiKind::Rsrq : KpiKind::Rsrp);
  ParseStats stats;
  Dataset d = parse_geojson(read_file(input), kpi, FeatureSelector::All, &stats);
  PipelineResult r = kv_result(
      "ingest", {{"input", input},
                 {"parsed", std::to_string(stats.parsed)},
                 {"skipped", std::to_string(stats.skipped)}});
  for (std::size_t i = 0; i < stats.skipReasons.size(); ++i)
    r.report.add_row({"skip_reason_" + std::to_string(i), stats.skipReasons[i]});
  r.artifacts.emplace_back("dataset.geojson", to_geojson(d));
  write_run(fl.out, cfg, r, {input});
  log_info("parsed " + std::to_string(stats.parsed) + " records, skipped " +
           std::to_string(stats.skipped));
  return 0;
}

int cmd_train(const CommonFlags& fl) {
  ScenarioConfig cfg = fl.resolve();
  Scenario sc = build_scenario(cfg);
  Dataset d = scenario_dataset(sc);
  QualityFn q = quality_fn(cfg, sc.labelKpi);
  if (q.kind() != QualityKind::Identity) d = transform_dataset(d, q);
  ForestHyper hp = sc.forest_hyper();
  hp.seed = derive_seed(sc.masterSeed, 7);
  if (d.classification_labels()) hp.task = ForestTask::Classification;
  ForestModel m = fit_forest(d, WeightVector::ones(d.size()), hp);
  PipelineResult r = kv_result(
      "train", {{"records", std::to_string(d.size())},
                {"trees", std::to_string(hp.nTrees)},
                {"task", hp.task == ForestTask::Classification
                             ? "classification"
                             : "regression"}});
  r.artifacts.emplace_back("model.json", m.serialize());
  write_run(fl.out, cfg, r, sc.synthetic ? std::vector<std::string>{}
                                         : std::vector<std::string>{sc.datasetFile});
  log_info("trained forest on " + std::to_string(d.size()) + " records");
  return 0;
}

int cmd_predict(const CommonFlags& fl, const std::string& modelPath,
                const std::string& input) {
  ScenarioConfig cfg = fl.resolve();
  ForestModel m = ForestModel::deserialize(read_file(modelPath));
  Dataset d = parse_geojson(read_file(input), KpiKind::Rsrp, m.feature_set());
  std::ostringstream csv;
  csv << "index,lat,lng,prediction\n";
  const bool cls = m.hyper().task == ForestTask::Classification;
  std::vector<double> preds;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Measurement& rec = d.records()[i];
    double p = cls ? m.predict_class(rec) : m.predict_mean(rec);
    preds.push_back(p);
    csv << i << "," << rec.location.lat << "," << rec.location.lng << "," << p
        << "\n";
  }
  PipelineResult r =
      kv_result("predict", {{"model", modelPath},
                            {"records", std::to_string(d.size())}});
  r.artifacts.emplace_back("predictions.csv", csv.str());
  write_run(fl.out, cfg, r, {modelPath, input});
  return 0;
}

int cmd_eval(const CommonFlags& fl, const std::string& pipeline) {
  ScenarioConfig cfg = fl.resolve();
  Scenario sc = build_scenario(cfg);
  PipelineResult r = run_pipeline(pipeline, sc);
  std::string manifest = write_run(fl.out, cfg, r);
  log_info("pipeline " + pipeline + " done; manifest at " + manifest);
  return 0;
}

int cmd_weights(const CommonFlags& fl) {
  ScenarioConfig cfg = fl.resolve();
  Scenario sc = build_scenario(cfg);
  // Reuses the reweight pipeline, whose artifacts include the weight table
  // and map; the comparison rows come along for free.
  PipelineResult r = pipeline_reweight(sc);
  write_run(fl.out, cfg, r);
  return 0;
}

int cmd_shapley(const CommonFlags& fl) {
  ScenarioConfig cfg = fl.resolve();
  Scenario sc = build_scenario(cfg);
  PipelineResult r = pipeline_shapley(sc);
  write_run(fl.out, cfg, r);
  return 0;
}

// Value-driven dataset minimization: remove the lowest-valued points while
// the held-out score does not degrade, and emit the kept subset.
int cmd_minimize(const CommonFlags& fl) {
  ScenarioConfig cfg = fl.resolve();
  Scenario sc = build_scenario(cfg);
  Dataset full = scenario_dataset(sc);
  std::string qualityKind = cfg.get_str("quality", "identity");
  Dataset d = full;
  if (qualityKind == "coverage")
    d = transform_dataset(d, QualityFn::coverage());
  else if (qualityKind != "identity")
    throw Error("minimize supports quality = identity or coverage");

  std::vector<double> fracs = sc.splitFractions.size() == 3
                                  ? sc.splitFractions
                                  : std::vector<double>{0.6, 0.2, 0.2};
  std::uint64_t seed = derive_seed(sc.masterSeed, 101);
  SplitResult sp = split(d, SplitSpec{fracs, seed});
  const Dataset& train = sp.parts[0];
  const Dataset& valTest = sp.parts[1];
  const Dataset& heldout = sp.parts[2];

  ForestHyper lhp;
  lhp.nTrees = static_cast<std::size_t>(cfg.get_int("shapley.learner_trees", 10));
  lhp.maxDepth = static_cast<std::size_t>(cfg.get_int("shapley.learner_depth", 6));
  lhp.task = d.classification_labels() ? ForestTask::Classification
                                       : ForestTask::Regression;
  ForestLearner learner(lhp);
  PerfMetric metric;
  metric.kind = d.classification_labels() ? PerfMetric::Kind::Recall0
                                          : PerfMetric::Kind::NegMse;

  ShapleyConfig scfg;
  scfg.seed = derive_seed(seed, 22);
  scfg.workers = sc.threads;
  ShapleyResult val = tmc_shapley(train, valTest, learner, metric, scfg);
  double batchFrac = cfg.get_double("shapley.batch_frac", 0.05);
  RemovalCurve curve =
      removal_curve(train, heldout, val.phi, learner, metric, batchFrac,
                    RemovalOrder::LowestFirst);

  std::size_t bestStep = 0;
  for (std::size_t i = 1; i < curve.steps.size(); ++i)
    if (curve.steps[i].score > curve.steps[bestStep].score) bestStep = i;
  double cut = curve.steps[bestStep].fractionRemoved;
  std::size_t nRemove = train.size() - curve.steps[bestStep].remaining;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return val.phi[a] < val.phi[b];
  });
  std::vector<std::size_t> keepLocal(order.begin() +
                                         static_cast<std::ptrdiff_t>(nRemove),
                                     order.end());
  std::sort(keepLocal.begin(), keepLocal.end());
  // Map back to the original (pre-transform) records so the emitted dataset
  // keeps its raw KPI labels.
  std::vector<std::size_t> keepFull;
  for (std::size_t i : keepLocal) keepFull.push_back(sp.indexMaps[0][i]);
  Dataset kept = full.subset(keepFull);

  PipelineResult r = kv_result(
      "minimize",
      {{"train_size", std::to_string(train.size())},
       {"kept", std::to_string(kept.size())},
       {"removed_fraction", std::to_string(cut)},
       {"score_before", std::to_string(curve.steps.front().score)},
       {"score_at_cut", std::to_string(curve.steps[bestStep].score)}});
  r.artifacts.emplace_back("minimized.geojson", to_geojson(kept));
  r.artifacts.emplace_back("removal_curve.csv", removal_curve_csv(curve));
  r.artifacts.emplace_back("shapley_values.csv", shapley_csv(val, train));
  write_run(fl.out, cfg, r);
  log_info("kept " + std::to_string(kept.size()) + " of " +
           std::to_string(train.size()) + " training records");
  return 0;
}

// Verifies a previous run's manifest (checksums) and prints its report.
int cmd_report(const CommonFlags& fl, const std::string& runDir) {
  nlohmann::json manifest =
      nlohmann::json::parse(read_file(runDir + "/manifest.json"));
  std::size_t ok = 0, bad = 0;
  for (const auto& a : manifest.at("artifacts")) {
    std::string name = a.at("name").get<std::string>();
    std::string expect = a.at("fnv1a64").get<std::string>();
    std::string got = fnv1a64_hex(read_file(runDir + "/" + name));
    if (got == expect) {
      ++ok;
    } else {
      ++bad;
      std::cerr << "checksum mismatch: " << name << " expected " << expect
                << " got " << got << "\n";
    }
  }
  std::cout << "pipeline: " << manifest.at("pipeline").get<std::string>()
            << "\nconfig_hash: " << manifest.at("config_hash").get<std::string>()
            << "\nartifacts_ok: " << ok << "\nartifacts_bad: " << bad << "\n";
  std::string csv = manifest.at("pipeline").get<std::string>() + ".csv";
  std::cout << "\n" << read_file(runDir + "/" + csv);
  return bad == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sigmap: signal-map prediction experiments"};
  app.require_subcommand(1);

  CommonFlags fl;
  std::string ingestInput, modelPath, predictInput, pipelineName, runDir;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  fl.attach(synth);

  CLI::App* ingest = app.add_subcommand("ingest", "Parse a GeoJSON dataset");
  fl.attach(ingest);
  ingest->add_option("--input", ingestInput, "GeoJSON input file")->required();

  CLI::App* train = app.add_subcommand("train", "Fit a forest on a dataset");
  fl.attach(train);

  CLI::App* predict = app.add_subcommand("predict", "Predict with a saved model");
  fl.attach(predict);
  predict->add_option("--model", modelPath, "Serialized model file")->required();
  predict->add_option("--input", predictInput, "GeoJSON query points")->required();

  CLI::App* eval = app.add_subcommand("eval", "Run an experiment pipeline");
  fl.attach(eval);
  eval->add_option("pipeline", pipelineName,
                   "Pipeline: base | quality | reweight | qw | shapley")
      ->required();

  CLI::App* weights = app.add_subcommand("weights", "Importance-weight a dataset");
  fl.attach(weights);

  CLI::App* shapley = app.add_subcommand("shapley", "Value training data");
  fl.attach(shapley);

  CLI::App* minimize =
      app.add_subcommand("minimize", "Drop low-valued training data");
  fl.attach(minimize);

  CLI::App* report = app.add_subcommand("report", "Verify and print a past run");
  fl.attach(report);
  report->add_option("--run", runDir, "Run directory with manifest.json")
      ->required();

  CLI11_PARSE(app, argc, argv);

  std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "synth") return cmd_synth(fl);
    if (cmd == "ingest") return cmd_ingest(fl, ingestInput);
    if (cmd == "train") return cmd_train(fl);
    if (cmd == "predict") return cmd_predict(fl, modelPath, predictInput);
    if (cmd == "eval") return cmd_eval(fl, pipelineName);
    if (cmd == "weights") return cmd_weights(fl);
    if (cmd == "shapley") return cmd_shapley(fl);
    if (cmd == "minimize") return cmd_minimize(fl);
    if (cmd == "report") return cmd_report(fl, runDir);
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", e.what()}, {"command", cmd}};
    std::cerr << err.dump() << "\n";
    return 2;
  }
  return 0;
}

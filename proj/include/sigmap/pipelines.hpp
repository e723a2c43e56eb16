#ifndef SIGMAP_PIPELINES_HPP
#define SIGMAP_PIPELINES_HPP

#include <string>
#include <utility>
#include <vector>

#include "sigmap/config.hpp"
#include "sigmap/eval.hpp"
#include "sigmap/forest.hpp"
#include "sigmap/ingest.hpp"
#include "sigmap/reweight.hpp"
#include "sigmap/synth.hpp"

namespace sigmap {

// A fully-materialized run description: either a synthetic world or a dataset
// file, plus the knobs shared by every pipeline.
struct Scenario {
  ScenarioConfig cfg;

  bool synthetic = true;
  std::string datasetFile;  // when !synthetic
  GroundTruth gt;           // when synthetic
  SamplingProcess sampling = UniformSampling{};
  TimeModel time;
  std::size_t samples = 500;

  KpiKind labelKpi = KpiKind::Rsrp;
  FeatureSelector features = FeatureSelector::XY;
  std::string granularity = "cell";  // cell | ta | all
  std::vector<double> splitFractions = {0.7, 0.3};
  std::uint64_t masterSeed = 0;
  std::size_t numSeeds = 10;
  std::size_t threads = 1;

  ForestHyper forest_hyper() const;
};

Scenario build_scenario(const ScenarioConfig& cfg);

// The scenario's dataset: sampled once from the ground truth (seeded from the
// master seed) or loaded from the configured file. Per-seed variation comes
// from the split seeds, not from resampling.
Dataset scenario_dataset(const Scenario& sc);

// Local frame for spatial work: the ground-truth frame for synthetic data,
// otherwise centered on the dataset's mean coordinate.
LocalFrame scenario_frame(const Scenario& sc, const Dataset& d);

struct PipelineResult {
  std::string name;
  ExperimentReport report;  // main CSV (<name>.csv)
  // Extra artifacts (CSV/GeoJSON) as (filename, bytes).
  std::vector<std::pair<std::string, std::string>> artifacts;
};

PipelineResult pipeline_base(const Scenario& sc);
PipelineResult pipeline_quality(const Scenario& sc);
PipelineResult pipeline_reweight(const Scenario& sc);
PipelineResult pipeline_qw(const Scenario& sc);
PipelineResult pipeline_shapley(const Scenario& sc);

// Dispatch by name: base | quality | reweight | qw | shapley.
PipelineResult run_pipeline(const std::string& name, const Scenario& sc);

// Writes the report, every artifact, the fully-resolved config, and a
// manifest (inputs, config hash, seed, per-artifact FNV-1a checksums) under
// outDir. Returns the manifest path.
std::string write_run(const std::string& outDir, const ScenarioConfig& cfg,
                      const PipelineResult& result,
                      const std::vector<std::string>& inputs = {});

}  // namespace sigmap

#endif

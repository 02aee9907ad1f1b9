#pragma once

#include <optional>
#include <string>
#include <vector>

#include "skimlab/biassim.hpp"
#include "skimlab/evalreport.hpp"
#include "skimlab/skim.hpp"
#include "skimlab/theory.hpp"
#include "skimlab/world.hpp"
#include "skimlab/xctrain.hpp"

namespace skimlab {

// Every stochastic stage owns one seed; unset stage seeds derive from the
// master so a single integer pins the whole experiment.
struct SeedPlan {
  uint64_t master = 1;
  std::optional<uint64_t> world, clicks, split, train, generate, mar, probe;

  uint64_t world_seed() const;
  uint64_t clicks_seed() const;
  uint64_t split_seed() const;
  uint64_t train_seed() const;
  uint64_t generate_seed() const;
  uint64_t mar_seed() const;
  uint64_t probe_seed() const;
};

struct LeverParams {
  int top_m = 10;
  double min_score = 0.5;
};

struct GandalfParams {
  double threshold = 0.1;
};

struct SkimParams {
  GeneratorSpec generator;       // kind oracle/oracle_nometa/remote
  bool binarize_weights = true;  // write merged skim positives with weight 1
};

struct ExperimentConfig {
  WorldConfig world;
  EncoderMode deployed_mode = EncoderMode::kSurfaceOnly;
  EncoderMode train_mode = EncoderMode::kFull;
  ClickModelConfig bias;
  double test_fraction = 0.25;
  std::vector<std::string> methods = {"vanilla"};
  TrainConfig train;
  PropensityModelConfig ips;
  LeverParams lever;
  GandalfParams gandalf;
  SkimParams skim;
  MappingConfig mapping;
  std::vector<int> eval_ks = {5, 25, 100};
  SeedPlan seeds;
  int threads = 0;  // 0: SKIMLAB_THREADS or hardware concurrency
};

// Defaults shared by the CLI, tests and the acceptance suite.
ExperimentConfig default_experiment_config();

ExperimentConfig experiment_config_from_json(const std::string& text);
std::string experiment_config_to_json(const ExperimentConfig& cfg);
uint64_t experiment_config_hash(const ExperimentConfig& cfg);

const std::vector<std::string>& known_methods();

// Expensive shared stages, reusable across methods and sweep points whose
// axis does not touch them.
struct StageCache {
  std::optional<World> world;
  std::optional<InteractionSet> clicked;
  std::optional<Splits> splits;
  uint64_t world_key = 0;  // hash of (world config, seed)
  uint64_t bias_key = 0;   // hash of (world key, click config, split seed)
};

struct MethodResult {
  std::string method;
  std::size_t train_pairs = 0;   // pairs the model trained on
  std::size_t added_pairs = 0;   // pairs added on top of the clicked train set
  double gt_covered = 0.0;       // skim methods only
  EvalReport report;
};

struct PipelineResult {
  std::string run_dir;
  uint64_t config_hash = 0;
  std::size_t clicked_pairs = 0;
  std::size_t truth_pairs = 0;
  std::vector<MethodResult> methods;
  std::vector<std::string> artifacts;  // file names relative to run_dir
};

PipelineResult run_pipeline(const ExperimentConfig& cfg, const std::string& out_dir,
                            StageCache* cache = nullptr);
PipelineResult run_pipeline_file(const std::string& config_path, const std::string& out_dir);

enum class SweepAxis { kTau, kTopK, kBudgetN, kExposureB };

SweepAxis sweep_axis_from_name(const std::string& name);
std::string sweep_axis_name(SweepAxis axis);

struct SweepPoint {
  double value = 0.0;
  std::string run_dir;
  PipelineResult result;
};

struct SweepResult {
  SweepAxis axis;
  std::vector<SweepPoint> points;
  std::string csv;  // value, pair accounting, unbiased recall columns
};

// One pipeline run per value on a shared world seed; values are sorted with
// a notice if they arrive unordered.
SweepResult sweep(const ExperimentConfig& base, SweepAxis axis, std::vector<double> values,
                  const std::string& out_dir);

// verify-bound driver: closed form, bound and Monte Carlo over a list of
// sample counts, plus a JSON summary. Marginals are Zipf(alpha) over K items.
struct BoundSweepRow {
  long long n = 0;
  double bound = 0.0;
  double expected = 0.0;
  double empirical_mean = 0.0;
  double violation_rate = 0.0;
  bool pass = false;
};

struct BoundSweepResult {
  std::vector<BoundSweepRow> rows;
  std::string csv;
  std::string json;
};

BoundSweepResult verify_bound_sweep(int n_items, double zipf_alpha, double exposure_b,
                                    const std::vector<long long>& ns, double delta, int trials,
                                    uint64_t seed, SurvivalKind survival);

}  // namespace skimlab

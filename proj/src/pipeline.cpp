#include "skimlab/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>

#include "json.hpp"
#include "skimlab/common.hpp"
#include "skimlab/debias.hpp"
#include "skimlab/rng.hpp"

namespace skimlab {

namespace fs = std::filesystem;

namespace {

constexpr uint64_t kSeedWorld = 101;
constexpr uint64_t kSeedClicks = 102;
constexpr uint64_t kSeedSplit = 103;
constexpr uint64_t kSeedTrain = 104;
constexpr uint64_t kSeedGenerate = 105;
constexpr uint64_t kSeedMar = 106;
constexpr uint64_t kSeedProbe = 107;
constexpr uint64_t kSeedTeacher = 108;

uint64_t derive_seed(uint64_t master, uint64_t tag) { return mix64(master ^ mix64(tag)); }

void check_known_keys(const nlohmann::json& j, const std::string& where,
                      const std::set<std::string>& allowed) {
  for (const auto& [key, value] : j.items()) {
    if (allowed.find(key) == allowed.end()) {
      throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

uint64_t SeedPlan::world_seed() const { return world ? *world : derive_seed(master, kSeedWorld); }
uint64_t SeedPlan::clicks_seed() const { return clicks ? *clicks : derive_seed(master, kSeedClicks); }
uint64_t SeedPlan::split_seed() const { return split ? *split : derive_seed(master, kSeedSplit); }
uint64_t SeedPlan::train_seed() const { return train ? *train : derive_seed(master, kSeedTrain); }
uint64_t SeedPlan::generate_seed() const {
  return generate ? *generate : derive_seed(master, kSeedGenerate);
}
uint64_t SeedPlan::mar_seed() const { return mar ? *mar : derive_seed(master, kSeedMar); }
uint64_t SeedPlan::probe_seed() const { return probe ? *probe : derive_seed(master, kSeedProbe); }

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.world = WorldConfig{};
  cfg.bias = ClickModelConfig{};
  cfg.train.epochs = 12;
  cfg.train.learning_rate = 0.1;
  cfg.train.negatives_per_positive = 4;
  cfg.train.batch_size = 256;
  cfg.mapping.tau = 0.8;
  cfg.mapping.k_neighbors = 20;
  cfg.mapping.index.kind = IndexConfig::Kind::kHnsw;
  cfg.skim.generator.kind = GeneratorKind::kOracle;
  cfg.skim.generator.count_per_doc = 4;
  return cfg;
}

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> methods = {
      "vanilla", "ips", "golden_ips", "gandalf", "lever",
      "lever_ips", "skim", "skim_nometa", "skim_remote", "mar"};
  return methods;
}

namespace {

nlohmann::json seeds_to_json(const SeedPlan& s) {
  nlohmann::json j{{"master", s.master}};
  auto put = [&](const char* name, const std::optional<uint64_t>& v) {
    if (v) j[name] = *v;
  };
  put("world", s.world);
  put("clicks", s.clicks);
  put("split", s.split);
  put("train", s.train);
  put("generate", s.generate);
  put("mar", s.mar);
  put("probe", s.probe);
  return j;
}

}  // namespace

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["world"] = nlohmann::json{
      {"n_items", cfg.world.n_items},
      {"n_queries", cfg.world.n_queries},
      {"n_documents", cfg.world.n_documents},
      {"dim", cfg.world.dim},
      {"zipf_alpha", cfg.world.zipf_alpha},
      {"noise_sigma", cfg.world.noise_sigma},
      {"items_per_doc_min", cfg.world.items_per_doc_min},
      {"items_per_doc_max", cfg.world.items_per_doc_max},
      {"hidden_item_fraction", cfg.world.hidden_item_fraction},
      {"distractor_count", cfg.world.distractor_count},
      {"ortho_cap", cfg.world.ortho_cap},
      {"query_weight_mode",
       cfg.world.query_weight_mode == QueryWeightMode::kUniform ? "uniform" : "zipf"},
      {"query_zipf_alpha", cfg.world.query_zipf_alpha}};
  j["encoder"] = nlohmann::json{{"deployed_mode", encoder_mode_name(cfg.deployed_mode)},
                                {"train_mode", encoder_mode_name(cfg.train_mode)}};
  j["bias"] = nlohmann::json{{"exposure_b", cfg.bias.exposure_b},
                             {"top_k", cfg.bias.top_k},
                             {"temperature", cfg.bias.temperature},
                             {"test_fraction", cfg.test_fraction}};
  if (cfg.bias.budget_n) j["bias"]["budget_n"] = *cfg.bias.budget_n;
  j["method"] = cfg.methods;
  j["train"] = nlohmann::json{{"epochs", cfg.train.epochs},
                              {"learning_rate", cfg.train.learning_rate},
                              {"l2", cfg.train.l2},
                              {"negatives_per_positive", cfg.train.negatives_per_positive},
                              {"batch_size", cfg.train.batch_size}};
  j["ips"] = nlohmann::json{{"a", cfg.ips.a}, {"b", cfg.ips.b}, {"p_min", cfg.ips.p_min}};
  j["lever"] = nlohmann::json{{"top_m", cfg.lever.top_m}, {"min_score", cfg.lever.min_score}};
  j["gandalf"] = nlohmann::json{{"threshold", cfg.gandalf.threshold}};
  j["skim"] = nlohmann::json{{"generator", generator_kind_name(cfg.skim.generator.kind)},
                             {"count_per_doc", cfg.skim.generator.count_per_doc},
                             {"binarize_weights", cfg.skim.binarize_weights},
                             {"retries", cfg.skim.generator.retries},
                             {"timeout_s", cfg.skim.generator.timeout_s},
                             {"backoff_ms", cfg.skim.generator.backoff_ms}};
  if (!cfg.skim.generator.endpoint.empty()) {
    j["skim"]["endpoint"] = cfg.skim.generator.endpoint;
  }
  j["mapping"] = nlohmann::json{
      {"tau", cfg.mapping.tau},
      {"k_neighbors", cfg.mapping.k_neighbors},
      {"index", nlohmann::json{
                    {"kind", cfg.mapping.index.kind == IndexConfig::Kind::kExact ? "exact" : "hnsw"},
                    {"m", cfg.mapping.index.m},
                    {"ef_construction", cfg.mapping.index.ef_construction},
                    {"ef_search", cfg.mapping.index.ef_search}}}};
  j["eval"] = nlohmann::json{{"ks", cfg.eval_ks}};
  j["seeds"] = seeds_to_json(cfg.seeds);
  return j.dump(2) + "\n";
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: invalid json: ") + e.what());
  }
  check_known_keys(j, "top level",
                   {"world", "encoder", "bias", "method", "train", "ips", "lever", "gandalf",
                    "skim", "mapping", "eval", "seeds", "threads"});
  ExperimentConfig cfg = default_experiment_config();
  if (j.contains("world")) {
    const auto& w = j["world"];
    check_known_keys(w, "world",
                     {"n_items", "n_queries", "n_documents", "dim", "zipf_alpha", "noise_sigma",
                      "items_per_doc_min", "items_per_doc_max", "hidden_item_fraction",
                      "distractor_count", "ortho_cap", "query_weight_mode", "query_zipf_alpha"});
    cfg.world.n_items = w.value("n_items", cfg.world.n_items);
    cfg.world.n_queries = w.value("n_queries", cfg.world.n_queries);
    cfg.world.n_documents = w.value("n_documents", cfg.world.n_documents);
    cfg.world.dim = w.value("dim", cfg.world.dim);
    cfg.world.zipf_alpha = w.value("zipf_alpha", cfg.world.zipf_alpha);
    cfg.world.noise_sigma = w.value("noise_sigma", cfg.world.noise_sigma);
    cfg.world.items_per_doc_min = w.value("items_per_doc_min", cfg.world.items_per_doc_min);
    cfg.world.items_per_doc_max = w.value("items_per_doc_max", cfg.world.items_per_doc_max);
    cfg.world.hidden_item_fraction =
        w.value("hidden_item_fraction", cfg.world.hidden_item_fraction);
    cfg.world.distractor_count = w.value("distractor_count", cfg.world.distractor_count);
    cfg.world.ortho_cap = w.value("ortho_cap", cfg.world.ortho_cap);
    if (w.contains("query_weight_mode")) {
      std::string mode = w["query_weight_mode"].get<std::string>();
      if (mode == "uniform") {
        cfg.world.query_weight_mode = QueryWeightMode::kUniform;
      } else if (mode == "zipf") {
        cfg.world.query_weight_mode = QueryWeightMode::kZipf;
      } else {
        throw ConfigError("config: world.query_weight_mode must be uniform or zipf");
      }
    }
    cfg.world.query_zipf_alpha = w.value("query_zipf_alpha", cfg.world.query_zipf_alpha);
  }
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    check_known_keys(e, "encoder", {"deployed_mode", "train_mode"});
    if (e.contains("deployed_mode")) {
      cfg.deployed_mode = encoder_mode_from_name(e["deployed_mode"].get<std::string>());
    }
    if (e.contains("train_mode")) {
      cfg.train_mode = encoder_mode_from_name(e["train_mode"].get<std::string>());
    }
  }
  if (j.contains("bias")) {
    const auto& b = j["bias"];
    check_known_keys(b, "bias",
                     {"exposure_b", "top_k", "temperature", "budget_n", "test_fraction"});
    cfg.bias.exposure_b = b.value("exposure_b", cfg.bias.exposure_b);
    cfg.bias.top_k = b.value("top_k", cfg.bias.top_k);
    cfg.bias.temperature = b.value("temperature", cfg.bias.temperature);
    if (b.contains("budget_n")) cfg.bias.budget_n = b["budget_n"].get<uint64_t>();
    cfg.test_fraction = b.value("test_fraction", cfg.test_fraction);
  }
  if (j.contains("method")) {
    if (j["method"].is_string()) {
      cfg.methods = {j["method"].get<std::string>()};
    } else {
      cfg.methods = j["method"].get<std::vector<std::string>>();
    }
  }
  for (const auto& m : cfg.methods) {
    const auto& known = known_methods();
    if (std::find(known.begin(), known.end(), m) == known.end()) {
      throw ConfigError("config: unknown method '" + m + "'");
    }
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    check_known_keys(t, "train",
                     {"epochs", "learning_rate", "l2", "negatives_per_positive", "batch_size"});
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
    cfg.train.l2 = t.value("l2", cfg.train.l2);
    cfg.train.negatives_per_positive =
        t.value("negatives_per_positive", cfg.train.negatives_per_positive);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
  }
  if (j.contains("ips")) {
    const auto& p = j["ips"];
    check_known_keys(p, "ips", {"a", "b", "p_min"});
    cfg.ips.a = p.value("a", cfg.ips.a);
    cfg.ips.b = p.value("b", cfg.ips.b);
    cfg.ips.p_min = p.value("p_min", cfg.ips.p_min);
  }
  if (j.contains("lever")) {
    const auto& l = j["lever"];
    check_known_keys(l, "lever", {"top_m", "min_score"});
    cfg.lever.top_m = l.value("top_m", cfg.lever.top_m);
    cfg.lever.min_score = l.value("min_score", cfg.lever.min_score);
  }
  if (j.contains("gandalf")) {
    const auto& g = j["gandalf"];
    check_known_keys(g, "gandalf", {"threshold"});
    cfg.gandalf.threshold = g.value("threshold", cfg.gandalf.threshold);
  }
  if (j.contains("skim")) {
    const auto& s = j["skim"];
    check_known_keys(s, "skim",
                     {"generator", "count_per_doc", "binarize_weights", "endpoint", "retries",
                      "timeout_s", "backoff_ms"});
    if (s.contains("generator")) {
      cfg.skim.generator.kind = generator_kind_from_name(s["generator"].get<std::string>());
    }
    cfg.skim.generator.count_per_doc = s.value("count_per_doc", cfg.skim.generator.count_per_doc);
    cfg.skim.binarize_weights = s.value("binarize_weights", cfg.skim.binarize_weights);
    cfg.skim.generator.endpoint = s.value("endpoint", cfg.skim.generator.endpoint);
    cfg.skim.generator.retries = s.value("retries", cfg.skim.generator.retries);
    cfg.skim.generator.timeout_s = s.value("timeout_s", cfg.skim.generator.timeout_s);
    cfg.skim.generator.backoff_ms = s.value("backoff_ms", cfg.skim.generator.backoff_ms);
  }
  if (j.contains("mapping")) {
    const auto& m = j["mapping"];
    check_known_keys(m, "mapping", {"tau", "k_neighbors", "index"});
    cfg.mapping.tau = m.value("tau", cfg.mapping.tau);
    cfg.mapping.k_neighbors = m.value("k_neighbors", cfg.mapping.k_neighbors);
    if (m.contains("index")) {
      const auto& ix = m["index"];
      check_known_keys(ix, "mapping.index", {"kind", "m", "ef_construction", "ef_search", "seed"});
      if (ix.contains("kind")) {
        std::string kind = ix["kind"].get<std::string>();
        if (kind == "exact") {
          cfg.mapping.index.kind = IndexConfig::Kind::kExact;
        } else if (kind == "hnsw") {
          cfg.mapping.index.kind = IndexConfig::Kind::kHnsw;
        } else {
          throw ConfigError("config: mapping.index.kind must be exact or hnsw");
        }
      }
      cfg.mapping.index.m = ix.value("m", cfg.mapping.index.m);
      cfg.mapping.index.ef_construction = ix.value("ef_construction", cfg.mapping.index.ef_construction);
      cfg.mapping.index.ef_search = ix.value("ef_search", cfg.mapping.index.ef_search);
      cfg.mapping.index.seed = ix.value("seed", cfg.mapping.index.seed);
    }
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    check_known_keys(e, "eval", {"ks"});
    if (e.contains("ks")) cfg.eval_ks = e["ks"].get<std::vector<int>>();
  }
  if (j.contains("seeds")) {
    const auto& s = j["seeds"];
    check_known_keys(s, "seeds",
                     {"master", "world", "clicks", "split", "train", "generate", "mar", "probe"});
    cfg.seeds.master = s.value("master", cfg.seeds.master);
    auto get = [&](const char* name) -> std::optional<uint64_t> {
      if (s.contains(name)) return s[name].get<uint64_t>();
      return std::nullopt;
    };
    cfg.seeds.world = get("world");
    cfg.seeds.clicks = get("clicks");
    cfg.seeds.split = get("split");
    cfg.seeds.train = get("train");
    cfg.seeds.generate = get("generate");
    cfg.seeds.mar = get("mar");
    cfg.seeds.probe = get("probe");
  }
  if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
  validate(cfg.world);
  validate(cfg.bias);
  validate(cfg.train);
  validate(cfg.mapping);
  if (cfg.eval_ks.empty()) throw ConfigError("config: eval.ks must not be empty");
  for (int k : cfg.eval_ks) {
    if (k < 1) throw ConfigError("config: eval.ks entries must be >= 1");
  }
  if (!(cfg.test_fraction > 0.0) || !(cfg.test_fraction < 1.0)) {
    throw ConfigError("config: bias.test_fraction must be in (0, 1)");
  }
  return cfg;
}

uint64_t experiment_config_hash(const ExperimentConfig& cfg) {
  return fnv1a64(experiment_config_to_json(cfg));
}

namespace {

struct RunContext {
  const ExperimentConfig* cfg;
  fs::path dir;
  const World* world;
  const InteractionSet* clicked;
  const Splits* splits;
  EncoderSpec deployed;
  EncoderSpec train_encoder;
  nlohmann::json manifest_stages = nlohmann::json::array();
  std::vector<std::string> artifacts;

  void write_artifact(const std::string& name, const std::string& bytes) {
    write_text_file((dir / name).string(), bytes);
    artifacts.push_back(name);
  }
  void write_artifact_binary(const std::string& name,
                             const std::function<void(const std::string&)>& writer) {
    writer((dir / name).string());
    artifacts.push_back(name);
  }
  void record_stage(const std::string& name, const nlohmann::json& extra = {}) {
    nlohmann::json stage{{"name", name}, {"status", "ok"}};
    if (!extra.empty()) stage["info"] = extra;
    manifest_stages.push_back(stage);
  }
};

std::string train_sidecar_json(const TrainConfig& cfg, const std::string& propensity_source) {
  nlohmann::json j{{"epochs", cfg.epochs},
                   {"learning_rate", cfg.learning_rate},
                   {"l2", cfg.l2},
                   {"negatives_per_positive", cfg.negatives_per_positive},
                   {"batch_size", cfg.batch_size},
                   {"positive_weighting",
                    cfg.positive_weighting == PositiveWeighting::kIps ? "ips" : "none"},
                   {"propensity_source", propensity_source},
                   {"seed", cfg.seed}};
  return j.dump(2) + "\n";
}

InteractionSet binarized(const InteractionSet& in) {
  InteractionSet out = in;
  for (auto& p : out.pairs) p.weight = 1.0f;
  return out;
}

struct SkimArtifacts {
  std::vector<SyntheticQuery> synth;
  InteractionSet skim_pairs;
  InteractionSet merged;
  double gt_covered = 0.0;
};

SkimArtifacts run_skim_stage(const RunContext& ctx, GeneratorKind kind) {
  const ExperimentConfig& cfg = *ctx.cfg;
  const World& world = *ctx.world;

  GeneratorSpec gen = cfg.skim.generator;
  gen.kind = kind;
  gen.seed = cfg.seeds.generate_seed();

  SkimArtifacts out;
  if (kind == GeneratorKind::kRemote) {
    auto report = generate_remote(world, [&] {
      std::vector<int> ids(world.n_documents());
      for (int d = 0; d < world.n_documents(); ++d) ids[d] = d;
      return ids;
    }(), gen, ctx.train_encoder);
    out.synth = std::move(report.queries);
    if (!report.failures.empty()) {
      std::fprintf(stderr, "[skimlab] warning: %zu documents failed remote generation\n",
                   report.failures.size());
    }
  } else {
    for (int d = 0; d < world.n_documents(); ++d) {
      auto qs = generate_oracle(world, d, gen, ctx.train_encoder);
      out.synth.insert(out.synth.end(), qs.begin(), qs.end());
    }
  }

  // Index over train-split query embeddings only.
  const std::vector<int>& train_queries = ctx.splits->train_queries;
  std::vector<Embedding> emb(train_queries.size());
  parallel_for(0, emb.size(), [&](std::size_t i) {
    emb[i] = embed(ctx.train_encoder, world.queries[train_queries[i]].surface);
  }, cfg.threads);
  IndexConfig index_cfg = cfg.mapping.index;
  index_cfg.ef_search = std::max(index_cfg.ef_search, cfg.mapping.k_neighbors);
  AnnIndex index = AnnIndex::build(emb, index_cfg);

  out.skim_pairs = map_synthetic(out.synth, index, train_queries, world.n_queries(),
                                 world.n_documents(), cfg.mapping);
  out.gt_covered = gt_covered_at_k(out.synth, world, index, train_queries, cfg.mapping.k_neighbors);
  out.merged = merge_dataset(ctx.splits->train, cfg.skim.binarize_weights
                                                    ? binarized(out.skim_pairs)
                                                    : out.skim_pairs);
  return out;
}

// Training set, model and bookkeeping for one method name.
struct MethodRun {
  InteractionSet train_set;
  OvaModel model;
  std::string propensity_source = "none";
  double gt_covered = 0.0;
  bool write_train_set = false;
  std::vector<SyntheticQuery> synth;
};

MethodRun run_method(const RunContext& ctx, const std::string& method) {
  const ExperimentConfig& cfg = *ctx.cfg;
  const World& world = *ctx.world;
  const Splits& splits = *ctx.splits;

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seeds.train_seed();

  MethodRun run;
  if (method == "vanilla") {
    run.train_set = splits.train;
    run.model = train_ova(run.train_set, world, tc);
  } else if (method == "ips") {
    run.train_set = splits.train;
    tc.positive_weighting = PositiveWeighting::kIps;
    tc.propensities = estimate_propensities(run.train_set, cfg.ips);
    run.propensity_source = "estimated";
    run.model = train_ova(run.train_set, world, tc);
  } else if (method == "golden_ips") {
    run.train_set = splits.train;
    tc.positive_weighting = PositiveWeighting::kIps;
    ClickModelConfig click_cfg = cfg.bias;
    click_cfg.seed = cfg.seeds.clicks_seed();
    tc.pair_propensities = golden_propensities(world, click_cfg, ctx.deployed);
    run.propensity_source = "golden";
    run.model = train_ova(run.train_set, world, tc);
  } else if (method == "gandalf") {
    run.train_set = gandalf_augment(splits.train, cfg.gandalf.threshold);
    run.write_train_set = true;
    run.model = train_ova(run.train_set, world, tc);
  } else if (method == "lever" || method == "lever_ips") {
    TrainConfig teacher_cfg = cfg.train;
    teacher_cfg.seed = derive_seed(cfg.seeds.master, kSeedTeacher);
    OvaModel teacher = train_ova(splits.train, world, teacher_cfg);
    run.train_set = lever_augment(splits.train, teacher, world, cfg.lever.top_m,
                                  cfg.lever.min_score);
    run.write_train_set = true;
    if (method == "lever_ips") {
      tc.positive_weighting = PositiveWeighting::kIps;
      tc.propensities = estimate_propensities(splits.train, cfg.ips);
      run.propensity_source = "estimated";
    }
    run.model = train_ova(run.train_set, world, tc);
  } else if (method == "skim" || method == "skim_nometa" || method == "skim_remote") {
    GeneratorKind kind = GeneratorKind::kOracle;
    if (method == "skim_nometa") kind = GeneratorKind::kOracleNoMeta;
    if (method == "skim_remote") kind = GeneratorKind::kRemote;
    SkimArtifacts art = run_skim_stage(ctx, kind);
    run.train_set = std::move(art.merged);
    run.gt_covered = art.gt_covered;
    run.synth = std::move(art.synth);
    run.write_train_set = true;
    run.model = train_ova(run.train_set, world, tc);
  } else if (method == "mar") {
    // Matched click budget: uniform sample from the train-split truth of the
    // same size as the clicked train set.
    InteractionSet truth = full_ground_truth(world);
    InteractionSet truth_train;
    truth_train.n_queries = truth.n_queries;
    truth_train.n_docs = truth.n_docs;
    std::vector<uint8_t> is_train(world.n_queries(), 0);
    for (int q : splits.train_queries) is_train[q] = 1;
    for (const auto& p : truth.pairs) {
      if (is_train[p.query]) truth_train.pairs.push_back(p);
    }
    uint64_t budget = std::min<uint64_t>(splits.train.pairs.size(), truth_train.pairs.size());
    run.train_set = sample_mar_from(truth_train, budget, cfg.seeds.mar_seed());
    run.write_train_set = true;
    run.model = train_ova(run.train_set, world, tc);
  } else {
    throw ConfigError("config: unknown method '" + method + "'");
  }
  return run;
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& cfg, const std::string& out_dir,
                            StageCache* cache) {
  validate(cfg.world);
  validate(cfg.bias);
  validate(cfg.train);
  validate(cfg.mapping);
  if (cfg.methods.empty()) throw ConfigError("config: no methods selected");

  PipelineResult result;
  result.run_dir = out_dir;
  result.config_hash = experiment_config_hash(cfg);

  RunContext ctx;
  ctx.cfg = &cfg;
  ctx.dir = fs::path(out_dir);
  fs::create_directories(ctx.dir);
  ctx.deployed = EncoderSpec{cfg.deployed_mode, {}, true};
  ctx.train_encoder = EncoderSpec{cfg.train_mode, {}, true};

  nlohmann::json manifest{{"format", "skimlab.manifest"},
                          {"version", 1},
                          {"config_hash", hex64(result.config_hash)},
                          {"status", "failed"},
                          {"versions", nlohmann::json{{"skimlab", "0.1.0"}}}};
  manifest["seeds"] = nlohmann::json{{"world", cfg.seeds.world_seed()},
                                     {"clicks", cfg.seeds.clicks_seed()},
                                     {"split", cfg.seeds.split_seed()},
                                     {"train", cfg.seeds.train_seed()},
                                     {"generate", cfg.seeds.generate_seed()},
                                     {"mar", cfg.seeds.mar_seed()},
                                     {"probe", cfg.seeds.probe_seed()}};
  std::string current_stage = "init";
  auto fail_manifest = [&](const std::string& why) {
    manifest["failed_stage"] = current_stage;
    manifest["error"] = why;
    manifest["stages"] = ctx.manifest_stages;
    write_text_file((ctx.dir / "manifest.json").string(), manifest.dump(2) + "\n");
  };

  try {
    // Stage: world.
    current_stage = "world";
    World local_world;
    uint64_t world_key = 0;
    {
      // world.json is a pure function of (config, seed); hash it without a build.
      World shell;
      shell.config = cfg.world;
      shell.seed = cfg.seeds.world_seed();
      world_key = fnv1a64(world_to_json(shell));
    }
    if (cache != nullptr && cache->world && cache->world_key == world_key) {
      // reuse
    } else {
      local_world = build_world(cfg.world, cfg.seeds.world_seed());
      if (cache != nullptr) {
        cache->world = std::move(local_world);
        cache->world_key = world_key;
        cache->clicked.reset();
        cache->splits.reset();
      }
    }
    const World& world = cache != nullptr ? *cache->world : local_world;
    ctx.world = &world;
    ctx.write_artifact("world.json", world_to_json(world));
    ctx.record_stage("world", {{"n_items", world.n_items()},
                               {"n_queries", world.n_queries()},
                               {"n_documents", world.n_documents()}});

    // Stage: bias (candidates, clicks, splits).
    current_stage = "bias";
    ClickModelConfig click_cfg = cfg.bias;
    click_cfg.seed = cfg.seeds.clicks_seed();
    uint64_t bias_key = mix64(world_key ^ fnv1a64(experiment_config_to_json(cfg)));
    // bias_key must only cover bias-relevant knobs; hash them directly.
    {
      nlohmann::json bj{{"exposure_b", click_cfg.exposure_b},
                        {"top_k", click_cfg.top_k},
                        {"temperature", click_cfg.temperature},
                        {"seed", click_cfg.seed},
                        {"test_fraction", cfg.test_fraction},
                        {"split_seed", cfg.seeds.split_seed()},
                        {"deployed", encoder_mode_name(cfg.deployed_mode)}};
      if (click_cfg.budget_n) bj["budget_n"] = *click_cfg.budget_n;
      bias_key = mix64(world_key ^ fnv1a64(bj.dump()));
    }
    InteractionSet local_clicked;
    Splits local_splits;
    if (cache != nullptr && cache->clicked && cache->splits && cache->bias_key == bias_key) {
      // reuse
    } else {
      InteractionSet candidates = topk_candidates(world, ctx.deployed, click_cfg.top_k, cfg.threads);
      local_clicked = sample_clicks(candidates, world, click_cfg, ctx.deployed);
      local_splits = make_splits(world, local_clicked, cfg.test_fraction, cfg.seeds.split_seed());
      if (cache != nullptr) {
        cache->clicked = std::move(local_clicked);
        cache->splits = std::move(local_splits);
        cache->bias_key = bias_key;
      }
    }
    const InteractionSet& clicked = cache != nullptr ? *cache->clicked : local_clicked;
    const Splits& splits = cache != nullptr ? *cache->splits : local_splits;
    ctx.clicked = &clicked;
    ctx.splits = &splits;
    result.clicked_pairs = clicked.pairs.size();
    result.truth_pairs = full_ground_truth(world).pairs.size();
    ctx.write_artifact("train.itx", to_itx(splits.train));
    ctx.write_artifact("biased_test.itx", to_itx(splits.biased_test));
    ctx.write_artifact("unbiased_test.itx", to_itx(splits.unbiased_test));
    ctx.record_stage("bias", {{"clicked_pairs", clicked.pairs.size()},
                              {"train_pairs", splits.train.pairs.size()},
                              {"biased_test_pairs", splits.biased_test.pairs.size()},
                              {"unbiased_test_pairs", splits.unbiased_test.pairs.size()}});

    // Stage: methods.
    std::vector<EvalReport> reports;
    for (const std::string& method : cfg.methods) {
      current_stage = "method:" + method;
      MethodRun run = run_method(ctx, method);
      if (run.write_train_set) {
        ctx.write_artifact("train_" + method + ".itx", to_itx(run.train_set));
      }
      if (!run.synth.empty()) {
        ctx.write_artifact("synth_" + method + ".jsonl", synth_jsonl(run.synth));
      }
      ctx.write_artifact_binary("model_" + method + ".bin", [&](const std::string& path) {
        save_model(run.model, path);
      });
      TrainConfig tc_out = cfg.train;
      tc_out.seed = cfg.seeds.train_seed();
      tc_out.positive_weighting = run.propensity_source == "none" ? PositiveWeighting::kNone
                                                                  : PositiveWeighting::kIps;
      ctx.write_artifact("model_" + method + ".json",
                         train_sidecar_json(tc_out, run.propensity_source));

      current_stage = "eval:" + method;
      EvalReport report = evaluate_run(run.model, world, splits.biased_test, splits.unbiased_test,
                                       cfg.eval_ks, method, cfg.threads);
      ctx.write_artifact("eval_" + method + ".json", report_to_json(report));
      reports.push_back(report);

      MethodResult mr;
      mr.method = method;
      mr.train_pairs = run.train_set.pairs.size();
      mr.added_pairs = run.train_set.pairs.size() >= splits.train.pairs.size() &&
                               method != "mar"
                           ? run.train_set.pairs.size() - splits.train.pairs.size()
                           : 0;
      mr.gt_covered = run.gt_covered;
      mr.report = std::move(report);
      ctx.record_stage("method:" + method,
                       {{"train_pairs", mr.train_pairs}, {"added_pairs", mr.added_pairs}});
      result.methods.push_back(std::move(mr));
    }

    // Stage: report.
    current_stage = "report";
    ctx.write_artifact("report.csv", compare_runs_csv(reports));
    ctx.write_artifact("report.md", compare_runs_markdown(reports));
    ctx.record_stage("report");

    manifest["status"] = "ok";
    manifest["stages"] = ctx.manifest_stages;
    nlohmann::json files = nlohmann::json::array();
    for (const auto& name : ctx.artifacts) {
      std::string bytes = read_text_file((ctx.dir / name).string());
      files.push_back(nlohmann::json{{"file", name}, {"fnv64", hex64(fnv1a64(bytes))}});
    }
    manifest["artifacts"] = files;
    write_text_file((ctx.dir / "manifest.json").string(), manifest.dump(2) + "\n");
    result.artifacts = ctx.artifacts;
    result.artifacts.push_back("manifest.json");
  } catch (const std::exception& e) {
    fail_manifest(e.what());
    throw;
  }
  return result;
}

PipelineResult run_pipeline_file(const std::string& config_path, const std::string& out_dir) {
  ExperimentConfig cfg = experiment_config_from_json(read_text_file(config_path));
  return run_pipeline(cfg, out_dir);
}

SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "tau") return SweepAxis::kTau;
  if (name == "top_k") return SweepAxis::kTopK;
  if (name == "n") return SweepAxis::kBudgetN;
  if (name == "exposure_B" || name == "exposure_b") return SweepAxis::kExposureB;
  throw ConfigError("sweep: unknown axis '" + name + "' (tau, top_k, n, exposure_B)");
}

std::string sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kTau: return "tau";
    case SweepAxis::kTopK: return "top_k";
    case SweepAxis::kBudgetN: return "n";
    case SweepAxis::kExposureB: return "exposure_B";
  }
  return "tau";
}

SweepResult sweep(const ExperimentConfig& base, SweepAxis axis, std::vector<double> values,
                  const std::string& out_dir) {
  if (values.empty()) throw ArgumentError("sweep: no values");
  if (axis == SweepAxis::kTau) {
    bool has_skim = false;
    for (const auto& m : base.methods) has_skim = has_skim || m.rfind("skim", 0) == 0;
    if (!has_skim) {
      throw ConfigError("sweep: tau axis requires a skim method in the config");
    }
  }
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != values) {
    std::fprintf(stderr, "[skimlab] notice: sweep values were unsorted; sweeping in ascending order\n");
  }

  SweepResult result;
  result.axis = axis;
  fs::create_directories(out_dir);
  StageCache cache;
  std::ostringstream csv;
  csv << "value,method,clicked_pairs,click_fraction,added_pairs";
  for (int k : base.eval_ks) csv << ",unbiased_R@" << k;
  csv << '\n';
  for (double value : sorted) {
    ExperimentConfig cfg = base;
    switch (axis) {
      case SweepAxis::kTau: cfg.mapping.tau = value; break;
      case SweepAxis::kTopK: cfg.bias.top_k = static_cast<int>(value); break;
      case SweepAxis::kBudgetN: cfg.bias.budget_n = static_cast<uint64_t>(value); break;
      case SweepAxis::kExposureB: cfg.bias.exposure_b = value; break;
    }
    std::string label = format_double(value);
    std::string dir = (fs::path(out_dir) / (sweep_axis_name(axis) + "_" + label)).string();
    PipelineResult point = run_pipeline(cfg, dir, &cache);
    for (const auto& mr : point.methods) {
      csv << label << ',' << mr.method << ',' << point.clicked_pairs << ','
          << format_double(point.truth_pairs > 0
                               ? static_cast<double>(point.clicked_pairs) / point.truth_pairs
                               : 0.0)
          << ',' << mr.added_pairs;
      const auto& unbiased = mr.report.split("unbiased");
      for (double r : unbiased.recall) csv << ',' << format_double(r);
      csv << '\n';
    }
    result.points.push_back(SweepPoint{value, dir, std::move(point)});
  }
  result.csv = csv.str();
  write_text_file((fs::path(out_dir) / "sweep.csv").string(), result.csv);
  return result;
}

BoundSweepResult verify_bound_sweep(int n_items, double zipf_alpha, double exposure_b,
                                    const std::vector<long long>& ns, double delta, int trials,
                                    uint64_t seed, SurvivalKind survival) {
  BoundSweepResult out;
  std::ostringstream csv;
  csv << "n,bound,expected_missing_mass,empirical_mean,violation_rate,pass\n";
  nlohmann::json rows = nlohmann::json::array();
  for (long long n : ns) {
    BoundInputs inputs;
    inputs.marginals = zipf_marginals(n_items, zipf_alpha);
    inputs.exposure_b = exposure_b;
    inputs.n_clicks = n;
    inputs.delta = delta;
    BoundReport report = verify_bound(inputs, trials, seed, survival);
    BoundSweepRow row;
    row.n = n;
    row.bound = report.bound;
    row.expected = expected_missing_mass(inputs);
    row.empirical_mean = report.empirical_mean;
    row.violation_rate = report.violation_rate;
    row.pass = report.pass;
    out.rows.push_back(row);
    csv << n << ',' << format_double(row.bound) << ',' << format_double(row.expected) << ','
        << format_double(row.empirical_mean) << ',' << format_double(row.violation_rate) << ','
        << (row.pass ? "true" : "false") << '\n';
    rows.push_back(nlohmann::json{{"n", n},
                                  {"bound", row.bound},
                                  {"expected_missing_mass", row.expected},
                                  {"empirical_mean", row.empirical_mean},
                                  {"violation_rate", row.violation_rate},
                                  {"pass", row.pass}});
  }
  out.csv = csv.str();
  nlohmann::json j{{"n_items", n_items},
                   {"zipf_alpha", zipf_alpha},
                   {"exposure_b", exposure_b},
                   {"delta", delta},
                   {"trials", trials},
                   {"survival", survival == SurvivalKind::kTail ? "tail" : "head"},
                   {"rows", rows}};
  out.json = j.dump(2) + "\n";
  return out;
}

}  // namespace skimlab

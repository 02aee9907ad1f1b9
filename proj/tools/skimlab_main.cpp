// skimlab command line: config-driven pipelines, theorem verification
// sweeps, ablation sweeps and index benchmarks.
//
// Exit codes: 0 success, 2 configuration error, 3 stage failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "skimlab/annindex.hpp"
#include "skimlab/common.hpp"
#include "skimlab/pipeline.hpp"

namespace fs = std::filesystem;
using namespace skimlab;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string out_dir = "runs/out";
  int threads = 0;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string methods_csv;
};

ExperimentConfig load_config(const GlobalOpts& opts) {
  ExperimentConfig cfg = opts.config_path.empty()
                             ? default_experiment_config()
                             : experiment_config_from_json(read_text_file(opts.config_path));
  if (opts.seed_set) cfg.seeds.master = opts.seed;
  if (opts.threads > 0) cfg.threads = opts.threads;
  if (!opts.methods_csv.empty()) {
    cfg.methods.clear();
    std::string token;
    for (char c : opts.methods_csv + ",") {
      if (c == ',') {
        if (!token.empty()) cfg.methods.push_back(token);
        token.clear();
      } else {
        token += c;
      }
    }
  }
  return cfg;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> values;
  std::string token;
  for (char c : csv + ",") {
    if (c == ',') {
      if (!token.empty()) values.push_back(std::stod(token));
      token.clear();
    } else {
      token += c;
    }
  }
  return values;
}

void add_global_opts(CLI::App* cmd, GlobalOpts& opts, bool needs_out = true) {
  cmd->add_option("--config", opts.config_path, "experiment config JSON path");
  if (needs_out) cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--threads", opts.threads, "worker threads (fallback: SKIMLAB_THREADS)");
  cmd->add_option("--seed", opts.seed, "master seed override")->each([&](const std::string&) {
    opts.seed_set = true;
  });
  cmd->add_option("--method", opts.methods_csv, "method list override, comma separated");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skimlab: systematic missing-label laboratory"};
  app.require_subcommand(1);

  GlobalOpts opts;

  auto* cmd_run = app.add_subcommand("run", "run the full pipeline for every configured method");
  add_global_opts(cmd_run, opts);

  auto* cmd_gen = app.add_subcommand("gen", "generate the world and write world.json + exports");
  add_global_opts(cmd_gen, opts);
  bool gen_export = false;
  cmd_gen->add_flag("--export", gen_export, "also write queries.jsonl, documents.jsonl, truth.coo");

  auto* cmd_bias = app.add_subcommand("bias", "simulate clicks and write the train/test splits");
  add_global_opts(cmd_bias, opts);

  auto* cmd_train = app.add_subcommand("train", "train models for the configured methods");
  add_global_opts(cmd_train, opts);

  auto* cmd_skim = app.add_subcommand("skim", "generate synthetic queries and map them");
  add_global_opts(cmd_skim, opts);

  auto* cmd_eval = app.add_subcommand("eval", "train + evaluate and write reports");
  add_global_opts(cmd_eval, opts);

  auto* cmd_report = app.add_subcommand("report", "combine eval_*.json files into one table");
  std::vector<std::string> report_inputs;
  std::string report_out = "report";
  cmd_report->add_option("--inputs", report_inputs, "eval report JSON files")->required();
  cmd_report->add_option("--out", report_out, "output prefix (writes .csv and .md)");

  auto* cmd_verify = app.add_subcommand("verify-bound", "closed form vs Monte Carlo bound check");
  int vb_items = 500;
  double vb_alpha = 1.05, vb_b = 0.5, vb_delta = 0.1;
  int vb_trials = 10000;
  uint64_t vb_seed = 1;
  std::string vb_ns = "50,200,1000,5000";
  std::string vb_survival = "tail";
  std::string vb_out;
  cmd_verify->add_option("--items", vb_items, "knowledge item count K");
  cmd_verify->add_option("--alpha", vb_alpha, "Zipf exponent for the marginals");
  cmd_verify->add_option("--exposure-b", vb_b, "exposure survival probability B");
  cmd_verify->add_option("--delta", vb_delta, "confidence parameter");
  cmd_verify->add_option("--trials", vb_trials, "Monte Carlo trials per point");
  cmd_verify->add_option("--seed", vb_seed, "RNG seed");
  cmd_verify->add_option("--n", vb_ns, "clicked-pair counts, comma separated");
  cmd_verify->add_option("--survival", vb_survival, "tail or head survival function");
  cmd_verify->add_option("--out", vb_out, "output directory (writes bound.json, bound.csv)");

  auto* cmd_ann = app.add_subcommand("ann", "approximate index utilities");
  auto* cmd_ann_bench = cmd_ann->add_subcommand("bench", "recall/latency vs exhaustive scan");
  int ab_n = 10000, ab_dim = 64, ab_m = 16, ab_efc = 200, ab_efs = 100, ab_k = 10, ab_probes = 200;
  uint64_t ab_seed = 1;
  std::string ab_out;
  cmd_ann_bench->add_option("--n", ab_n, "stored vector count");
  cmd_ann_bench->add_option("--dim", ab_dim, "dimension");
  cmd_ann_bench->add_option("--m", ab_m, "graph degree M");
  cmd_ann_bench->add_option("--ef-construction", ab_efc, "construction beam width");
  cmd_ann_bench->add_option("--ef-search", ab_efs, "search beam width");
  cmd_ann_bench->add_option("--k", ab_k, "neighbors per query");
  cmd_ann_bench->add_option("--probes", ab_probes, "probe query count");
  cmd_ann_bench->add_option("--seed", ab_seed, "RNG seed");
  cmd_ann_bench->add_option("--out", ab_out, "CSV output path (default stdout)");

  auto* cmd_sweep = app.add_subcommand("sweep", "one pipeline run per axis value");
  add_global_opts(cmd_sweep, opts);
  std::string sweep_axis_arg = "tau";
  std::string sweep_values_arg;
  cmd_sweep->add_option("--axis", sweep_axis_arg, "tau, top_k, n or exposure_B")->required();
  cmd_sweep->add_option("--values", sweep_values_arg, "comma separated values")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_run->parsed() || cmd_train->parsed() || cmd_eval->parsed() || cmd_skim->parsed()) {
      ExperimentConfig cfg = load_config(opts);
      if (cmd_skim->parsed()) {
        bool has_skim = false;
        for (const auto& m : cfg.methods) has_skim = has_skim || m.rfind("skim", 0) == 0;
        if (!has_skim) cfg.methods = {"skim"};
      }
      PipelineResult result = run_pipeline(cfg, opts.out_dir);
      std::printf("run complete: %s (%zu artifacts)\n", result.run_dir.c_str(),
                  result.artifacts.size());
      for (const auto& mr : result.methods) {
        const auto& unb = mr.report.split("unbiased");
        std::printf("  %-12s train_pairs=%-8zu added=%-8zu unbiased_R@%d=%.4f\n",
                    mr.method.c_str(), mr.train_pairs, mr.added_pairs,
                    mr.report.ks.back(), unb.recall.back());
      }
      return 0;
    }
    if (cmd_gen->parsed()) {
      ExperimentConfig cfg = load_config(opts);
      World world = build_world(cfg.world, cfg.seeds.world_seed());
      fs::create_directories(opts.out_dir);
      save_world(world, (fs::path(opts.out_dir) / "world.json").string());
      if (gen_export) {
        write_text_file((fs::path(opts.out_dir) / "queries.jsonl").string(), queries_jsonl(world));
        write_text_file((fs::path(opts.out_dir) / "documents.jsonl").string(),
                        documents_jsonl(world));
        write_text_file((fs::path(opts.out_dir) / "truth.coo").string(), truth_coo(world));
      }
      std::printf("world written to %s\n", opts.out_dir.c_str());
      return 0;
    }
    if (cmd_bias->parsed()) {
      ExperimentConfig cfg = load_config(opts);
      cfg.methods = {"vanilla"};
      cfg.train.epochs = 0;  // splits only, skip model fitting
      PipelineResult result = run_pipeline(cfg, opts.out_dir);
      std::printf("bias artifacts written to %s (clicked=%zu)\n", result.run_dir.c_str(),
                  result.clicked_pairs);
      return 0;
    }
    if (cmd_report->parsed()) {
      std::vector<EvalReport> reports;
      for (const auto& path : report_inputs) {
        reports.push_back(report_from_json(read_text_file(path)));
      }
      write_text_file(report_out + ".csv", compare_runs_csv(reports));
      write_text_file(report_out + ".md", compare_runs_markdown(reports));
      std::printf("wrote %s.csv and %s.md\n", report_out.c_str(), report_out.c_str());
      return 0;
    }
    if (cmd_verify->parsed()) {
      std::vector<long long> ns;
      for (double v : parse_values(vb_ns)) ns.push_back(static_cast<long long>(v));
      SurvivalKind survival;
      if (vb_survival == "tail") {
        survival = SurvivalKind::kTail;
      } else if (vb_survival == "head") {
        survival = SurvivalKind::kHead;
      } else {
        throw ConfigError("verify-bound: --survival must be tail or head");
      }
      BoundSweepResult result = verify_bound_sweep(vb_items, vb_alpha, vb_b, ns, vb_delta,
                                                   vb_trials, vb_seed, survival);
      if (vb_out.empty()) {
        std::fputs(result.json.c_str(), stdout);
        std::fputs(result.csv.c_str(), stdout);
      } else {
        fs::create_directories(vb_out);
        write_text_file((fs::path(vb_out) / "bound.json").string(), result.json);
        write_text_file((fs::path(vb_out) / "bound.csv").string(), result.csv);
        std::printf("wrote %s/bound.json and bound.csv\n", vb_out.c_str());
      }
      for (const auto& row : result.rows) {
        if (!row.pass) return 3;
      }
      return 0;
    }
    if (cmd_ann_bench->parsed()) {
      IndexConfig cfg;
      cfg.kind = IndexConfig::Kind::kHnsw;
      cfg.m = ab_m;
      cfg.ef_construction = ab_efc;
      cfg.ef_search = ab_efs;
      cfg.seed = ab_seed;
      AnnBenchResult row = ann_bench(ab_n, ab_dim, cfg, ab_probes, ab_k, ab_seed);
      std::string csv = ann_bench_csv({row});
      if (ab_out.empty()) {
        std::fputs(csv.c_str(), stdout);
      } else {
        write_text_file(ab_out, csv);
      }
      return 0;
    }
    if (cmd_sweep->parsed()) {
      ExperimentConfig cfg = load_config(opts);
      SweepResult result = sweep(cfg, sweep_axis_from_name(sweep_axis_arg),
                                 parse_values(sweep_values_arg), opts.out_dir);
      std::printf("sweep complete: %zu points, %s/sweep.csv\n", result.points.size(),
                  opts.out_dir.c_str());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}

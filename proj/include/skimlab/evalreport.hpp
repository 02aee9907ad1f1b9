#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "skimlab/interactions.hpp"
#include "skimlab/world.hpp"
#include "skimlab/xctrain.hpp"

namespace skimlab {

// |top-k ∩ relevant| / |relevant|. Callers filter out queries with empty
// relevance before asking.
double recall_at_k(const std::vector<int>& predicted, const std::unordered_set<int>& relevant,
                   int k);

// |top-k ∩ relevant| / k.
double precision_at_k(const std::vector<int>& predicted, const std::unordered_set<int>& relevant,
                      int k);

struct SplitMetrics {
  std::string split;  // "biased" or "unbiased"
  int n_queries = 0;  // queries with nonempty relevance, averaged over
  std::vector<double> recall;     // aligned with EvalReport::ks
  std::vector<double> precision;  // aligned with EvalReport::ks
};

struct EvalReport {
  std::string method;
  std::vector<int> ks;
  std::vector<SplitMetrics> splits;

  const SplitMetrics& split(const std::string& name) const;
};

EvalReport evaluate_run(const OvaModel& model, const World& world,
                        const InteractionSet& biased_test, const InteractionSet& unbiased_test,
                        const std::vector<int>& ks, const std::string& method_name = "model",
                        int threads = 0);

// Rows are methods, columns are (split, metric@k); the tail rows mark the
// best method per column and the best-minus-second delta in absolute points
// (x100 scale).
std::string compare_runs_csv(const std::vector<EvalReport>& reports);
std::string compare_runs_markdown(const std::vector<EvalReport>& reports);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

}  // namespace skimlab

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "skimlab/encoder.hpp"
#include "skimlab/interactions.hpp"
#include "skimlab/world.hpp"

namespace skimlab {

// exposure_b is the survival probability: the fraction of click mass an
// exposed pair retains. The click probability of a candidate pair is
// exposure_b * sigmoid(s / temperature) with s the deployed cosine01 score
// recentered to [-1, 1].
struct ClickModelConfig {
  double exposure_b = 0.9;
  int top_k = 16;
  double temperature = 0.25;
  std::optional<uint64_t> budget_n;
  uint64_t seed = 0;
};

void validate(const ClickModelConfig& cfg);

// Deployed-model click probability for one pair, before exposure.
double click_sigmoid(double cosine01_score, double temperature);

// Per query: intersect its true relevant documents with the deployed
// model's top-K documents (ties broken by ascending doc id). These are the
// only pairs a user can ever click.
InteractionSet topk_candidates(const World& world, const EncoderSpec& deployed, int top_k,
                               int threads = 0);

// Bernoulli clicks over the candidates, or budgeted sampling when budget_n
// is set. Draws are keyed by (seed, query, doc) so click sets are coupled
// across top_k and exposure settings.
InteractionSet sample_clicks(const InteractionSet& candidates, const World& world,
                             const ClickModelConfig& cfg, const EncoderSpec& deployed);

// Uniform sample without replacement from the full ground truth.
InteractionSet sample_mar(const World& world, uint64_t budget, uint64_t seed);
InteractionSet sample_mar_from(const InteractionSet& pool, uint64_t budget, uint64_t seed);

struct Splits {
  std::vector<int> train_queries;
  std::vector<int> test_queries;
  InteractionSet train;          // clicked pairs of train queries
  InteractionSet biased_test;    // clicked pairs of test queries
  InteractionSet unbiased_test;  // all true pairs of test queries
};

Splits make_splits(const World& world, const InteractionSet& clicked, double test_fraction,
                   uint64_t seed);

// P_{z|x} induced by the click model: per relevant document, the click
// probability normalized over the query's relevant candidates; relevant
// documents truncated away by top-K carry zero mass.
ClickKernel make_deployed_kernel(const World& world, const EncoderSpec& deployed,
                                 const ClickModelConfig& cfg);

}  // namespace skimlab

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "skimlab/biassim.hpp"
#include "skimlab/encoder.hpp"
#include "skimlab/interactions.hpp"
#include "skimlab/world.hpp"

namespace skimlab {

// One-vs-all linear scorer: one weight row and bias per document over fixed
// query embeddings.
struct OvaModel {
  int n_docs = 0;
  int dim = 0;
  std::vector<double> weights;  // n_docs * dim, row-major
  std::vector<double> bias;     // n_docs
  EncoderSpec encoder;          // query featurizer

  double score(const Embedding& query_embedding, int doc) const;
};

struct PropensityVector {
  std::vector<double> values;  // per document, entries in (0, 1]
};

// Exact generative observation probability per relevant pair; zero for pairs
// the deployed model truncates away. Only available in simulation.
using PairPropensityMap = std::unordered_map<uint64_t, double>;

enum class PositiveWeighting { kNone, kIps };

struct TrainConfig {
  int epochs = 12;
  double learning_rate = 0.1;
  double l2 = 0.0;
  int negatives_per_positive = 4;  // 0 selects the full dense loss
  PositiveWeighting positive_weighting = PositiveWeighting::kNone;
  std::optional<PropensityVector> propensities;       // per-document IPS
  std::optional<PairPropensityMap> pair_propensities; // golden per-pair IPS
  int batch_size = 256;
  uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

struct PropensityModelConfig {
  double a = 0.55;
  double b = 1.5;
  double p_min = 0.01;
};

// Frequency-based per-document propensity:
//   p_l = 1 / (1 + C e^{-a ln(N_l + b)}),  C = (ln N - 1)(b + 1)^a
// with N the number of distinct train queries and N_l the document's
// positive count, clipped to [p_min, 1].
PropensityVector estimate_propensities(const InteractionSet& train,
                                       const PropensityModelConfig& cfg = {});

PairPropensityMap golden_propensities(const World& world, const ClickModelConfig& cfg,
                                      const EncoderSpec& deployed);

OvaModel train_ova(const InteractionSet& train, const World& world, const TrainConfig& cfg);

// Weighted BCE over the full dense label matrix plus the L2 term; gradient
// laid out as [weights..., bias...]. Shared by dense-mode training and the
// finite-difference tests.
double full_loss_and_grad(const OvaModel& model, const InteractionSet& train, const World& world,
                          const TrainConfig& cfg, std::vector<double>* grad);

// Per query: document ids sorted by descending score, ties by ascending id,
// truncated to k.
std::vector<std::vector<int>> predict_topk(const OvaModel& model, const std::vector<int>& queries,
                                           const World& world, int k, int threads = 0);

// Binary model file: magic, version, (L, d), float32 weights, float32 bias.
void save_model(const OvaModel& model, const std::string& path);
OvaModel load_model(const std::string& path);

}  // namespace skimlab

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "skimlab/encoder.hpp"
#include "skimlab/interactions.hpp"

namespace skimlab {

struct KnowledgeItem {
  int id = 0;
  double marginal = 0.0;   // nonincreasing in id, sums to 1
  Embedding direction;     // unit vector, pairwise near-orthogonal
  std::string tag;         // metadata token
};

struct Query {
  int id = 0;
  int item = 0;            // the single knowledge item governing relevance
  Embedding surface;       // item direction + Gaussian noise
  double weight = 0.0;     // sampling probability, sums to 1 over all queries
};

struct Document {
  int id = 0;
  std::vector<int> items;          // covered knowledge items, ascending
  std::vector<int> visible_items;  // subset of items encoded in `surface`
  Embedding surface;               // sum of visible directions + noise
  std::vector<std::string> metadata;  // every item tag once, plus distractors
};

enum class QueryWeightMode { kUniform, kZipf };

struct WorldConfig {
  int n_items = 50;        // K
  int n_queries = 20000;   // N
  int n_documents = 2000;  // L
  int dim = 64;            // d
  double zipf_alpha = 1.2;
  double noise_sigma = 0.08;
  int items_per_doc_min = 1;
  int items_per_doc_max = 2;
  double hidden_item_fraction = 0.5;
  int distractor_count = 3;
  double ortho_cap = 0.2;  // max |direction_i . direction_j| for i != j
  QueryWeightMode query_weight_mode = QueryWeightMode::kUniform;
  double query_zipf_alpha = 1.0;  // within-item skew in zipf weight mode
};

struct World {
  WorldConfig config;
  uint64_t seed = 0;
  std::vector<KnowledgeItem> items;
  std::vector<Query> queries;
  std::vector<Document> documents;
  std::vector<uint8_t> item_hidden;  // per item: absent from every surface

  // Inverted indexes, rebuilt on load, not serialized.
  std::vector<std::vector<int>> docs_by_item;
  std::vector<std::vector<int>> queries_by_item;

  int n_items() const { return static_cast<int>(items.size()); }
  int n_queries() const { return static_cast<int>(queries.size()); }
  int n_documents() const { return static_cast<int>(documents.size()); }

  const std::vector<int>& relevant_docs(int query_id) const;
};

void validate(const WorldConfig& cfg);

// Deterministic generative build: identical (config, seed) gives an
// identical world, including every noise draw.
World build_world(const WorldConfig& cfg, uint64_t seed);

bool relevance(const World& world, int query_id, int doc_id);

inline constexpr uint64_t kDefaultTruthCap = 100000000ull;  // N*L guard

InteractionSet full_ground_truth(const World& world, uint64_t cap = kDefaultTruthCap);

// Conditional click distribution over a query's relevant documents.
// Entries are >= 0 and sum to at most 1; empty input gives empty output.
using ClickKernel = std::function<std::vector<double>(
    const World&, int query_id, const std::vector<int>& relevant)>;

// p_m = sum over relevant pairs of P_x * P_{z|x}; defaults to the
// uniform-over-relevant kernel when none is supplied.
std::vector<double> knowledge_marginals(const World& world, const ClickKernel& kernel = nullptr);

// world.json holds config + seed only; reconstruction is generative.
std::string world_to_json(const World& world);
World world_from_json(const std::string& json_text);
void save_world(const World& world, const std::string& path);
World load_world(const std::string& path);

// Optional materialized exports.
std::string queries_jsonl(const World& world);
std::string documents_jsonl(const World& world);
std::string truth_coo(const World& world, uint64_t cap = kDefaultTruthCap);

}  // namespace skimlab

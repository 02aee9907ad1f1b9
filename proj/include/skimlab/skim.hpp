#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "skimlab/annindex.hpp"
#include "skimlab/encoder.hpp"
#include "skimlab/interactions.hpp"
#include "skimlab/world.hpp"

namespace skimlab {

struct SyntheticQuery {
  int document = 0;
  std::vector<std::string> tokens;
  Embedding embedding;               // via the mapping encoder
  std::optional<int> source_item;    // oracle generators only, for audit
};

enum class GeneratorKind { kOracle, kOracleNoMeta, kRemote };

std::string generator_kind_name(GeneratorKind kind);
GeneratorKind generator_kind_from_name(const std::string& name);

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::kOracle;
  int count_per_doc = 4;
  std::string endpoint;   // remote only, e.g. http://127.0.0.1:8080/generate
  double timeout_s = 10.0;
  int retries = 3;
  int backoff_ms = 100;   // doubled per retry
  uint64_t seed = 0;
};

void validate(const GeneratorSpec& spec);

struct MappingConfig {
  double tau = 0.8;       // cosine01 threshold
  int k_neighbors = 10;
  IndexConfig index;
};

void validate(const MappingConfig& cfg);

// Metadata-skimming generator: reads the document's metadata tags (ignoring
// distractor tokens) and emits per covered item queries drawn from that
// item's query distribution, round-robin over items so every item gets one
// before any gets two. kOracleNoMeta sees only visible items and models a
// generator without metadata access.
std::vector<SyntheticQuery> generate_oracle(const World& world, int doc_id,
                                            const GeneratorSpec& spec,
                                            const EncoderSpec& mapping_encoder);

struct RemoteFailure {
  int doc_id = 0;
  std::string reason;
};

struct RemoteGenerationReport {
  std::vector<SyntheticQuery> queries;
  std::vector<RemoteFailure> failures;
};

// HTTP generator client. One POST per document:
//   request  {"doc_id": int, "doc_tokens": [str], "metadata_tokens": [str], "count": int}
//   response {"queries": [[str], ...]}
// Retries with exponential backoff; per-document failures are collected and
// never abort the batch. Every document failing raises GenerationError.
RemoteGenerationReport generate_remote(const World& world, const std::vector<int>& doc_ids,
                                       const GeneratorSpec& spec,
                                       const EncoderSpec& mapping_encoder);

// Token featurizer shared with the remote path: item tags map onto their
// item's direction, unknown tokens onto a hashed direction.
Embedding token_surface(const World& world, const std::vector<std::string>& tokens);

// Per synthetic query, retrieve k_neighbors train queries and keep those
// with cosine01 >= tau as (train query, document) pairs, weight = score,
// provenance skim, deduped keeping the max weight.
InteractionSet map_synthetic(const std::vector<SyntheticQuery>& synth, const AnnIndex& index,
                             const std::vector<int>& train_query_ids, int n_queries, int n_docs,
                             const MappingConfig& cfg);

// Union by (q, d); collisions keep the base pair's weight and provenance.
InteractionSet merge_dataset(const InteractionSet& base, const InteractionSet& extra);

// Generation-quality gauge: per document, how many of its truly relevant
// train queries appear in the union of the top-k neighbors of its synthetic
// queries, averaged over all documents.
double gt_covered_at_k(const std::vector<SyntheticQuery>& synth, const World& world,
                       const AnnIndex& index, const std::vector<int>& train_query_ids, int k);

std::string synth_jsonl(const std::vector<SyntheticQuery>& synth);
std::vector<SyntheticQuery> synth_from_jsonl(const std::string& text);

}  // namespace skimlab

#include "skimlab/debias.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "skimlab/common.hpp"

namespace skimlab {

InteractionSet gandalf_augment(const InteractionSet& train, double threshold) {
  if (!(threshold > 0.0) || threshold > 1.0) {
    throw ArgumentError("gandalf_augment: threshold must be in (0, 1]");
  }
  // Queries per doc and co-click counts via the per-query doc lists.
  std::vector<int> doc_count(train.n_docs, 0);
  std::vector<std::vector<int>> docs_of_query(train.n_queries);
  for (const auto& p : train.pairs) {
    doc_count[p.doc] += 1;
    docs_of_query[p.query].push_back(p.doc);
  }
  std::unordered_map<uint64_t, int> co;
  for (const auto& docs : docs_of_query) {
    for (std::size_t i = 0; i < docs.size(); ++i) {
      for (std::size_t j = 0; j < docs.size(); ++j) {
        if (i == j) continue;
        co[pair_key(docs[i], docs[j])] += 1;
      }
    }
  }
  // Neighbor lists above threshold.
  std::vector<std::vector<std::pair<int, float>>> neighbors(train.n_docs);
  for (const auto& [key, count] : co) {
    int d = static_cast<int>(key >> 32);
    int d2 = static_cast<int>(key & 0xffffffffu);
    double s = count / std::sqrt(static_cast<double>(doc_count[d]) * doc_count[d2]);
    if (s >= threshold) neighbors[d].emplace_back(d2, static_cast<float>(std::min(1.0, s)));
  }

  std::unordered_map<uint64_t, float> imputed;
  for (const auto& p : train.pairs) {
    for (const auto& [d2, s] : neighbors[p.doc]) {
      uint64_t key = pair_key(p.query, d2);
      auto [it, inserted] = imputed.emplace(key, s);
      if (!inserted) it->second = std::max(it->second, s);
    }
  }

  InteractionSet out = train;
  for (const auto& [key, weight] : imputed) {
    int q = static_cast<int>(key >> 32);
    int d = static_cast<int>(key & 0xffffffffu);
    if (!train.contains(q, d)) {
      out.pairs.push_back(Interaction{q, d, weight, Provenance::kImputed});
    }
  }
  out.sort_canonical();
  return out;
}

InteractionSet lever_augment(const InteractionSet& train, const OvaModel& teacher,
                             const World& world, int top_m, double min_score) {
  if (top_m < 1) throw ArgumentError("lever_augment: top_m must be >= 1");
  if (!(min_score > 0.0) || min_score > 1.0) {
    throw ArgumentError("lever_augment: min_score must be in (0, 1]");
  }
  std::vector<int> train_queries;
  {
    std::vector<uint8_t> seen(train.n_queries, 0);
    for (const auto& p : train.pairs) seen[p.query] = 1;
    for (int q = 0; q < train.n_queries; ++q) {
      if (seen[q]) train_queries.push_back(q);
    }
  }
  auto ranked = predict_topk(teacher, train_queries, world, top_m);

  InteractionSet out = train;
  for (std::size_t qi = 0; qi < train_queries.size(); ++qi) {
    const int q = train_queries[qi];
    Embedding e = embed(teacher.encoder, world.queries[q].surface);
    for (int d : ranked[qi]) {
      double score = 1.0 / (1.0 + std::exp(-teacher.score(e, d)));
      if (score < min_score) continue;
      if (train.contains(q, d)) continue;
      out.pairs.push_back(
          Interaction{q, d, static_cast<float>(std::min(1.0, score)), Provenance::kImputed});
    }
  }
  out.sort_canonical();
  return out;
}

OvaModel compose_lever_ips(const InteractionSet& train, const OvaModel& teacher,
                           const World& world, const TrainConfig& cfg, int top_m,
                           double min_score) {
  if (cfg.positive_weighting != PositiveWeighting::kIps) {
    throw ArgumentError("compose_lever_ips: cfg.positive_weighting must be ips");
  }
  TrainConfig run = cfg;
  if (!run.propensities.has_value() && !run.pair_propensities.has_value()) {
    run.propensities = estimate_propensities(train);
  }
  InteractionSet augmented = lever_augment(train, teacher, world, top_m, min_score);
  return train_ova(augmented, world, run);
}

}  // namespace skimlab

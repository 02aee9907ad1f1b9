#include "skimlab/biassim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <unordered_map>

#include "skimlab/common.hpp"
#include "skimlab/rng.hpp"

namespace skimlab {

namespace {

constexpr uint64_t kStreamMar = 11;
constexpr uint64_t kStreamSplit = 12;
constexpr uint64_t kStreamBudget = 13;

std::vector<Embedding> deployed_doc_embeddings(const World& world, const EncoderSpec& deployed) {
  std::vector<Embedding> out(world.n_documents());
  parallel_for(0, out.size(), [&](std::size_t d) {
    out[d] = embed(deployed, world.documents[d].surface);
  });
  return out;
}

}  // namespace

void validate(const ClickModelConfig& cfg) {
  if (!(cfg.exposure_b > 0.0) || cfg.exposure_b > 1.0) {
    throw ConfigError("click model: exposure_b must be in (0, 1]");
  }
  if (cfg.top_k < 0) throw ConfigError("click model: top_k must be >= 0");
  if (!(cfg.temperature > 0.0)) throw ConfigError("click model: temperature must be > 0");
}

double click_sigmoid(double cosine01_score, double temperature) {
  double s = 2.0 * cosine01_score - 1.0;
  return 1.0 / (1.0 + std::exp(-s / temperature));
}

InteractionSet topk_candidates(const World& world, const EncoderSpec& deployed, int top_k,
                               int threads) {
  if (top_k < 0) throw ArgumentError("topk_candidates: top_k must be >= 0");
  InteractionSet out;
  out.n_queries = world.n_queries();
  out.n_docs = world.n_documents();
  if (top_k == 0) return out;

  const std::vector<Embedding> doc_emb = deployed_doc_embeddings(world, deployed);
  const int n_docs = world.n_documents();
  const int k = std::min(top_k, n_docs);

  std::vector<std::vector<int>> kept(world.n_queries());
  parallel_for(
      0, static_cast<std::size_t>(world.n_queries()),
      [&](std::size_t qi) {
        const Query& q = world.queries[qi];
        Embedding qe = embed(deployed, q.surface);
        std::vector<std::pair<double, int>> scored(n_docs);
        for (int d = 0; d < n_docs; ++d) {
          scored[d] = {dot(qe, doc_emb[d]), d};
        }
        // Descending score, ascending id on ties.
        std::nth_element(scored.begin(), scored.begin() + (k - 1), scored.end(),
                         [](const auto& a, const auto& b) {
                           return a.first != b.first ? a.first > b.first : a.second < b.second;
                         });
        std::vector<int> shortlist;
        shortlist.reserve(k);
        for (int i = 0; i < k; ++i) shortlist.push_back(scored[i].second);
        std::sort(shortlist.begin(), shortlist.end());
        const auto& rel = world.docs_by_item[q.item];
        std::vector<int>& hits = kept[qi];
        for (int d : rel) {
          if (std::binary_search(shortlist.begin(), shortlist.end(), d)) hits.push_back(d);
        }
      },
      threads);

  for (int qid = 0; qid < world.n_queries(); ++qid) {
    for (int d : kept[qid]) out.pairs.push_back(Interaction{qid, d, 1.0f, Provenance::kTruth});
  }
  return out;
}

InteractionSet sample_clicks(const InteractionSet& candidates, const World& world,
                             const ClickModelConfig& cfg, const EncoderSpec& deployed) {
  validate(cfg);
  InteractionSet out;
  out.n_queries = candidates.n_queries;
  out.n_docs = candidates.n_docs;

  const std::vector<Embedding> doc_emb = deployed_doc_embeddings(world, deployed);
  std::vector<double> click_prob(candidates.pairs.size());
  {
    Embedding qe;
    int last_q = -1;
    for (std::size_t i = 0; i < candidates.pairs.size(); ++i) {
      const auto& p = candidates.pairs[i];
      if (p.query != last_q) {
        qe = embed(deployed, world.queries[p.query].surface);
        last_q = p.query;
      }
      double s01 = 0.5 * (dot(qe, doc_emb[p.doc]) + 1.0);
      click_prob[i] = cfg.exposure_b * click_sigmoid(s01, cfg.temperature);
    }
  }

  if (cfg.budget_n.has_value()) {
    uint64_t budget = *cfg.budget_n;
    if (budget >= candidates.pairs.size()) {
      if (budget > candidates.pairs.size()) {
        std::fprintf(stderr,
                     "[skimlab] warning: click budget %llu exceeds %zu candidates; "
                     "falling back to exposure sampling\n",
                     static_cast<unsigned long long>(budget), candidates.pairs.size());
        for (std::size_t i = 0; i < candidates.pairs.size(); ++i) {
          const auto& p = candidates.pairs[i];
          double u = keyed_uniform(cfg.seed, static_cast<uint64_t>(p.query),
                                   static_cast<uint64_t>(p.doc));
          if (u < click_prob[i]) {
            out.pairs.push_back(Interaction{p.query, p.doc, 1.0f, Provenance::kClicked});
          }
        }
        return out;
      }
      for (const auto& p : candidates.pairs) {
        out.pairs.push_back(Interaction{p.query, p.doc, 1.0f, Provenance::kClicked});
      }
      return out;
    }
    // Weighted sampling without replacement (exponential keys): keep the
    // budget_n pairs with the largest u^(1/w), w = P_x * P_{z|x} * B.
    std::vector<std::pair<double, std::size_t>> keys(candidates.pairs.size());
    for (std::size_t i = 0; i < candidates.pairs.size(); ++i) {
      const auto& p = candidates.pairs[i];
      double w = world.queries[p.query].weight * click_prob[i];
      double u = keyed_uniform(cfg.seed ^ kStreamBudget, static_cast<uint64_t>(p.query),
                               static_cast<uint64_t>(p.doc));
      double key = w > 0.0 ? std::log(std::max(u, 1e-300)) / w : -1e300;
      keys[i] = {key, i};
    }
    std::nth_element(keys.begin(), keys.begin() + (budget - 1), keys.end(),
                     [](const auto& a, const auto& b) {
                       return a.first != b.first ? a.first > b.first : a.second < b.second;
                     });
    std::vector<std::size_t> chosen;
    chosen.reserve(budget);
    for (uint64_t i = 0; i < budget; ++i) chosen.push_back(keys[i].second);
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t i : chosen) {
      const auto& p = candidates.pairs[i];
      out.pairs.push_back(Interaction{p.query, p.doc, 1.0f, Provenance::kClicked});
    }
    return out;
  }

  for (std::size_t i = 0; i < candidates.pairs.size(); ++i) {
    const auto& p = candidates.pairs[i];
    double u =
        keyed_uniform(cfg.seed, static_cast<uint64_t>(p.query), static_cast<uint64_t>(p.doc));
    if (u < click_prob[i]) {
      out.pairs.push_back(Interaction{p.query, p.doc, 1.0f, Provenance::kClicked});
    }
  }
  return out;
}

InteractionSet sample_mar_from(const InteractionSet& pool, uint64_t budget, uint64_t seed) {
  if (budget > pool.pairs.size()) {
    throw ArgumentError("sample_mar: budget " + std::to_string(budget) + " exceeds pool size " +
                        std::to_string(pool.pairs.size()));
  }
  InteractionSet out;
  out.n_queries = pool.n_queries;
  out.n_docs = pool.n_docs;
  // Partial Fisher-Yates over pair indices.
  std::vector<std::size_t> idx(pool.pairs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng = derive_rng(seed, {kStreamMar});
  for (uint64_t i = 0; i < budget; ++i) {
    std::size_t j = i + rng.below(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(budget);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i : idx) {
    const auto& p = pool.pairs[i];
    out.pairs.push_back(Interaction{p.query, p.doc, 1.0f, Provenance::kMar});
  }
  return out;
}

InteractionSet sample_mar(const World& world, uint64_t budget, uint64_t seed) {
  return sample_mar_from(full_ground_truth(world), budget, seed);
}

Splits make_splits(const World& world, const InteractionSet& clicked, double test_fraction,
                   uint64_t seed) {
  if (!(test_fraction > 0.0) || !(test_fraction < 1.0)) {
    throw ArgumentError("make_splits: test_fraction must be in (0, 1)");
  }
  const int n = world.n_queries();
  int n_test = static_cast<int>(std::llround(test_fraction * n));
  if (n_test < 1 || n_test >= n) {
    throw ArgumentError("make_splits: too few queries for test_fraction " +
                        format_double(test_fraction));
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng = derive_rng(seed, {kStreamSplit});
  for (int i = n - 1; i > 0; --i) {
    std::swap(order[i], order[rng.below_int(i + 1)]);
  }
  Splits sp;
  sp.test_queries.assign(order.begin(), order.begin() + n_test);
  sp.train_queries.assign(order.begin() + n_test, order.end());
  std::sort(sp.test_queries.begin(), sp.test_queries.end());
  std::sort(sp.train_queries.begin(), sp.train_queries.end());

  std::vector<uint8_t> is_test(n, 0);
  for (int q : sp.test_queries) is_test[q] = 1;

  sp.train.n_queries = sp.biased_test.n_queries = sp.unbiased_test.n_queries = n;
  sp.train.n_docs = sp.biased_test.n_docs = sp.unbiased_test.n_docs = world.n_documents();
  for (const auto& p : clicked.pairs) {
    (is_test[p.query] ? sp.biased_test : sp.train).pairs.push_back(p);
  }
  for (int q : sp.test_queries) {
    for (int d : world.docs_by_item[world.queries[q].item]) {
      sp.unbiased_test.pairs.push_back(Interaction{q, d, 1.0f, Provenance::kTruth});
    }
  }
  return sp;
}

ClickKernel make_deployed_kernel(const World& world, const EncoderSpec& deployed,
                                 const ClickModelConfig& cfg) {
  validate(cfg);
  // Precompute P_{z|x} for every candidate pair: sigmoid click mass
  // normalized over the query's surviving candidates.
  InteractionSet cands = topk_candidates(world, deployed, cfg.top_k);
  const std::vector<Embedding> doc_emb = deployed_doc_embeddings(world, deployed);
  auto table = std::make_shared<std::unordered_map<uint64_t, double>>();
  std::size_t i = 0;
  while (i < cands.pairs.size()) {
    std::size_t j = i;
    const int qid = cands.pairs[i].query;
    Embedding qe = embed(deployed, world.queries[qid].surface);
    double total = 0.0;
    std::vector<double> sig;
    while (j < cands.pairs.size() && cands.pairs[j].query == qid) {
      double s01 = 0.5 * (dot(qe, doc_emb[cands.pairs[j].doc]) + 1.0);
      sig.push_back(click_sigmoid(s01, cfg.temperature));
      total += sig.back();
      ++j;
    }
    for (std::size_t t = i; t < j; ++t) {
      uint64_t key = (static_cast<uint64_t>(cands.pairs[t].query) << 32) |
                     static_cast<uint64_t>(static_cast<uint32_t>(cands.pairs[t].doc));
      (*table)[key] = total > 0.0 ? sig[t - i] / total : 0.0;
    }
    i = j;
  }
  const uint64_t world_seed = world.seed;
  return [table, world_seed](const World& w, int query_id,
                             const std::vector<int>& relevant) -> std::vector<double> {
    if (w.seed != world_seed) {
      throw ArgumentError("deployed click kernel used with a different world");
    }
    std::vector<double> probs(relevant.size(), 0.0);
    for (std::size_t r = 0; r < relevant.size(); ++r) {
      uint64_t key = (static_cast<uint64_t>(query_id) << 32) |
                     static_cast<uint64_t>(static_cast<uint32_t>(relevant[r]));
      auto it = table->find(key);
      if (it != table->end()) probs[r] = it->second;
    }
    return probs;
  };
}

}  // namespace skimlab

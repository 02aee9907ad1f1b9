#include "skimlab/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "skimlab/common.hpp"
#include "skimlab/rng.hpp"

namespace skimlab {

namespace {

// Stream namespaces for derive_rng; changing these re-rolls every world.
constexpr uint64_t kStreamDirections = 1;
constexpr uint64_t kStreamTags = 2;
constexpr uint64_t kStreamQuery = 3;
constexpr uint64_t kStreamDoc = 4;

const char* const kConsonants = "bdfgklmnprstvz";
const char* const kVowels = "aeiou";

std::string pseudo_word(Rng& rng) {
  int syllables = 2 + rng.below_int(2);
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w += kConsonants[rng.below_int(14)];
    w += kVowels[rng.below_int(5)];
  }
  return w;
}

// Largest-remainder allocation of `total` slots proportional to `p`.
// With ties broken by ascending index the counts stay nonincreasing
// whenever `p` is nonincreasing.
std::vector<int> quota_counts(const std::vector<double>& p, int total) {
  const int k = static_cast<int>(p.size());
  std::vector<int> counts(k, 0);
  std::vector<std::pair<double, int>> remainders;
  remainders.reserve(k);
  int assigned = 0;
  for (int m = 0; m < k; ++m) {
    double quota = p[m] * total;
    counts[m] = static_cast<int>(std::floor(quota));
    assigned += counts[m];
    remainders.emplace_back(quota - counts[m], m);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (int i = 0; i < total - assigned; ++i) counts[remainders[i].second] += 1;
  return counts;
}

Embedding random_unit(Rng& rng, int dim) {
  Embedding v(dim);
  for (auto& x : v) x = rng.normal();
  normalize_in_place(v);
  return v;
}

std::vector<Embedding> near_orthogonal_directions(Rng& rng, int count, int dim, double cap) {
  std::vector<Embedding> dirs;
  dirs.reserve(count);
  const long long max_tries = 200000ll * count;
  long long tries = 0;
  while (static_cast<int>(dirs.size()) < count) {
    if (++tries > max_tries) {
      throw ConfigError("ortho_cap: cannot place " + std::to_string(count) +
                        " directions in dim " + std::to_string(dim) + " under cap " +
                        format_double(cap) + "; raise ortho_cap or dim");
    }
    Embedding v = random_unit(rng, dim);
    bool ok = true;
    for (const auto& u : dirs) {
      if (std::fabs(dot(u, v)) > cap) {
        ok = false;
        break;
      }
    }
    if (ok) dirs.push_back(std::move(v));
  }
  return dirs;
}

// Evenly spread hidden flags over item ranks so hidden knowledge spans head
// and tail rather than clustering at one end.
std::vector<uint8_t> spread_hidden(int n_items, double fraction) {
  int count = static_cast<int>(std::llround(fraction * n_items));
  std::vector<uint8_t> hidden(n_items, 0);
  if (count <= 0) return hidden;
  long long acc = 0;
  for (int m = 0; m < n_items; ++m) {
    long long next = static_cast<long long>(m + 1) * count / n_items;
    if (next > acc) hidden[m] = 1;
    acc = next;
  }
  return hidden;
}

}  // namespace

void validate(const WorldConfig& cfg) {
  auto require = [](bool ok, const char* field, const char* why) {
    if (!ok) throw ConfigError(std::string("world config: ") + field + " " + why);
  };
  require(cfg.n_items >= 1, "n_items", "must be >= 1");
  require(cfg.n_queries >= 1, "n_queries", "must be >= 1");
  require(cfg.n_documents >= 1, "n_documents", "must be >= 1");
  require(cfg.dim >= 1, "dim", "must be >= 1");
  require(cfg.zipf_alpha > 0.0, "zipf_alpha", "must be > 0");
  require(cfg.noise_sigma >= 0.0, "noise_sigma", "must be >= 0");
  require(cfg.items_per_doc_min >= 1, "items_per_doc_min", "must be >= 1");
  require(cfg.items_per_doc_max >= cfg.items_per_doc_min, "items_per_doc_max",
          "must be >= items_per_doc_min");
  require(cfg.items_per_doc_max <= cfg.n_items, "items_per_doc_max", "must be <= n_items");
  require(cfg.hidden_item_fraction >= 0.0 && cfg.hidden_item_fraction <= 1.0,
          "hidden_item_fraction", "must be in [0, 1]");
  require(cfg.distractor_count >= 0, "distractor_count", "must be >= 0");
  require(cfg.ortho_cap > 0.0 && cfg.ortho_cap <= 1.0, "ortho_cap", "must be in (0, 1]");
  require(cfg.query_zipf_alpha > 0.0, "query_zipf_alpha", "must be > 0");
}

const std::vector<int>& World::relevant_docs(int query_id) const {
  if (query_id < 0 || query_id >= n_queries()) {
    throw IndexError("query id " + std::to_string(query_id) + " out of range");
  }
  return docs_by_item[queries[query_id].item];
}

World build_world(const WorldConfig& cfg, uint64_t seed) {
  validate(cfg);
  World world;
  world.config = cfg;
  world.seed = seed;

  const int k = cfg.n_items;
  std::vector<double> marginals = zipf_marginals(k, cfg.zipf_alpha);

  Rng dir_rng = derive_rng(seed, {kStreamDirections});
  std::vector<Embedding> directions =
      near_orthogonal_directions(dir_rng, k, cfg.dim, cfg.ortho_cap);

  Rng tag_rng = derive_rng(seed, {kStreamTags});
  std::vector<std::string> tags;
  tags.reserve(k);
  {
    std::vector<std::string> used;
    for (int m = 0; m < k; ++m) {
      std::string w;
      do {
        w = pseudo_word(tag_rng);
      } while (std::find(used.begin(), used.end(), w) != used.end());
      used.push_back(w);
      tags.push_back(w);
    }
  }

  world.items.resize(k);
  for (int m = 0; m < k; ++m) {
    world.items[m] = KnowledgeItem{m, marginals[m], directions[m], tags[m]};
  }
  world.item_hidden = spread_hidden(k, cfg.hidden_item_fraction);

  // Distractor vocabulary, disjoint from item tags.
  std::vector<std::string> distractors;
  {
    int vocab = std::max(16, 4 * std::max(1, cfg.distractor_count));
    Rng rng = derive_rng(seed, {kStreamTags, 1});
    while (static_cast<int>(distractors.size()) < vocab) {
      std::string w = pseudo_word(rng);
      if (std::find(tags.begin(), tags.end(), w) != tags.end()) continue;
      if (std::find(distractors.begin(), distractors.end(), w) != distractors.end()) continue;
      distractors.push_back(w);
    }
  }

  // Queries: per-item counts by quota, contiguous blocks in item order.
  std::vector<int> counts = quota_counts(marginals, cfg.n_queries);
  world.queries.resize(cfg.n_queries);
  {
    int qid = 0;
    for (int m = 0; m < k; ++m) {
      const int block = counts[m];
      std::vector<double> block_weights(block, 0.0);
      if (block > 0) {
        if (cfg.query_weight_mode == QueryWeightMode::kUniform) {
          for (auto& w : block_weights) w = 1.0 / cfg.n_queries;
        } else {
          // Popularity skew inside an item block; block mass stays count/N so
          // realized item marginals match the uniform mode.
          std::vector<double> z = zipf_marginals(block, cfg.query_zipf_alpha);
          double mass = static_cast<double>(block) / cfg.n_queries;
          for (int j = 0; j < block; ++j) block_weights[j] = z[j] * mass;
        }
      }
      for (int j = 0; j < block; ++j, ++qid) {
        Query& q = world.queries[qid];
        q.id = qid;
        q.item = m;
        q.weight = block_weights[j];
        Rng rng = derive_rng(seed, {kStreamQuery, static_cast<uint64_t>(qid)});
        // Per-query noise scale in [0.3, 2.0] of noise_sigma: queries vary in
        // specificity, which grades the query-query similarity spectrum.
        double scale = (0.3 + 1.7 * rng.uniform()) * cfg.noise_sigma;
        q.surface = directions[m];
        for (auto& x : q.surface) x += scale * rng.normal();
      }
    }
  }

  // Documents: item sets sampled from the marginal distribution.
  std::vector<double> cdf(k);
  std::partial_sum(marginals.begin(), marginals.end(), cdf.begin());
  cdf.back() = 1.0;
  world.documents.resize(cfg.n_documents);
  for (int d = 0; d < cfg.n_documents; ++d) {
    Document& doc = world.documents[d];
    doc.id = d;
    Rng rng = derive_rng(seed, {kStreamDoc, static_cast<uint64_t>(d)});
    int want = cfg.items_per_doc_min + rng.below_int(cfg.items_per_doc_max - cfg.items_per_doc_min + 1);
    while (static_cast<int>(doc.items.size()) < want) {
      double u = rng.uniform();
      int m = static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      if (m >= k) m = k - 1;
      if (std::find(doc.items.begin(), doc.items.end(), m) == doc.items.end()) {
        doc.items.push_back(m);
      }
    }
    std::sort(doc.items.begin(), doc.items.end());
    for (int m : doc.items) {
      if (!world.item_hidden[m]) doc.visible_items.push_back(m);
    }
    doc.surface.assign(cfg.dim, 0.0);
    for (int m : doc.visible_items) {
      for (int i = 0; i < cfg.dim; ++i) doc.surface[i] += directions[m][i];
    }
    for (auto& x : doc.surface) x += cfg.noise_sigma * rng.normal();

    doc.metadata.clear();
    for (int m : doc.items) doc.metadata.push_back(tags[m]);
    if (!distractors.empty()) {
      for (int j = 0; j < cfg.distractor_count; ++j) {
        doc.metadata.push_back(distractors[rng.below_int(static_cast<int>(distractors.size()))]);
      }
    }
    // Fisher-Yates interleave of tags and distractors.
    for (int j = static_cast<int>(doc.metadata.size()) - 1; j > 0; --j) {
      std::swap(doc.metadata[j], doc.metadata[rng.below_int(j + 1)]);
    }
  }

  world.docs_by_item.assign(k, {});
  for (const auto& doc : world.documents) {
    for (int m : doc.items) world.docs_by_item[m].push_back(doc.id);
  }
  world.queries_by_item.assign(k, {});
  for (const auto& q : world.queries) world.queries_by_item[q.item].push_back(q.id);
  return world;
}

bool relevance(const World& world, int query_id, int doc_id) {
  if (query_id < 0 || query_id >= world.n_queries()) {
    throw IndexError("relevance: query id " + std::to_string(query_id) + " out of range");
  }
  if (doc_id < 0 || doc_id >= world.n_documents()) {
    throw IndexError("relevance: doc id " + std::to_string(doc_id) + " out of range");
  }
  const auto& items = world.documents[doc_id].items;
  return std::binary_search(items.begin(), items.end(), world.queries[query_id].item);
}

InteractionSet full_ground_truth(const World& world, uint64_t cap) {
  uint64_t cells = static_cast<uint64_t>(world.n_queries()) * static_cast<uint64_t>(world.n_documents());
  if (cells > cap) {
    throw ResourceError("full_ground_truth: N*L = " + std::to_string(cells) +
                        " exceeds cap " + std::to_string(cap) +
                        "; export relevance in query chunks instead");
  }
  InteractionSet out;
  out.n_queries = world.n_queries();
  out.n_docs = world.n_documents();
  for (const auto& q : world.queries) {
    for (int d : world.docs_by_item[q.item]) {
      out.pairs.push_back(Interaction{q.id, d, 1.0f, Provenance::kTruth});
    }
  }
  return out;
}

std::vector<double> knowledge_marginals(const World& world, const ClickKernel& kernel) {
  std::vector<double> mass(world.n_items(), 0.0);
  for (const auto& q : world.queries) {
    const auto& rel = world.docs_by_item[q.item];
    if (rel.empty()) continue;
    if (!kernel) {
      mass[q.item] += q.weight;  // uniform kernel sums to 1 over relevant docs
    } else {
      std::vector<double> probs = kernel(world, q.id, rel);
      if (probs.size() != rel.size()) {
        throw ArgumentError("click kernel returned wrong-size distribution");
      }
      double s = 0.0;
      for (double p : probs) s += p;
      mass[q.item] += q.weight * s;
    }
  }
  return mass;
}

namespace {

nlohmann::json config_to_json(const WorldConfig& cfg) {
  return nlohmann::json{
      {"n_items", cfg.n_items},
      {"n_queries", cfg.n_queries},
      {"n_documents", cfg.n_documents},
      {"dim", cfg.dim},
      {"zipf_alpha", cfg.zipf_alpha},
      {"noise_sigma", cfg.noise_sigma},
      {"items_per_doc_min", cfg.items_per_doc_min},
      {"items_per_doc_max", cfg.items_per_doc_max},
      {"hidden_item_fraction", cfg.hidden_item_fraction},
      {"distractor_count", cfg.distractor_count},
      {"ortho_cap", cfg.ortho_cap},
      {"query_weight_mode", cfg.query_weight_mode == QueryWeightMode::kUniform ? "uniform" : "zipf"},
      {"query_zipf_alpha", cfg.query_zipf_alpha},
  };
}

WorldConfig config_from_json(const nlohmann::json& j) {
  WorldConfig cfg;
  cfg.n_items = j.at("n_items").get<int>();
  cfg.n_queries = j.at("n_queries").get<int>();
  cfg.n_documents = j.at("n_documents").get<int>();
  cfg.dim = j.at("dim").get<int>();
  cfg.zipf_alpha = j.at("zipf_alpha").get<double>();
  cfg.noise_sigma = j.at("noise_sigma").get<double>();
  cfg.items_per_doc_min = j.at("items_per_doc_min").get<int>();
  cfg.items_per_doc_max = j.at("items_per_doc_max").get<int>();
  cfg.hidden_item_fraction = j.at("hidden_item_fraction").get<double>();
  cfg.distractor_count = j.at("distractor_count").get<int>();
  cfg.ortho_cap = j.at("ortho_cap").get<double>();
  std::string mode = j.value("query_weight_mode", "uniform");
  if (mode == "uniform") {
    cfg.query_weight_mode = QueryWeightMode::kUniform;
  } else if (mode == "zipf") {
    cfg.query_weight_mode = QueryWeightMode::kZipf;
  } else {
    throw ConfigError("world config: query_weight_mode must be uniform or zipf");
  }
  cfg.query_zipf_alpha = j.value("query_zipf_alpha", 1.0);
  return cfg;
}

}  // namespace

std::string world_to_json(const World& world) {
  nlohmann::json j{
      {"format", "skimlab.world"},
      {"version", 1},
      {"seed", world.seed},
      {"config", config_to_json(world.config)},
  };
  return j.dump(2) + "\n";
}

World world_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  if (j.value("format", "") != "skimlab.world") {
    throw ArgumentError("world json: unexpected format tag");
  }
  WorldConfig cfg = config_from_json(j.at("config"));
  return build_world(cfg, j.at("seed").get<uint64_t>());
}

void save_world(const World& world, const std::string& path) {
  write_text_file(path, world_to_json(world));
}

World load_world(const std::string& path) { return world_from_json(read_text_file(path)); }

std::string queries_jsonl(const World& world) {
  std::ostringstream out;
  for (const auto& q : world.queries) {
    nlohmann::json j{{"id", q.id}, {"item", q.item}, {"weight", q.weight}, {"surface", q.surface}};
    out << j.dump() << '\n';
  }
  return out.str();
}

std::string documents_jsonl(const World& world) {
  std::ostringstream out;
  for (const auto& d : world.documents) {
    nlohmann::json j{{"id", d.id},
                     {"items", d.items},
                     {"visible_items", d.visible_items},
                     {"surface", d.surface},
                     {"metadata", d.metadata}};
    out << j.dump() << '\n';
  }
  return out.str();
}

std::string truth_coo(const World& world, uint64_t cap) {
  InteractionSet truth = full_ground_truth(world, cap);
  std::ostringstream out;
  for (const auto& p : truth.pairs) out << p.query << ' ' << p.doc << '\n';
  return out.str();
}

}  // namespace skimlab

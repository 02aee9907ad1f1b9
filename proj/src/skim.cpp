#include "skimlab/skim.hpp"

#include <algorithm>
#include <chrono>
#include <thread>
#include <unordered_map>

#include "httplib.h"
#include "json.hpp"
#include "skimlab/common.hpp"
#include "skimlab/rng.hpp"

namespace skimlab {

namespace {

constexpr uint64_t kStreamGenerate = 51;

std::unordered_map<std::string, int> tag_to_item(const World& world) {
  std::unordered_map<std::string, int> map;
  map.reserve(world.items.size());
  for (const auto& item : world.items) map.emplace(item.tag, item.id);
  return map;
}

}  // namespace

std::string generator_kind_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::kOracle: return "oracle";
    case GeneratorKind::kOracleNoMeta: return "oracle_nometa";
    case GeneratorKind::kRemote: return "remote";
  }
  return "oracle";
}

GeneratorKind generator_kind_from_name(const std::string& name) {
  if (name == "oracle") return GeneratorKind::kOracle;
  if (name == "oracle_nometa") return GeneratorKind::kOracleNoMeta;
  if (name == "remote") return GeneratorKind::kRemote;
  throw ConfigError("generator: unknown kind '" + name + "'");
}

void validate(const GeneratorSpec& spec) {
  if (spec.count_per_doc < 1) throw ConfigError("generator: count_per_doc must be >= 1");
  if (spec.kind == GeneratorKind::kRemote && spec.endpoint.empty()) {
    throw ConfigError("generator: remote kind requires an endpoint");
  }
  if (spec.retries < 0) throw ConfigError("generator: retries must be >= 0");
  if (!(spec.timeout_s > 0.0)) throw ConfigError("generator: timeout_s must be > 0");
}

void validate(const MappingConfig& cfg) {
  if (cfg.tau < 0.0 || cfg.tau > 1.0) throw ConfigError("mapping: tau must be in [0, 1]");
  if (cfg.k_neighbors < 1) throw ConfigError("mapping: k_neighbors must be >= 1");
  validate(cfg.index);
}

std::vector<SyntheticQuery> generate_oracle(const World& world, int doc_id,
                                            const GeneratorSpec& spec,
                                            const EncoderSpec& mapping_encoder) {
  validate(spec);
  if (spec.kind == GeneratorKind::kRemote) {
    throw ArgumentError("generate_oracle: spec.kind is remote");
  }
  if (doc_id < 0 || doc_id >= world.n_documents()) {
    throw IndexError("generate_oracle: doc id out of range");
  }
  const Document& doc = world.documents[doc_id];
  if (spec.kind == GeneratorKind::kOracle && doc.metadata.empty()) {
    throw GenerationError("generate_oracle: document " + std::to_string(doc_id) +
                          " has no metadata");
  }
  // The items this generator can see. With metadata that is every covered
  // item (tags resolve through the tag map, distractors do not); without it
  // only the surface-visible ones.
  std::vector<int> source_items;
  if (spec.kind == GeneratorKind::kOracle) {
    auto tags = tag_to_item(world);
    for (const auto& token : doc.metadata) {
      auto it = tags.find(token);
      if (it != tags.end()) source_items.push_back(it->second);
    }
    std::sort(source_items.begin(), source_items.end());
    source_items.erase(std::unique(source_items.begin(), source_items.end()),
                       source_items.end());
  } else {
    source_items = doc.visible_items;
  }
  std::vector<SyntheticQuery> out;
  if (source_items.empty()) return out;

  Rng rng = derive_rng(spec.seed, {kStreamGenerate, static_cast<uint64_t>(doc_id)});
  out.reserve(spec.count_per_doc);
  for (int j = 0; j < spec.count_per_doc; ++j) {
    int item = source_items[j % source_items.size()];
    SyntheticQuery q;
    q.document = doc_id;
    q.source_item = item;
    q.tokens = {world.items[item].tag, "q" + std::to_string(j)};
    // Same noise law as real queries so synthetic ones land in-distribution.
    double scale = (0.3 + 1.7 * rng.uniform()) * world.config.noise_sigma;
    Embedding surface = world.items[item].direction;
    for (auto& x : surface) x += scale * rng.normal();
    q.embedding = embed(mapping_encoder, surface);
    out.push_back(std::move(q));
  }
  return out;
}

Embedding token_surface(const World& world, const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw ArgumentError("token_surface: empty token list");
  auto tags = tag_to_item(world);
  Embedding sum(world.config.dim, 0.0);
  for (const auto& token : tokens) {
    auto it = tags.find(token);
    if (it != tags.end()) {
      const Embedding& dir = world.items[it->second].direction;
      for (int i = 0; i < world.config.dim; ++i) sum[i] += dir[i];
    } else {
      Rng rng(mix64(fnv1a64(token) ^ world.seed));
      Embedding noise(world.config.dim);
      for (auto& x : noise) x = rng.normal();
      normalize_in_place(noise);
      // Unknown tokens contribute weak directions so tag content dominates.
      for (int i = 0; i < world.config.dim; ++i) sum[i] += 0.25 * noise[i];
    }
  }
  return sum;
}

RemoteGenerationReport generate_remote(const World& world, const std::vector<int>& doc_ids,
                                       const GeneratorSpec& spec,
                                       const EncoderSpec& mapping_encoder) {
  validate(spec);
  if (spec.kind != GeneratorKind::kRemote) {
    throw ArgumentError("generate_remote: spec.kind must be remote");
  }
  // Split http://host:port/path into origin + path.
  std::string origin = spec.endpoint, path = "/";
  {
    std::size_t scheme = spec.endpoint.find("://");
    if (scheme == std::string::npos) {
      throw ConfigError("generator: endpoint must start with http://");
    }
    std::size_t slash = spec.endpoint.find('/', scheme + 3);
    if (slash != std::string::npos) {
      origin = spec.endpoint.substr(0, slash);
      path = spec.endpoint.substr(slash);
    }
  }
  httplib::Client client(origin);
  client.set_connection_timeout(static_cast<int>(spec.timeout_s),
                                static_cast<int>(spec.timeout_s * 1e6) % 1000000);
  client.set_read_timeout(static_cast<int>(spec.timeout_s),
                          static_cast<int>(spec.timeout_s * 1e6) % 1000000);

  RemoteGenerationReport report;
  for (int doc_id : doc_ids) {
    if (doc_id < 0 || doc_id >= world.n_documents()) {
      throw IndexError("generate_remote: doc id out of range");
    }
    const Document& doc = world.documents[doc_id];
    std::vector<std::string> doc_tokens;
    for (int m : doc.visible_items) doc_tokens.push_back(world.items[m].tag);
    nlohmann::json request{{"doc_id", doc_id},
                           {"doc_tokens", doc_tokens},
                           {"metadata_tokens", doc.metadata},
                           {"count", spec.count_per_doc}};
    const std::string body = request.dump();

    std::string failure;
    bool done = false;
    for (int attempt = 0; attempt <= spec.retries && !done; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(
            std::chrono::milliseconds(static_cast<long long>(spec.backoff_ms) << (attempt - 1)));
      }
      auto res = client.Post(path, body, "application/json");
      if (!res) {
        failure = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        failure = "http status " + std::to_string(res->status);
        continue;
      }
      nlohmann::json parsed;
      try {
        parsed = nlohmann::json::parse(res->body);
      } catch (const std::exception& e) {
        failure = std::string("malformed response: ") + e.what();
        continue;
      }
      if (!parsed.contains("queries") || !parsed["queries"].is_array()) {
        failure = "response missing 'queries' array";
        continue;
      }
      std::vector<SyntheticQuery> batch;
      bool ok = true;
      for (const auto& token_list : parsed["queries"]) {
        if (!token_list.is_array() || token_list.empty()) {
          ok = false;
          failure = "response contains an empty or non-array query";
          break;
        }
        SyntheticQuery q;
        q.document = doc_id;
        for (const auto& t : token_list) q.tokens.push_back(t.get<std::string>());
        q.embedding = embed(mapping_encoder, token_surface(world, q.tokens));
        batch.push_back(std::move(q));
      }
      if (!ok) continue;
      if (batch.empty()) {
        failure = "endpoint returned zero queries";
        done = true;  // an explicit empty answer is final, not retryable
        break;
      }
      for (auto& q : batch) report.queries.push_back(std::move(q));
      failure.clear();
      done = true;
    }
    if (!failure.empty()) report.failures.push_back(RemoteFailure{doc_id, failure});
  }
  if (!doc_ids.empty() && report.failures.size() == doc_ids.size()) {
    throw GenerationError("generate_remote: all " + std::to_string(doc_ids.size()) +
                          " documents failed; first: " + report.failures.front().reason);
  }
  return report;
}

InteractionSet map_synthetic(const std::vector<SyntheticQuery>& synth, const AnnIndex& index,
                             const std::vector<int>& train_query_ids, int n_queries, int n_docs,
                             const MappingConfig& cfg) {
  validate(cfg);
  if (index.size() == 0) throw ArgumentError("map_synthetic: empty index");
  if (index.size() != static_cast<int>(train_query_ids.size())) {
    throw ArgumentError("map_synthetic: index size does not match train query id list");
  }
  std::unordered_map<uint64_t, float> best;
  for (const auto& sq : synth) {
    auto hits = index.query(sq.embedding, cfg.k_neighbors);
    for (const auto& [row, score] : hits) {
      if (score < cfg.tau) continue;
      uint64_t key = pair_key(train_query_ids[row], sq.document);
      auto [it, inserted] = best.emplace(key, static_cast<float>(score));
      if (!inserted) it->second = std::max(it->second, static_cast<float>(score));
    }
  }
  InteractionSet out;
  out.n_queries = n_queries;
  out.n_docs = n_docs;
  out.pairs.reserve(best.size());
  for (const auto& [key, weight] : best) {
    out.pairs.push_back(Interaction{static_cast<int>(key >> 32),
                                    static_cast<int>(key & 0xffffffffu),
                                    std::min(1.0f, weight), Provenance::kSkim});
  }
  out.sort_canonical();
  return out;
}

InteractionSet merge_dataset(const InteractionSet& base, const InteractionSet& extra) {
  if (base.n_queries != extra.n_queries || base.n_docs != extra.n_docs) {
    throw ArgumentError("merge_dataset: dimension mismatch");
  }
  InteractionSet out = base;
  for (const auto& p : extra.pairs) {
    if (!base.contains(p.query, p.doc)) out.pairs.push_back(p);
  }
  out.sort_canonical();
  return out;
}

double gt_covered_at_k(const std::vector<SyntheticQuery>& synth, const World& world,
                       const AnnIndex& index, const std::vector<int>& train_query_ids, int k) {
  if (k < 1) throw ArgumentError("gt_covered_at_k: k must be >= 1");
  if (index.size() != static_cast<int>(train_query_ids.size())) {
    throw ArgumentError("gt_covered_at_k: index size does not match train query id list");
  }
  std::vector<std::vector<int>> retrieved(world.n_documents());
  for (const auto& sq : synth) {
    auto hits = index.query(sq.embedding, k);
    for (const auto& [row, score] : hits) retrieved[sq.document].push_back(train_query_ids[row]);
  }
  std::vector<double> per_doc(world.n_documents(), 0.0);
  for (int d = 0; d < world.n_documents(); ++d) {
    auto& got = retrieved[d];
    if (got.empty()) continue;
    std::sort(got.begin(), got.end());
    got.erase(std::unique(got.begin(), got.end()), got.end());
    const auto& items = world.documents[d].items;
    int covered = 0;
    for (int q : got) {
      if (std::binary_search(items.begin(), items.end(), world.queries[q].item)) ++covered;
    }
    per_doc[d] = covered;
  }
  return kahan_mean(per_doc);
}

std::string synth_jsonl(const std::vector<SyntheticQuery>& synth) {
  std::string out;
  for (const auto& q : synth) {
    nlohmann::json j{{"document", q.document}, {"tokens", q.tokens}, {"embedding", q.embedding}};
    if (q.source_item.has_value()) j["source_item"] = *q.source_item;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<SyntheticQuery> synth_from_jsonl(const std::string& text) {
  std::vector<SyntheticQuery> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    if (end > start) {
      nlohmann::json j = nlohmann::json::parse(text.substr(start, end - start));
      SyntheticQuery q;
      q.document = j.at("document").get<int>();
      q.tokens = j.at("tokens").get<std::vector<std::string>>();
      q.embedding = j.at("embedding").get<Embedding>();
      if (j.contains("source_item")) q.source_item = j["source_item"].get<int>();
      out.push_back(std::move(q));
    }
    start = end + 1;
  }
  return out;
}

}  // namespace skimlab

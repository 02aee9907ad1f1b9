#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <set>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "skimlab/common.hpp"
#include "skimlab/rng.hpp"
#include "skimlab/skim.hpp"
#include "skimlab/world.hpp"

using namespace skimlab;

namespace {

WorldConfig small_config() {
  WorldConfig cfg;
  cfg.n_items = 3;
  cfg.n_queries = 30;
  cfg.n_documents = 10;
  cfg.dim = 16;
  cfg.items_per_doc_min = 1;
  cfg.items_per_doc_max = 3;
  cfg.noise_sigma = 0.05;
  cfg.ortho_cap = 0.5;
  cfg.hidden_item_fraction = 0.34;  // hides exactly one of three items
  cfg.distractor_count = 2;
  return cfg;
}

const EncoderSpec kMapper{};

std::multiset<int> source_items(const std::vector<SyntheticQuery>& synth) {
  std::multiset<int> out;
  for (const auto& q : synth) {
    REQUIRE(q.source_item.has_value());
    out.insert(*q.source_item);
  }
  return out;
}

}  // namespace

TEST_CASE("oracle generator covers items round-robin") {
  World world = build_world(small_config(), 3);
  // find a doc covering all three items if present, else any multi-item doc
  int doc3 = -1, doc1 = -1;
  for (const auto& d : world.documents) {
    if (d.items.size() == 3 && doc3 < 0) doc3 = d.id;
    if (d.items.size() == 1 && doc1 < 0) doc1 = d.id;
  }
  GeneratorSpec spec;
  spec.kind = GeneratorKind::kOracle;
  spec.seed = 5;

  if (doc1 >= 0) {
    spec.count_per_doc = 3;
    auto synth = generate_oracle(world, doc1, spec, kMapper);
    REQUIRE(synth.size() == 3);
    int item = world.documents[doc1].items[0];
    for (const auto& q : synth) {
      CHECK(q.source_item == item);
      CHECK(!q.tokens.empty());
      CHECK(q.tokens[0] == world.items[item].tag);
      CHECK(q.embedding.size() == static_cast<std::size_t>(world.config.dim));
    }
  }
  if (doc3 >= 0) {
    spec.count_per_doc = 3;
    auto synth = generate_oracle(world, doc3, spec, kMapper);
    std::multiset<int> expect(world.documents[doc3].items.begin(),
                              world.documents[doc3].items.end());
    CHECK(source_items(synth) == expect);
  }
}

TEST_CASE("nometa generator only sees visible items") {
  World world = build_world(small_config(), 7);
  int hidden_item = -1;
  for (int m = 0; m < world.n_items(); ++m) {
    if (world.item_hidden[m]) hidden_item = m;
  }
  REQUIRE(hidden_item >= 0);
  GeneratorSpec spec;
  spec.kind = GeneratorKind::kOracleNoMeta;
  spec.count_per_doc = 4;
  spec.seed = 8;
  for (const auto& d : world.documents) {
    auto synth = generate_oracle(world, d.id, spec, kMapper);
    if (d.visible_items.empty()) {
      CHECK(synth.empty());
      continue;
    }
    for (const auto& q : synth) {
      CHECK(*q.source_item != hidden_item);
      CHECK(std::find(d.visible_items.begin(), d.visible_items.end(), *q.source_item) !=
            d.visible_items.end());
    }
  }
}

TEST_CASE("oracle generation is deterministic per seed and doc") {
  World world = build_world(small_config(), 9);
  GeneratorSpec spec;
  spec.count_per_doc = 3;
  spec.seed = 21;
  auto a = generate_oracle(world, 0, spec, kMapper);
  auto b = generate_oracle(world, 0, spec, kMapper);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].embedding == b[i].embedding);
  }
  spec.seed = 22;
  auto c = generate_oracle(world, 0, spec, kMapper);
  CHECK(a[0].embedding != c[0].embedding);
  CHECK_THROWS_AS(generate_oracle(world, 99, spec, kMapper), IndexError);
}

TEST_CASE("empty metadata raises a generation error") {
  World world = build_world(small_config(), 10);
  world.documents[0].metadata.clear();
  GeneratorSpec spec;
  CHECK_THROWS_AS(generate_oracle(world, 0, spec, kMapper), GenerationError);
}

TEST_CASE("token surfaces align tags with item directions") {
  World world = build_world(small_config(), 11);
  for (const auto& item : world.items) {
    Embedding vec = token_surface(world, {item.tag});
    CHECK(cosine01(vec, item.direction) == doctest::Approx(1.0).epsilon(1e-9));
  }
  Embedding noise1 = token_surface(world, {"zzunknownzz"});
  Embedding noise2 = token_surface(world, {"zzunknownzz"});
  CHECK(noise1 == noise2);  // deterministic hashing
  CHECK_THROWS_AS(token_surface(world, {}), ArgumentError);
}

TEST_CASE("map_synthetic filters by tau and dedupes by max weight") {
  World world = build_world(small_config(), 12);
  std::vector<int> train_queries;
  for (int q = 0; q < world.n_queries(); ++q) train_queries.push_back(q);
  std::vector<Embedding> emb;
  for (int q : train_queries) emb.push_back(embed(kMapper, world.queries[q].surface));
  AnnIndex index = AnnIndex::build(emb, IndexConfig{});

  GeneratorSpec gen;
  gen.count_per_doc = 4;
  gen.seed = 3;
  std::vector<SyntheticQuery> synth;
  for (const auto& d : world.documents) {
    auto qs = generate_oracle(world, d.id, gen, kMapper);
    synth.insert(synth.end(), qs.begin(), qs.end());
  }

  MappingConfig cfg;
  cfg.k_neighbors = 5;
  cfg.tau = 1.1;  // cannot be reached
  CHECK_THROWS_AS(map_synthetic(synth, index, train_queries, world.n_queries(),
                                world.n_documents(), cfg),
                  ConfigError);
  cfg.tau = 0.8;
  InteractionSet mapped = map_synthetic(synth, index, train_queries, world.n_queries(),
                                        world.n_documents(), cfg);
  validate(mapped);
  for (const auto& p : mapped.pairs) CHECK(p.provenance == Provenance::kSkim);

  // exhaustive oracle at the same threshold
  std::map<std::pair<int, int>, double> expect;
  for (const auto& sq : synth) {
    std::vector<std::pair<double, int>> scored;
    for (std::size_t i = 0; i < emb.size(); ++i) scored.push_back({cosine01(sq.embedding, emb[i]), static_cast<int>(i)});
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (int i = 0; i < cfg.k_neighbors; ++i) {
      if (scored[i].first < cfg.tau) continue;
      auto key = std::make_pair(train_queries[scored[i].second], sq.document);
      auto it = expect.find(key);
      if (it == expect.end()) {
        expect[key] = scored[i].first;
      } else {
        it->second = std::max(it->second, scored[i].first);
      }
    }
  }
  REQUIRE(mapped.size() == expect.size());
  for (const auto& p : mapped.pairs) {
    auto it = expect.find({p.query, p.doc});
    REQUIRE(it != expect.end());
    CHECK(p.weight == doctest::Approx(it->second).epsilon(1e-6));
  }

  // tau zero: every synthetic query contributes its k neighbors (pre-dedupe)
  cfg.tau = 0.0;
  InteractionSet all = map_synthetic({synth[0]}, index, train_queries, world.n_queries(),
                                     world.n_documents(), cfg);
  CHECK(all.size() == static_cast<std::size_t>(cfg.k_neighbors));
}

TEST_CASE("pair counts are antitone in tau and monotone in k_neighbors") {
  World world = build_world(small_config(), 13);
  std::vector<int> train_queries;
  for (int q = 0; q < world.n_queries(); ++q) train_queries.push_back(q);
  std::vector<Embedding> emb;
  for (int q : train_queries) emb.push_back(embed(kMapper, world.queries[q].surface));
  AnnIndex index = AnnIndex::build(emb, IndexConfig{});
  GeneratorSpec gen;
  gen.count_per_doc = 3;
  gen.seed = 4;
  std::vector<SyntheticQuery> synth;
  for (const auto& d : world.documents) {
    auto qs = generate_oracle(world, d.id, gen, kMapper);
    synth.insert(synth.end(), qs.begin(), qs.end());
  }
  MappingConfig cfg;
  cfg.k_neighbors = 6;
  std::size_t prev = SIZE_MAX;
  for (double tau : {0.5, 0.7, 0.9}) {
    cfg.tau = tau;
    std::size_t count = map_synthetic(synth, index, train_queries, world.n_queries(),
                                      world.n_documents(), cfg).size();
    CHECK(count <= prev);
    prev = count;
  }
  cfg.tau = 0.6;
  prev = 0;
  for (int k : {2, 5, 10}) {
    cfg.k_neighbors = k;
    std::size_t count = map_synthetic(synth, index, train_queries, world.n_queries(),
                                      world.n_documents(), cfg).size();
    CHECK(count >= prev);
    prev = count;
  }
}

TEST_CASE("merge keeps base pairs on collision and is idempotent") {
  InteractionSet base;
  base.n_queries = 4;
  base.n_docs = 4;
  base.pairs = {{0, 0, 1.0f, Provenance::kClicked}, {1, 2, 1.0f, Provenance::kClicked}};
  InteractionSet extra;
  extra.n_queries = 4;
  extra.n_docs = 4;
  extra.pairs = {{0, 0, 0.7f, Provenance::kSkim}, {2, 3, 0.9f, Provenance::kSkim}};

  InteractionSet merged = merge_dataset(base, extra);
  CHECK(merged.size() == 3);
  for (const auto& p : merged.pairs) {
    if (p.query == 0 && p.doc == 0) {
      CHECK(p.weight == 1.0f);
      CHECK(p.provenance == Provenance::kClicked);
    }
  }
  InteractionSet again = merge_dataset(merged, extra);
  CHECK(again.same_pairs(merged));
  CHECK(merge_dataset(base, InteractionSet{4, 4, {}}).same_pairs(base));

  InteractionSet disjoint;
  disjoint.n_queries = 4;
  disjoint.n_docs = 4;
  disjoint.pairs = {{3, 1, 0.5f, Provenance::kSkim}};
  CHECK(merge_dataset(base, disjoint).size() == base.size() + 1);

  InteractionSet wrong;
  wrong.n_queries = 5;
  wrong.n_docs = 4;
  CHECK_THROWS_AS(merge_dataset(base, wrong), ArgumentError);
}

TEST_CASE("gt_covered_at_k: perfect synthetic queries recover the per-doc relevant count") {
  World world = build_world(small_config(), 14);
  std::vector<int> train_queries;
  for (int q = 0; q < world.n_queries(); ++q) train_queries.push_back(q);
  std::vector<Embedding> emb;
  for (int q : train_queries) emb.push_back(embed(kMapper, world.queries[q].surface));
  AnnIndex index = AnnIndex::build(emb, IndexConfig{});

  // synthetic queries identical to every true relevant train query
  std::vector<SyntheticQuery> synth;
  double total_relevant = 0.0;
  for (const auto& d : world.documents) {
    int relevant = 0;
    for (int q : train_queries) {
      if (relevance(world, q, d.id)) {
        SyntheticQuery sq;
        sq.document = d.id;
        sq.tokens = {"copy"};
        sq.embedding = emb[q];
        synth.push_back(sq);
        ++relevant;
      }
    }
    total_relevant += relevant;
  }
  double covered = gt_covered_at_k(synth, world, index, train_queries, 1);
  CHECK(covered == doctest::Approx(total_relevant / world.n_documents()).epsilon(1e-9));
  // monotone in k
  double k3 = gt_covered_at_k(synth, world, index, train_queries, 3);
  CHECK(k3 >= covered - 1e-12);
  CHECK_THROWS_AS(gt_covered_at_k(synth, world, index, train_queries, 0), ArgumentError);
}

TEST_CASE("synth jsonl round-trips") {
  World world = build_world(small_config(), 15);
  GeneratorSpec gen;
  gen.count_per_doc = 2;
  gen.seed = 6;
  std::vector<SyntheticQuery> synth;
  for (const auto& d : world.documents) {
    auto qs = generate_oracle(world, d.id, gen, kMapper);
    synth.insert(synth.end(), qs.begin(), qs.end());
  }
  auto text = synth_jsonl(synth);
  auto back = synth_from_jsonl(text);
  REQUIRE(back.size() == synth.size());
  for (std::size_t i = 0; i < synth.size(); ++i) {
    CHECK(back[i].document == synth[i].document);
    CHECK(back[i].tokens == synth[i].tokens);
    CHECK(back[i].source_item == synth[i].source_item);
  }
}

TEST_CASE("remote generator against a live mock endpoint") {
  World world = build_world(small_config(), 16);

  httplib::Server server;
  std::atomic<int> request_count{0};
  server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    request_count.fetch_add(1);
    auto body = nlohmann::json::parse(req.body);
    REQUIRE(body.contains("doc_id"));
    REQUIRE(body.contains("doc_tokens"));
    REQUIRE(body.contains("metadata_tokens"));
    REQUIRE(body.contains("count"));
    int doc_id = body["doc_id"].get<int>();
    nlohmann::json queries = nlohmann::json::array();
    if (doc_id == 1) {
      // deliberate empty answer: the document must be flagged, not retried
      res.set_content(nlohmann::json{{"queries", queries}}.dump(), "application/json");
      return;
    }
    for (const auto& token : body["metadata_tokens"]) {
      queries.push_back(nlohmann::json::array({token}));
    }
    res.set_content(nlohmann::json{{"queries", queries}}.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  GeneratorSpec spec;
  spec.kind = GeneratorKind::kRemote;
  spec.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/generate";
  spec.count_per_doc = 3;
  spec.retries = 1;
  spec.backoff_ms = 1;

  std::vector<int> docs = {0, 1, 2};
  auto report = generate_remote(world, docs, spec, kMapper);
  REQUIRE(report.failures.size() == 1);
  CHECK(report.failures[0].doc_id == 1);

  // echoing metadata tokens reproduces oracle-style item coverage
  for (int doc_id : {0, 2}) {
    std::set<std::string> echoed_tags;
    for (const auto& sq : report.queries) {
      if (sq.document != doc_id) continue;
      REQUIRE(sq.tokens.size() == 1);
      for (const auto& item : world.items) {
        if (sq.tokens[0] == item.tag) echoed_tags.insert(item.tag);
      }
    }
    std::set<std::string> expect;
    for (int m : world.documents[doc_id].items) expect.insert(world.items[m].tag);
    CHECK(echoed_tags == expect);
  }

  server.stop();
  server_thread.join();
}

TEST_CASE("remote generator retries flaky endpoints and survives partial failure") {
  World world = build_world(small_config(), 17);

  httplib::Server server;
  std::atomic<int> calls{0};
  server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    int doc_id = body["doc_id"].get<int>();
    int attempt_index = calls.fetch_add(1);
    // deterministic 10 percent failure pattern, independent across attempts
    if ((mix64(static_cast<uint64_t>(doc_id) * 1315423911u + attempt_index) % 10) == 0) {
      res.status = 500;
      return;
    }
    nlohmann::json queries = nlohmann::json::array();
    queries.push_back(nlohmann::json::array({body["metadata_tokens"][0]}));
    res.set_content(nlohmann::json{{"queries", queries}}.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  GeneratorSpec spec;
  spec.kind = GeneratorKind::kRemote;
  spec.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/generate";
  spec.count_per_doc = 1;
  spec.retries = 3;
  spec.backoff_ms = 1;

  std::vector<int> docs;
  for (int i = 0; i < 100; ++i) docs.push_back(i % world.n_documents());
  auto report = generate_remote(world, docs, spec, kMapper);
  // independent 10 percent failures with 3 retries: ~99.99 percent success
  CHECK(report.failures.size() <= 5);
  CHECK(report.queries.size() >= 95);

  server.stop();
  server_thread.join();
}

TEST_CASE("remote generator errors when everything fails") {
  World world = build_world(small_config(), 18);
  GeneratorSpec spec;
  spec.kind = GeneratorKind::kRemote;
  spec.endpoint = "http://127.0.0.1:1/generate";  // nothing listens here
  spec.retries = 0;
  spec.timeout_s = 0.2;
  spec.backoff_ms = 1;
  CHECK_THROWS_AS(generate_remote(world, {0, 1}, spec, kMapper), GenerationError);
}

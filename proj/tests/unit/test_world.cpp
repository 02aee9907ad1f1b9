#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "skimlab/common.hpp"
#include "skimlab/world.hpp"

using namespace skimlab;

namespace {

WorldConfig tiny_config(int k, int n, int l) {
  WorldConfig cfg;
  cfg.n_items = k;
  cfg.n_queries = n;
  cfg.n_documents = l;
  cfg.dim = 16;
  cfg.items_per_doc_min = 1;
  cfg.items_per_doc_max = std::min(2, k);
  cfg.distractor_count = 2;
  cfg.ortho_cap = 0.6;
  return cfg;
}

}  // namespace

TEST_CASE("single item world has the single relevant pair") {
  WorldConfig cfg = tiny_config(1, 1, 1);
  cfg.items_per_doc_max = 1;
  World world = build_world(cfg, 5);
  CHECK(relevance(world, 0, 0));
  InteractionSet truth = full_ground_truth(world);
  CHECK(truth.size() == 1);
  CHECK(knowledge_marginals(world)[0] == doctest::Approx(1.0));
}

TEST_CASE("reconstruction from config and seed is byte identical") {
  WorldConfig cfg = tiny_config(4, 50, 20);
  World a = build_world(cfg, 7);
  World b = build_world(cfg, 7);
  CHECK(world_to_json(a) == world_to_json(b));
  CHECK(queries_jsonl(a) == queries_jsonl(b));
  CHECK(documents_jsonl(a) == documents_jsonl(b));
  CHECK(truth_coo(a) == truth_coo(b));
  World c = world_from_json(world_to_json(a));
  CHECK(queries_jsonl(c) == queries_jsonl(a));
  CHECK(documents_jsonl(c) == documents_jsonl(a));
}

TEST_CASE("different seeds give different worlds") {
  WorldConfig cfg = tiny_config(4, 50, 20);
  World a = build_world(cfg, 7);
  World b = build_world(cfg, 8);
  CHECK(queries_jsonl(a) != queries_jsonl(b));
}

TEST_CASE("config validation names the offending field") {
  WorldConfig cfg = tiny_config(3, 10, 5);
  cfg.zipf_alpha = -1.0;
  try {
    build_world(cfg, 1);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("zipf_alpha") != std::string::npos);
  }
  cfg = tiny_config(3, 10, 5);
  cfg.items_per_doc_max = 9;  // > n_items
  CHECK_THROWS_AS(build_world(cfg, 1), ConfigError);
  cfg = tiny_config(3, 10, 5);
  cfg.hidden_item_fraction = 1.5;
  CHECK_THROWS_AS(build_world(cfg, 1), ConfigError);
}

TEST_CASE("relevance is membership and range checked") {
  World world = build_world(tiny_config(3, 10, 5), 3);
  for (int q = 0; q < world.n_queries(); ++q) {
    for (int d = 0; d < world.n_documents(); ++d) {
      const auto& items = world.documents[d].items;
      bool expected =
          std::find(items.begin(), items.end(), world.queries[q].item) != items.end();
      CHECK(relevance(world, q, d) == expected);
    }
  }
  CHECK_THROWS_AS(relevance(world, -1, 0), IndexError);
  CHECK_THROWS_AS(relevance(world, 0, 99), IndexError);
}

TEST_CASE("full ground truth equals an independent enumeration") {
  World world = build_world(tiny_config(3, 20, 8), 11);
  InteractionSet truth = full_ground_truth(world);
  validate(truth);
  // independent oracle: double loop over raw item sets
  std::set<std::pair<int, int>> oracle;
  for (const auto& q : world.queries) {
    for (const auto& d : world.documents) {
      if (std::find(d.items.begin(), d.items.end(), q.item) != d.items.end()) {
        oracle.emplace(q.id, d.id);
      }
    }
  }
  CHECK(truth.size() == oracle.size());
  for (const auto& p : truth.pairs) {
    CHECK(oracle.count({p.query, p.doc}) == 1);
  }
}

TEST_CASE("truth cap raises a resource error") {
  World world = build_world(tiny_config(2, 30, 30), 1);
  CHECK_THROWS_AS(full_ground_truth(world, 100), ResourceError);
}

TEST_CASE("marginals follow query weights") {
  // Hand-built world: two items, query mass split 70/30, one doc per item.
  World world;
  world.config = tiny_config(2, 2, 2);
  world.config.dim = 2;
  world.seed = 0;
  world.items = {KnowledgeItem{0, 0.7, {1.0, 0.0}, "a"}, KnowledgeItem{1, 0.3, {0.0, 1.0}, "b"}};
  world.queries = {Query{0, 0, {1.0, 0.0}, 0.7}, Query{1, 1, {0.0, 1.0}, 0.3}};
  Document d0{0, {0}, {0}, {1.0, 0.0}, {"a"}};
  Document d1{1, {1}, {1}, {0.0, 1.0}, {"b"}};
  world.documents = {d0, d1};
  world.item_hidden = {0, 0};
  world.docs_by_item = {{0}, {1}};
  world.queries_by_item = {{0}, {1}};
  auto marginals = knowledge_marginals(world);
  CHECK(marginals[0] == doctest::Approx(0.7));
  CHECK(marginals[1] == doctest::Approx(0.3));
}

TEST_CASE("marginals match a brute-force double loop under the uniform kernel") {
  World world = build_world(tiny_config(4, 40, 15), 9);
  auto marginals = knowledge_marginals(world);
  std::vector<double> oracle(world.n_items(), 0.0);
  for (const auto& q : world.queries) {
    int relevant = 0;
    for (const auto& d : world.documents) {
      if (std::find(d.items.begin(), d.items.end(), q.item) != d.items.end()) ++relevant;
    }
    if (relevant == 0) continue;
    // uniform kernel: P_{z|x} = 1/relevant per relevant doc, summing to 1
    oracle[q.item] += q.weight;
  }
  for (int m = 0; m < world.n_items(); ++m) {
    CHECK(marginals[m] == doctest::Approx(oracle[m]).epsilon(1e-12));
  }
}

TEST_CASE("marginal vector sums to one when every query has a relevant doc") {
  World world = build_world(tiny_config(3, 50, 40), 2);
  bool all_covered = true;
  for (const auto& q : world.queries) all_covered &= !world.docs_by_item[q.item].empty();
  REQUIRE(all_covered);
  auto marginals = knowledge_marginals(world);
  CHECK(std::fabs(kahan_sum(marginals) - 1.0) < 1e-9);
  // nonincreasing when read in item order (items sorted by marginal)
  int violations = 0;
  for (int m = 1; m < world.n_items(); ++m) {
    if (marginals[m] > marginals[m - 1] + 1e-12) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("query weights sum to one and item directions are near orthogonal") {
  WorldConfig cfg = tiny_config(6, 200, 30);
  cfg.dim = 32;
  cfg.ortho_cap = 0.35;
  World world = build_world(cfg, 17);
  double total = 0.0;
  for (const auto& q : world.queries) total += q.weight;
  CHECK(std::fabs(total - 1.0) < 1e-9);
  for (const auto& item : world.items) {
    CHECK(l2_norm(item.direction) == doctest::Approx(1.0).epsilon(1e-9));
  }
  for (int i = 0; i < world.n_items(); ++i) {
    for (int j = i + 1; j < world.n_items(); ++j) {
      CHECK(std::fabs(dot(world.items[i].direction, world.items[j].direction)) <= cfg.ortho_cap + 1e-12);
    }
  }
}

TEST_CASE("hidden fraction controls surface-visible items") {
  WorldConfig cfg = tiny_config(10, 30, 30);
  cfg.hidden_item_fraction = 0.5;
  World world = build_world(cfg, 23);
  int hidden = 0;
  for (auto h : world.item_hidden) hidden += h;
  CHECK(hidden == 5);
  for (const auto& d : world.documents) {
    for (int m : d.visible_items) CHECK_FALSE(world.item_hidden[m]);
    // every item tag appears in metadata exactly once
    for (int m : d.items) {
      int count = 0;
      for (const auto& tok : d.metadata) count += tok == world.items[m].tag ? 1 : 0;
      CHECK(count == 1);
    }
    CHECK(d.metadata.size() == d.items.size() + static_cast<std::size_t>(cfg.distractor_count));
  }
}

TEST_CASE("relevance depends only on item structure, not surfaces or metadata") {
  World world = build_world(tiny_config(3, 15, 8), 31);
  World scrambled = world;
  for (auto& q : scrambled.queries) {
    for (auto& x : q.surface) x = -x * 3.0 + 1.0;
  }
  for (auto& d : scrambled.documents) {
    for (auto& x : d.surface) x = x * 0.1 - 2.0;
    std::reverse(d.metadata.begin(), d.metadata.end());
  }
  for (int q = 0; q < world.n_queries(); ++q) {
    for (int d = 0; d < world.n_documents(); ++d) {
      CHECK(relevance(world, q, d) == relevance(scrambled, q, d));
    }
  }
}

TEST_CASE("long tail: bottom half of items holds at most 35 percent of mass") {
  for (double alpha : {1.0, 1.2}) {
    auto p = zipf_marginals(100, alpha);
    double bottom = 0.0;
    for (int m = 50; m < 100; ++m) bottom += p[m];
    CHECK(bottom <= 0.35);
  }
}

TEST_CASE("zipf query weight mode preserves item masses") {
  WorldConfig cfg = tiny_config(4, 100, 20);
  World uniform_world = build_world(cfg, 3);
  cfg.query_weight_mode = QueryWeightMode::kZipf;
  cfg.query_zipf_alpha = 1.3;
  World zipf_world = build_world(cfg, 3);
  double total = 0.0;
  for (const auto& q : zipf_world.queries) total += q.weight;
  CHECK(std::fabs(total - 1.0) < 1e-9);
  std::vector<double> mass_u(4, 0.0), mass_z(4, 0.0);
  for (const auto& q : uniform_world.queries) mass_u[q.item] += q.weight;
  for (const auto& q : zipf_world.queries) mass_z[q.item] += q.weight;
  for (int m = 0; m < 4; ++m) CHECK(mass_z[m] == doctest::Approx(mass_u[m]).epsilon(1e-9));
  // within an item block the weights are skewed
  CHECK(zipf_world.queries[0].weight > zipf_world.queries[1].weight);
}

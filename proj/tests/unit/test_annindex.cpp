#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "skimlab/annindex.hpp"
#include "skimlab/common.hpp"
#include "skimlab/rng.hpp"

using namespace skimlab;

namespace {

std::vector<Embedding> random_unit_vectors(int n, int dim, uint64_t seed) {
  Rng rng = derive_rng(seed, {99});
  std::vector<Embedding> out(n);
  for (auto& v : out) {
    v.resize(dim);
    for (auto& x : v) x = rng.normal();
    normalize_in_place(v);
  }
  return out;
}

}  // namespace

TEST_CASE("single vector index always returns it") {
  AnnIndex index = AnnIndex::build({Embedding{1.0, 2.0, 2.0}}, IndexConfig{});
  auto hits = index.query({0.0, 1.0, 0.0}, 3);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].first == 0);
}

TEST_CASE("duplicate vectors are both retrievable with equal scores") {
  std::vector<Embedding> vecs = {{1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  AnnIndex index = AnnIndex::build(vecs, IndexConfig{});
  auto hits = index.query({1.0, 0.0}, 2);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].first == 0);  // tie broken by ascending id
  CHECK(hits[1].first == 1);
  CHECK(hits[0].second == doctest::Approx(hits[1].second));
}

TEST_CASE("exact query equals the exhaustive scan oracle") {
  auto base = random_unit_vectors(50, 12, 3);
  AnnIndex index = AnnIndex::build(base, IndexConfig{});
  auto probes = random_unit_vectors(20, 12, 4);
  for (const auto& probe : probes) {
    auto got = index.query(probe, 7);
    auto oracle = exhaustive_scan_topk(base, probe, 7);
    REQUIRE(got.size() == oracle.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].first == oracle[i].first);
      CHECK(got[i].second == doctest::Approx(oracle[i].second).epsilon(1e-9));
    }
  }
  // query equal to a stored vector returns it first at score 1
  auto self = index.query(base[17], 1);
  CHECK(self[0].first == 17);
  CHECK(self[0].second == doctest::Approx(1.0).epsilon(1e-9));
  // k = size gives a full ranking
  auto all = index.query(probes[0], 50);
  CHECK(all.size() == 50);
  std::set<int> ids;
  for (auto& [id, s] : all) ids.insert(id);
  CHECK(ids.size() == 50);
  // k beyond the size returns everything without error
  CHECK(index.query(probes[0], 500).size() == 50);
}

TEST_CASE("hnsw self-retrieval on a thousand vectors") {
  auto base = random_unit_vectors(1000, 16, 5);
  IndexConfig cfg;
  cfg.kind = IndexConfig::Kind::kHnsw;
  cfg.m = 16;
  cfg.ef_construction = 200;
  cfg.ef_search = 50;
  cfg.seed = 1;
  AnnIndex index = AnnIndex::build(base, cfg);
  for (int i = 0; i < 1000; i += 37) {
    auto hits = index.query(base[i], 1);
    REQUIRE(!hits.empty());
    CHECK(hits[0].first == i);
  }
}

TEST_CASE("returned scores match recomputation from raw vectors") {
  auto base = random_unit_vectors(300, 24, 6);
  IndexConfig cfg;
  cfg.kind = IndexConfig::Kind::kHnsw;
  cfg.seed = 2;
  AnnIndex index = AnnIndex::build(base, cfg);
  auto probes = random_unit_vectors(10, 24, 7);
  for (const auto& probe : probes) {
    for (const auto& [id, score] : index.query(probe, 5)) {
      CHECK(std::fabs(score - cosine01(base[id], probe)) < 1e-6);
    }
  }
}

TEST_CASE("hnsw recall does not decrease with ef_search") {
  double lo_sum = 0.0, hi_sum = 0.0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    auto base = random_unit_vectors(1500, 24, 100 + seed);
    auto probes = random_unit_vectors(60, 24, 200 + seed);
    IndexConfig lo;
    lo.kind = IndexConfig::Kind::kHnsw;
    lo.ef_search = 12;
    lo.seed = seed;
    IndexConfig hi = lo;
    hi.ef_search = 120;
    lo_sum += AnnIndex::build(base, lo).recall_vs_exact(probes, 10);
    hi_sum += AnnIndex::build(base, hi).recall_vs_exact(probes, 10);
  }
  CHECK(hi_sum >= lo_sum);
  CHECK(hi_sum / 5.0 > 0.9);
}

TEST_CASE("exact index recall is exactly one") {
  auto base = random_unit_vectors(200, 16, 8);
  AnnIndex index = AnnIndex::build(base, IndexConfig{});
  CHECK(index.recall_vs_exact(random_unit_vectors(25, 16, 9), 10) == doctest::Approx(1.0));
}

TEST_CASE("index persistence round-trips query results") {
  namespace fs = std::filesystem;
  auto base = random_unit_vectors(400, 16, 10);
  IndexConfig cfg;
  cfg.kind = IndexConfig::Kind::kHnsw;
  cfg.seed = 3;
  AnnIndex index = AnnIndex::build(base, cfg);
  fs::path path = fs::temp_directory_path() / "skimlab_test_index.bin";
  index.save(path.string());
  AnnIndex loaded = AnnIndex::load(path.string());
  auto probes = random_unit_vectors(15, 16, 11);
  for (const auto& probe : probes) {
    auto a = index.query(probe, 6);
    auto b = loaded.query(probe, 6);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].first == b[i].first);
      CHECK(a[i].second == doctest::Approx(b[i].second).epsilon(1e-12));
    }
  }
  fs::remove(path);
}

TEST_CASE("query_batch equals per-query results") {
  auto base = random_unit_vectors(600, 16, 12);
  IndexConfig cfg;
  cfg.kind = IndexConfig::Kind::kHnsw;
  cfg.ef_search = 60;
  cfg.seed = 5;
  AnnIndex index = AnnIndex::build(base, cfg);
  auto probes = random_unit_vectors(33, 16, 13);
  auto batch = index.query_batch(probes, 8);
  REQUIRE(batch.size() == probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i) {
    auto single = index.query(probes[i], 8);
    REQUIRE(batch[i].size() == single.size());
    for (std::size_t j = 0; j < single.size(); ++j) {
      CHECK(batch[i][j].first == single[j].first);
      CHECK(batch[i][j].second == doctest::Approx(single[j].second).epsilon(1e-12));
    }
  }
}

TEST_CASE("build validation") {
  CHECK_THROWS_AS(AnnIndex::build({}, IndexConfig{}), ArgumentError);
  std::vector<Embedding> ragged = {{1.0, 0.0}, {1.0, 0.0, 0.0}};
  CHECK_THROWS_AS(AnnIndex::build(ragged, IndexConfig{}), ArgumentError);
  IndexConfig bad;
  bad.kind = IndexConfig::Kind::kHnsw;
  bad.m = 1;
  CHECK_THROWS_AS(AnnIndex::build({Embedding{1.0}}, bad), ConfigError);
  AnnIndex index = AnnIndex::build({Embedding{1.0, 0.0}}, IndexConfig{});
  CHECK_THROWS_AS(index.query({1.0, 0.0}, 0), ArgumentError);
  CHECK_THROWS_AS(index.query({1.0, 0.0, 0.0}, 1), ArgumentError);
}

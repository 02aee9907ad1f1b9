#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "skimlab/encoder.hpp"

namespace skimlab {

struct IndexConfig {
  enum class Kind { kExact, kHnsw };
  Kind kind = Kind::kExact;
  int m = 16;                // max neighbors per node above layer 0 (2M at layer 0)
  int ef_construction = 200;
  int ef_search = 100;
  uint64_t seed = 0;
};

void validate(const IndexConfig& cfg);

// Nearest-neighbor search under cosine01. Vectors are normalized once at
// build; deletions are unsupported, all sets are build-once. Queries are
// const and safe to run concurrently after the build completes.
class AnnIndex {
 public:
  static AnnIndex build(const std::vector<Embedding>& embeddings, const IndexConfig& cfg);

  // (id, cosine01) sorted by descending score, ties by ascending id.
  // Exact kind returns the true top-k; hnsw returns the ef_search beam's
  // best k. k larger than the index returns everything.
  std::vector<std::pair<int, double>> query(const Embedding& vec, int k) const;

  // Batched queries on one thread. The graph walk interleaves vector loads
  // across several live beams, which overlaps their memory stalls; results
  // are identical to calling query() per probe.
  std::vector<std::vector<std::pair<int, double>>> query_batch(
      const std::vector<Embedding>& probes, int k) const;

  // Mean over probes of |approx top-k  intersect  exact top-k| / k.
  double recall_vs_exact(const std::vector<Embedding>& probes, int k) const;

  int size() const { return n_; }
  int dim() const { return dim_; }
  const IndexConfig& config() const { return cfg_; }

  void save(const std::string& path) const;
  static AnnIndex load(const std::string& path);

 private:
  IndexConfig cfg_;
  int n_ = 0;
  int dim_ = 0;
  std::vector<double> vectors_;      // normalized, n * dim; source of truth
  std::vector<int16_t> vectors_q16_;  // construction-precision quantized copy
  std::vector<int8_t> vectors_q8_;    // query-steering copy, one line per vector

  // hnsw graph
  int entry_ = -1;
  int max_level_ = -1;
  int max_m0_ = 0;
  std::vector<int32_t> level0_;               // per node: [count, neighbors...]
  std::vector<int> external_ids_;             // internal position -> caller id
  std::vector<int> node_level_;               // per node
  std::vector<std::vector<std::vector<int32_t>>> upper_;  // node -> level-1 -> neighbors

  const double* vec(int id) const { return vectors_.data() + static_cast<std::size_t>(id) * dim_; }
  const int16_t* qvec(int id) const {
    return vectors_q16_.data() + static_cast<std::size_t>(id) * dim_;
  }
  const int8_t* q8vec(int id) const {
    return vectors_q8_.data() + static_cast<std::size_t>(id) * dim_;
  }
  void quantize_vectors();
  void reorder_bfs();
  int to_external(int internal) const {
    return external_ids_.empty() ? internal : external_ids_[internal];
  }
  void insert_hnsw(int id);
  void refine_hnsw(int id);
  std::vector<std::pair<float, int>> search_layer(const int16_t* q, int entry, int level,
                                                  int ef) const;
  std::vector<std::pair<float, int>> search_layer8(const int8_t* q, int entry, int level,
                                                   int ef) const;
  template <typename Scalar>
  std::vector<std::pair<float, int>> search_core(const Scalar* q, int entry, int level,
                                                 int ef) const;
  std::vector<int> select_neighbors(std::vector<std::pair<float, int>> cands,
                                    int max_count) const;

  std::vector<std::pair<int, double>> exact_topk(const double* q, int k) const;
};

// Plain reference scan: cosine01 against every stored embedding, top k.
// This is the no-index baseline the bench reports against and the oracle
// recall_vs_exact compares to.
std::vector<std::pair<int, double>> exhaustive_scan_topk(const std::vector<Embedding>& stored,
                                                         const Embedding& probe, int k);

struct AnnBenchResult {
  int n = 0, dim = 0, k = 0, probes = 0;
  double recall = 0.0;
  double hnsw_us_per_query = 0.0;
  double exhaustive_us_per_query = 0.0;
  double speedup = 0.0;
  double build_seconds = 0.0;
};

AnnBenchResult ann_bench(int n, int dim, const IndexConfig& cfg, int n_probes, int k,
                         uint64_t seed);

std::string ann_bench_csv(const std::vector<AnnBenchResult>& rows);

}  // namespace skimlab

#include "skimlab/annindex.hpp"

#include <algorithm>

#include "skimlab/common.hpp"

namespace skimlab {

// The no-index reference path. Kept in its own translation unit with plain
// baseline codegen so benchmarks compare the graph against what a caller
// without an index would actually run.
std::vector<std::pair<int, double>> exhaustive_scan_topk(const std::vector<Embedding>& stored,
                                                         const Embedding& probe, int k) {
  if (stored.empty()) throw ArgumentError("exhaustive scan: empty set");
  const int kk = std::min<int>(k, static_cast<int>(stored.size()));
  std::vector<std::pair<double, int>> scored(stored.size());
  for (std::size_t i = 0; i < stored.size(); ++i) {
    scored[i] = {cosine01(stored[i], probe), static_cast<int>(i)};
  }
  auto better = [](const std::pair<double, int>& a, const std::pair<double, int>& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  std::partial_sort(scored.begin(), scored.begin() + kk, scored.end(), better);
  std::vector<std::pair<int, double>> out;
  out.reserve(kk);
  for (int i = 0; i < kk; ++i) out.emplace_back(scored[i].second, scored[i].first);
  return out;
}


}  // namespace skimlab

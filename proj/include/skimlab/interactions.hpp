#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace skimlab {

enum class Provenance : uint8_t { kTruth, kClicked, kMar, kImputed, kSkim };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

struct Interaction {
  int query = 0;
  int doc = 0;
  float weight = 1.0f;  // in (0, 1]
  Provenance provenance = Provenance::kTruth;
};

inline uint64_t pair_key(int query, int doc) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(query)) << 32) |
         static_cast<uint64_t>(static_cast<uint32_t>(doc));
}

inline bool pair_less(const Interaction& a, const Interaction& b) {
  return a.query != b.query ? a.query < b.query : a.doc < b.doc;
}

// Sparse (query, document) collection. Canonical order is (query asc, doc
// asc) with no duplicate pairs; mutating helpers restore it explicitly.
struct InteractionSet {
  int n_queries = 0;
  int n_docs = 0;
  std::vector<Interaction> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  void sort_canonical();
  bool is_canonical() const;
  bool contains(int query, int doc) const;  // requires canonical order

  // Pair identity set comparison, ignoring weights and provenance.
  bool same_pairs(const InteractionSet& other) const;
};

void validate(const InteractionSet& set);

// *.itx: header "N L", then one "q d weight provenance" line per pair.
std::string to_itx(const InteractionSet& set);
InteractionSet from_itx(const std::string& text);
void save_itx(const InteractionSet& set, const std::string& path);
InteractionSet load_itx(const std::string& path);

}  // namespace skimlab

#include "skimlab/interactions.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "skimlab/common.hpp"

namespace skimlab {

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kTruth: return "truth";
    case Provenance::kClicked: return "clicked";
    case Provenance::kMar: return "mar";
    case Provenance::kImputed: return "imputed";
    case Provenance::kSkim: return "skim";
  }
  return "truth";
}

Provenance provenance_from_name(const std::string& name) {
  if (name == "truth") return Provenance::kTruth;
  if (name == "clicked") return Provenance::kClicked;
  if (name == "mar") return Provenance::kMar;
  if (name == "imputed") return Provenance::kImputed;
  if (name == "skim") return Provenance::kSkim;
  throw ArgumentError("unknown provenance tag '" + name + "'");
}

void InteractionSet::sort_canonical() {
  std::sort(pairs.begin(), pairs.end(), pair_less);
}

bool InteractionSet::is_canonical() const {
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    if (!pair_less(pairs[i - 1], pairs[i])) return false;
  }
  return true;
}

bool InteractionSet::contains(int query, int doc) const {
  Interaction probe;
  probe.query = query;
  probe.doc = doc;
  auto it = std::lower_bound(pairs.begin(), pairs.end(), probe, pair_less);
  return it != pairs.end() && it->query == query && it->doc == doc;
}

bool InteractionSet::same_pairs(const InteractionSet& other) const {
  if (pairs.size() != other.pairs.size()) return false;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].query != other.pairs[i].query || pairs[i].doc != other.pairs[i].doc) return false;
  }
  return true;
}

void validate(const InteractionSet& set) {
  if (set.n_queries < 0 || set.n_docs < 0) throw ArgumentError("interaction set: negative dimensions");
  const Interaction* prev = nullptr;
  for (const auto& p : set.pairs) {
    if (p.query < 0 || p.query >= set.n_queries) {
      throw IndexError("interaction set: query id " + std::to_string(p.query) + " out of range");
    }
    if (p.doc < 0 || p.doc >= set.n_docs) {
      throw IndexError("interaction set: doc id " + std::to_string(p.doc) + " out of range");
    }
    if (!(p.weight > 0.0f) || p.weight > 1.0f || !std::isfinite(p.weight)) {
      throw ArgumentError("interaction set: weight must be in (0, 1]");
    }
    if (prev != nullptr && !pair_less(*prev, p)) {
      throw ArgumentError("interaction set: pairs not in canonical order or duplicated");
    }
    prev = &p;
  }
}

std::string to_itx(const InteractionSet& set) {
  std::ostringstream out;
  out << set.n_queries << ' ' << set.n_docs << '\n';
  char buf[24];
  for (const auto& p : set.pairs) {
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(p.weight));
    out << p.query << ' ' << p.doc << ' ' << buf << ' ' << provenance_name(p.provenance) << '\n';
  }
  return out.str();
}

InteractionSet from_itx(const std::string& text) {
  std::istringstream in(text);
  InteractionSet set;
  if (!(in >> set.n_queries >> set.n_docs)) {
    throw ArgumentError("itx: missing 'N L' header");
  }
  Interaction p;
  std::string prov;
  double w = 0.0;
  while (in >> p.query >> p.doc >> w >> prov) {
    p.weight = static_cast<float>(w);
    p.provenance = provenance_from_name(prov);
    set.pairs.push_back(p);
  }
  validate(set);
  return set;
}

void save_itx(const InteractionSet& set, const std::string& path) {
  write_text_file(path, to_itx(set));
}

InteractionSet load_itx(const std::string& path) { return from_itx(read_text_file(path)); }

}  // namespace skimlab

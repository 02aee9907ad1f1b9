#include "skimlab/encoder.hpp"

#include <cmath>

#include "skimlab/common.hpp"

namespace skimlab {

std::string encoder_mode_name(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::kFull: return "full";
    case EncoderMode::kMasked: return "masked";
    case EncoderMode::kSurfaceOnly: return "surface_only";
  }
  return "full";
}

EncoderMode encoder_mode_from_name(const std::string& name) {
  if (name == "full") return EncoderMode::kFull;
  if (name == "masked") return EncoderMode::kMasked;
  if (name == "surface_only") return EncoderMode::kSurfaceOnly;
  throw ConfigError("encoder.mode: unknown mode '" + name + "'");
}

double dot(const Embedding& a, const Embedding& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const Embedding& a) { return std::sqrt(dot(a, a)); }

void normalize_in_place(Embedding& a) {
  double n = l2_norm(a);
  if (n == 0.0 || !std::isfinite(n)) {
    throw DegenerateEmbeddingError("cannot normalize zero or non-finite vector");
  }
  for (auto& x : a) x /= n;
}

Embedding embed(const EncoderSpec& spec, const Embedding& surface) {
  Embedding out = surface;
  if (spec.mode == EncoderMode::kMasked) {
    if (spec.mask.size() != surface.size()) {
      throw ArgumentError("embed: mask length does not match surface dimension");
    }
    bool any = false;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (spec.mask[i]) {
        any = true;
      } else {
        out[i] = 0.0;
      }
    }
    if (!any) throw ArgumentError("embed: masked mode requires a mask with >= 1 set bit");
  }
  if (spec.normalize) normalize_in_place(out);
  return out;
}

double cosine01(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw ArgumentError("cosine01: dimension mismatch");
  double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw DegenerateEmbeddingError("cosine01: zero vector");
  }
  double c = dot(a, b) / (na * nb);
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return 0.5 * (c + 1.0);
}

}  // namespace skimlab

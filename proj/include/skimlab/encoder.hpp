#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace skimlab {

using Embedding = std::vector<double>;

enum class EncoderMode { kFull, kMasked, kSurfaceOnly };

// Deterministic featurizer. `full` normalizes the raw surface, `masked` first
// zeroes every dimension whose mask bit is unset, `surface_only` is `full`
// under a name that flags intent: document surfaces already omit whatever the
// deployed system cannot see.
struct EncoderSpec {
  EncoderMode mode = EncoderMode::kFull;
  std::vector<uint8_t> mask;  // one flag per dimension, masked mode only
  bool normalize = true;
};

std::string encoder_mode_name(EncoderMode mode);
EncoderMode encoder_mode_from_name(const std::string& name);

Embedding embed(const EncoderSpec& spec, const Embedding& surface);

// (cos + 1) / 2: symmetric, 1 for parallel, 0.5 for orthogonal, 0 for
// antiparallel.
double cosine01(const Embedding& a, const Embedding& b);

double dot(const Embedding& a, const Embedding& b);
double l2_norm(const Embedding& a);
void normalize_in_place(Embedding& a);

}  // namespace skimlab

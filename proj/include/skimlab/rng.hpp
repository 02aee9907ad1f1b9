#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace skimlab {

inline constexpr uint64_t kRngGamma = 0x9E3779B97F4A7C15ull;

inline uint64_t mix64(uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

// splitmix64. Hand-rolled so that streams are identical across platforms and
// standard libraries; std:: distributions are not portable.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += kRngGamma;
    return mix64(state_);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0, n).
  uint64_t below(uint64_t n) {
    if (n == 0) return 0;
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  int below_int(int n) { return static_cast<int>(below(static_cast<uint64_t>(n))); }

  // Standard normal via Box-Muller (cosine branch, no cached spare).
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  uint64_t state_;
};

// Independent stream keyed by (seed, path...). Parallel consumers that derive
// their stream from their own identity reproduce serial runs bit for bit.
inline Rng derive_rng(uint64_t seed, std::initializer_list<uint64_t> path) {
  uint64_t h = mix64(seed ^ kRngGamma);
  for (uint64_t p : path) h = mix64(h ^ mix64(p + kRngGamma));
  return Rng(h);
}

// One uniform in [0,1) keyed purely by identity. Bernoulli draws keyed this
// way stay coupled when the surrounding candidate set changes.
inline double keyed_uniform(uint64_t seed, uint64_t a, uint64_t b) {
  uint64_t h = mix64(seed ^ kRngGamma);
  h = mix64(h ^ mix64(a + kRngGamma));
  h = mix64(h ^ mix64(b + kRngGamma));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace skimlab

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace skimlab {

// Error taxonomy. The CLI maps ConfigError to exit code 2 and every other
// Error to exit code 3, so keep new failure modes inside this hierarchy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ResourceError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

class DegenerateEmbeddingError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

// Kahan compensated sum. Aggregations must not depend on whether the
// per-item values were produced serially or in parallel.
double kahan_sum(const double* xs, std::size_t n);
inline double kahan_sum(const std::vector<double>& xs) {
  return kahan_sum(xs.data(), xs.size());
}
inline double kahan_mean(const std::vector<double>& xs) {
  return xs.empty() ? 0.0 : kahan_sum(xs) / static_cast<double>(xs.size());
}

// p_m proportional to (m+1)^-alpha, normalized to sum 1, nonincreasing in m.
std::vector<double> zipf_marginals(int count, double alpha);

// FNV-1a, used for config/artifact fingerprints in manifests.
uint64_t fnv1a64(const void* data, std::size_t n, uint64_t h = 0xcbf29ce484222325ull);
inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }
std::string hex64(uint64_t v);

// Fixed-width float formatting so serialized artifacts are byte-stable.
std::string format_double(double v);

int default_thread_count();

// Static range split; every item lands in the slot keyed by its own index,
// so results do not depend on the worker count.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body, int threads = 0);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace skimlab

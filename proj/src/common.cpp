#include "skimlab/common.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace skimlab {

double kahan_sum(const double* xs, std::size_t n) {
  double sum = 0.0, c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double y = xs[i] - c;
    double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  return sum;
}

std::vector<double> zipf_marginals(int count, double alpha) {
  if (count < 1) throw ArgumentError("zipf_marginals: count must be >= 1");
  if (alpha <= 0.0) throw ArgumentError("zipf_marginals: alpha must be > 0");
  std::vector<double> p(static_cast<std::size_t>(count));
  double z = 0.0;
  for (int m = 0; m < count; ++m) {
    p[m] = std::pow(static_cast<double>(m + 1), -alpha);
    z += p[m];
  }
  for (auto& x : p) x /= z;
  return p;
}

uint64_t fnv1a64(const void* data, std::size_t n, uint64_t h) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::string format_double(double v) {
  // Shortest representation that parses back to the same value.
  char buf[40];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  }
  return std::string(buf, end);
}

int default_thread_count() {
  if (const char* env = std::getenv("SKIMLAB_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body, int threads) {
  if (end <= begin) return;
  if (threads <= 0) threads = default_thread_count();
  std::size_t total = end - begin;
  if (threads == 1 || total < 64) {
    for (std::size_t i = begin; i < end; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{begin};
  const std::size_t chunk = std::max<std::size_t>(1, total / (static_cast<std::size_t>(threads) * 8));
  auto worker = [&] {
    for (;;) {
      std::size_t lo = next.fetch_add(chunk);
      if (lo >= end) return;
      std::size_t hi = std::min(end, lo + chunk);
      for (std::size_t i = lo; i < hi; ++i) body(i);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads) - 1);
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open file for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot open file for writing: " + path);
  out << content;
  if (!out) throw ArgumentError("short write: " + path);
}

}  // namespace skimlab

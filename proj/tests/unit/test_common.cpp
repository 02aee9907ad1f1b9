#include <atomic>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "skimlab/common.hpp"
#include "skimlab/rng.hpp"

using namespace skimlab;

TEST_CASE("zipf marginals normalize and sort") {
  auto p = zipf_marginals(4, 1.0);
  // proportional to 1, 1/2, 1/3, 1/4
  CHECK(p[0] == doctest::Approx(0.48).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(0.24).epsilon(1e-9));
  CHECK(p[2] == doctest::Approx(0.16).epsilon(1e-9));
  CHECK(p[3] == doctest::Approx(0.12).epsilon(1e-9));
  CHECK(std::fabs(kahan_sum(p) - 1.0) < 1e-12);
  for (std::size_t i = 1; i < p.size(); ++i) CHECK(p[i] <= p[i - 1]);
  CHECK_THROWS_AS(zipf_marginals(0, 1.0), ArgumentError);
  CHECK_THROWS_AS(zipf_marginals(3, 0.0), ArgumentError);
}

TEST_CASE("kahan sum is order independent to high precision") {
  Rng rng(7);
  std::vector<double> xs(5000);
  for (auto& x : xs) x = rng.normal() * std::pow(10.0, rng.below_int(6));
  double a = kahan_sum(xs);
  std::vector<double> rev(xs.rbegin(), xs.rend());
  double b = kahan_sum(rev);
  CHECK(std::fabs(a - b) <= 1e-9 * std::max(1.0, std::fabs(a)));
}

TEST_CASE("rng streams are deterministic and distinct") {
  Rng a = derive_rng(1, {2, 3});
  Rng b = derive_rng(1, {2, 3});
  Rng c = derive_rng(1, {2, 4});
  CHECK(a.next_u64() == b.next_u64());
  CHECK(a.next_u64() != c.next_u64());
  CHECK(keyed_uniform(1, 5, 6) == keyed_uniform(1, 5, 6));
  CHECK(keyed_uniform(1, 5, 6) != keyed_uniform(1, 6, 5));
}

TEST_CASE("rng normal moments are sane") {
  Rng rng(42);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::fabs(sum / n) < 0.01);
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("parallel_for touches every index exactly once") {
  std::vector<std::atomic<int>> hits(10000);
  parallel_for(0, hits.size(), [&](std::size_t i) { hits[i].fetch_add(1); }, 4);
  for (auto& h : hits) CHECK(h.load() == 1);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-12, 123456.789, 0.0348678441}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

#include <cmath>

#include "doctest.h"
#include "skimlab/common.hpp"
#include "skimlab/theory.hpp"

using namespace skimlab;

namespace {

BoundInputs two_point() {
  BoundInputs in;
  in.marginals = {0.9, 0.1};
  in.exposure_b = 1.0;
  in.n_clicks = 10;
  in.delta = 0.05;
  return in;
}

// Independent high-precision evaluation of the closed form.
long double closed_form_oracle(const std::vector<double>& p, double b, long long n) {
  long double total = 0.0L;
  for (double pm : p) {
    total += static_cast<long double>(pm) *
             powl(1.0L - static_cast<long double>(b) * static_cast<long double>(pm),
                  static_cast<long double>(n));
  }
  return total / static_cast<long double>(b);
}

}  // namespace

TEST_CASE("expected missing mass: exact cases") {
  BoundInputs in;
  in.marginals = {1.0};
  in.exposure_b = 1.0;
  in.n_clicks = 5;
  in.delta = 0.1;
  CHECK(expected_missing_mass(in) == doctest::Approx(0.0).epsilon(1e-15));

  in.n_clicks = 0;
  CHECK(expected_missing_mass(in) == doctest::Approx(1.0));
  in.exposure_b = 0.5;
  CHECK(expected_missing_mass(in) == doctest::Approx(2.0));

  BoundInputs tp = two_point();
  double expected = static_cast<double>(closed_form_oracle(tp.marginals, tp.exposure_b, tp.n_clicks));
  CHECK(expected == doctest::Approx(0.0348678441).epsilon(1e-9));
  CHECK(expected_missing_mass(tp) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("expected missing mass is nonincreasing in n and in B") {
  BoundInputs in;
  in.marginals = zipf_marginals(30, 1.1);
  in.delta = 0.1;
  double prev = 1e300;
  for (long long n : {1, 3, 10, 30, 100, 1000}) {
    in.n_clicks = n;
    in.exposure_b = 0.5;
    double v = expected_missing_mass(in);
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
  in.n_clicks = 50;
  prev = 1e300;
  for (double b : {0.1, 0.3, 0.5, 0.8, 1.0}) {
    in.exposure_b = b;
    double v = expected_missing_mass(in);
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
}

TEST_CASE("theorem lower bound: spec example clamps to zero") {
  BoundInputs in = two_point();
  // raw subterms, recomputed independently
  double term_head_item = 1.0 * std::exp(-0.9 * 10.0);
  double term_tail_item = 0.1 * std::exp(-0.1 * 10.0);
  double correction = (1.0 / (2.0 * std::sqrt(20.0))) * std::pow(std::log(2.0 * 2.0 / 0.05), 1.5);
  CHECK(term_tail_item == doctest::Approx(0.1 * std::exp(-1.0)));
  CHECK(std::max(term_head_item, term_tail_item) - correction < 0.0);
  CHECK(theorem_lower_bound(in) == 0.0);
}

TEST_CASE("theorem lower bound: single item specialization") {
  BoundInputs in;
  in.marginals = {1.0};
  in.exposure_b = 0.5;
  in.n_clicks = 2;
  in.delta = 0.5;
  double raw = (1.0 / 0.5) * std::exp(-0.5 * 1.0 * 2.0);
  double corr = (1.0 / (2.0 * std::sqrt(4.0))) * std::pow(std::log(2.0 / 0.5), 1.5);
  CHECK(theorem_lower_bound(in) == doctest::Approx(std::max(0.0, raw - corr)).epsilon(1e-12));
}

TEST_CASE("theorem lower bound vanishes at huge n and loose delta") {
  BoundInputs in;
  in.marginals = zipf_marginals(10, 1.0);
  in.exposure_b = 1.0;
  in.n_clicks = 10000000;
  in.delta = 0.999;
  CHECK(theorem_lower_bound(in) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("head and tail survival functions differ") {
  BoundInputs in;
  in.marginals = zipf_marginals(1000, 1.2);
  in.exposure_b = 1.0;
  in.n_clicks = 20000;
  in.delta = 0.2;
  double tail = theorem_lower_bound(in, SurvivalKind::kTail);
  double head = theorem_lower_bound(in, SurvivalKind::kHead);
  // the head sum reaches 1 at the rarest item, where the exponential is
  // still close to 1; the tail sum there is just the last marginal
  CHECK(head > tail);
  CHECK(tail == 0.0);
  CHECK(head > 0.1);
}

TEST_CASE("monte carlo agrees with the closed form") {
  BoundInputs in = two_point();
  auto mc = monte_carlo_missing_mass(in, 100000, 7);
  double expected = expected_missing_mass(in);
  CHECK(std::fabs(mc.mean - expected) <= 3.0 * mc.stderr_of_mean);
  CHECK(mc.stderr_of_mean > 0.0);

  auto again = monte_carlo_missing_mass(in, 100000, 7);
  CHECK(mc.mean == again.mean);
  CHECK(mc.stderr_of_mean == again.stderr_of_mean);

  BoundInputs sure;
  sure.marginals = {1.0};
  sure.exposure_b = 1.0;
  sure.n_clicks = 1;
  sure.delta = 0.1;
  CHECK(monte_carlo_missing_mass(sure, 100, 3).mean == 0.0);
}

TEST_CASE("monte carlo mean decreases as n grows on paired seeds") {
  BoundInputs in;
  in.marginals = zipf_marginals(50, 1.1);
  in.exposure_b = 0.7;
  in.delta = 0.1;
  double prev = 1e300;
  for (long long n : {10, 40, 160, 640}) {
    in.n_clicks = n;
    double mean = monte_carlo_missing_mass(in, 4000, 11).mean;
    CHECK(mean < prev);
    prev = mean;
  }
}

TEST_CASE("stderr scales like one over sqrt trials") {
  BoundInputs in;
  in.marginals = zipf_marginals(20, 1.0);
  in.exposure_b = 0.5;
  in.n_clicks = 30;
  in.delta = 0.1;
  double s3 = monte_carlo_missing_mass(in, 1000, 5).stderr_of_mean;
  double s4 = monte_carlo_missing_mass(in, 10000, 5).stderr_of_mean;
  double s5 = monte_carlo_missing_mass(in, 100000, 5).stderr_of_mean;
  double root10 = std::sqrt(10.0);
  CHECK(s3 / s4 == doctest::Approx(root10).epsilon(0.2));
  CHECK(s4 / s5 == doctest::Approx(root10).epsilon(0.2));
}

TEST_CASE("verify_bound passes its own condition") {
  BoundInputs in;
  in.marginals = zipf_marginals(500, 1.05);
  in.exposure_b = 0.5;
  in.n_clicks = 200;
  in.delta = 0.1;
  BoundReport report = verify_bound(in, 10000, 13);
  CHECK(report.pass);
  CHECK(report.violation_rate <= in.delta + 2.0 * std::sqrt(in.delta * (1.0 - in.delta) / 10000.0));

  // clamped-zero bound cannot be violated
  BoundInputs zero = two_point();
  BoundReport zr = verify_bound(zero, 200, 3);
  CHECK(zr.bound == 0.0);
  CHECK(zr.violation_rate == 0.0);
  CHECK_THROWS_AS(verify_bound(zero, 50, 3), ArgumentError);
}

TEST_CASE("bound inputs validation") {
  BoundInputs in;
  in.marginals = {0.5, 0.6};
  CHECK_THROWS_AS(expected_missing_mass(in), ArgumentError);
  in.marginals = {0.3, 0.7};  // increasing
  CHECK_THROWS_AS(expected_missing_mass(in), ArgumentError);
  in.marginals = {0.7, 0.3};
  in.exposure_b = 0.0;
  CHECK_THROWS_AS(expected_missing_mass(in), ArgumentError);
  in.exposure_b = 1.0;
  in.delta = 1.0;
  CHECK_THROWS_AS(expected_missing_mass(in), ArgumentError);
}

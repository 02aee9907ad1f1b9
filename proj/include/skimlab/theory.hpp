#pragma once

#include <cstdint>
#include <vector>

#include "skimlab/interactions.hpp"
#include "skimlab/world.hpp"
#include "skimlab/xctrain.hpp"

namespace skimlab {

struct BoundInputs {
  std::vector<double> marginals;  // nonincreasing, sums to 1
  double exposure_b = 1.0;        // B, survival probability in (0, 1]
  long long n_clicks = 1;         // n
  double delta = 0.1;             // confidence parameter in (0, 1)
};

void validate(const BoundInputs& inputs);

// The theorem statement writes the survival function as a head sum while its
// proof uses the tail sum. Both are available; the tail sum is the default
// because it is the one the proof chain needs.
enum class SurvivalKind { kTail, kHead };

// (1/B) * sum_m p_m * (1 - B p_m)^n, exact. n = 0 gives 1/B.
double expected_missing_mass(const BoundInputs& inputs);

// max(0, max_m (Fbar_m / B) e^{-B p_m n} - (1 / (2 sqrt(2n))) (ln(2K/delta))^{3/2}).
double theorem_lower_bound(const BoundInputs& inputs, SurvivalKind survival = SurvivalKind::kTail);

struct MonteCarloResult {
  double mean = 0.0;
  double stderr_of_mean = 0.0;
};

// Per trial: n i.i.d. draws where item m is selected with probability
// B * p_m (otherwise the draw is a non-click); the trial's missing mass is
// (1/B) * sum of p_m over never-selected items.
MonteCarloResult monte_carlo_missing_mass(const BoundInputs& inputs, int trials, uint64_t seed);

struct BoundReport {
  double bound = 0.0;
  double violation_rate = 0.0;     // fraction of trials below the bound
  double empirical_quantile = 0.0; // delta-quantile of the trial masses
  double empirical_mean = 0.0;
  int trials = 0;
  bool pass = false;  // violation_rate <= delta + 2 sqrt(delta(1-delta)/trials)
};

BoundReport verify_bound(const BoundInputs& inputs, int trials, uint64_t seed,
                         SurvivalKind survival = SurvivalKind::kTail);

// AUC of model scores separating relevant pairs in region D_m from matched
// irrelevant controls (same query, structurally matched document). At chance
// level when the training data held no positive pair of the region.
double lemma_probe(const World& world, const OvaModel& model, int missing_item, uint64_t seed);

}  // namespace skimlab

#include "skimlab/theory.hpp"

#include <algorithm>
#include <cmath>

#include "skimlab/common.hpp"
#include "skimlab/rng.hpp"

namespace skimlab {

namespace {

constexpr uint64_t kStreamTrial = 31;
constexpr uint64_t kStreamProbe = 32;

// Walker alias table over K+1 outcomes; outcome K stands for "no click".
class AliasSampler {
 public:
  AliasSampler(const std::vector<double>& marginals, double exposure_b) {
    const int k = static_cast<int>(marginals.size());
    std::vector<double> prob(k + 1);
    double total = 0.0;
    for (int m = 0; m < k; ++m) {
      prob[m] = exposure_b * marginals[m];
      total += prob[m];
    }
    prob[k] = std::max(0.0, 1.0 - total);
    const int n = k + 1;
    scaled_.resize(n);
    alias_.assign(n, 0);
    std::vector<int> small, large;
    for (int i = 0; i < n; ++i) {
      scaled_[i] = prob[i] * n;
      (scaled_[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      int s = small.back(), l = large.back();
      small.pop_back();
      large.pop_back();
      alias_[s] = l;
      scaled_[l] = (scaled_[l] + scaled_[s]) - 1.0;
      (scaled_[l] < 1.0 ? small : large).push_back(l);
    }
    for (int i : small) scaled_[i] = 1.0;
    for (int i : large) scaled_[i] = 1.0;
    n_ = n;
  }

  int draw(Rng& rng) const {
    double u = rng.uniform() * n_;
    int i = static_cast<int>(u);
    if (i >= n_) i = n_ - 1;
    return (u - i) < scaled_[i] ? i : alias_[i];
  }

 private:
  std::vector<double> scaled_;
  std::vector<int> alias_;
  int n_ = 0;
};

}  // namespace

void validate(const BoundInputs& inputs) {
  if (inputs.marginals.empty()) throw ArgumentError("bound inputs: empty marginal vector");
  double sum = kahan_sum(inputs.marginals);
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw ArgumentError("bound inputs: marginals must sum to 1 (got " + format_double(sum) + ")");
  }
  for (std::size_t m = 1; m < inputs.marginals.size(); ++m) {
    if (inputs.marginals[m] > inputs.marginals[m - 1] + 1e-12) {
      throw ArgumentError("bound inputs: marginals must be nonincreasing");
    }
  }
  if (!(inputs.exposure_b > 0.0) || inputs.exposure_b > 1.0) {
    throw ArgumentError("bound inputs: exposure_b must be in (0, 1]");
  }
  if (inputs.n_clicks < 0) throw ArgumentError("bound inputs: n_clicks must be >= 0");
  if (!(inputs.delta > 0.0) || !(inputs.delta < 1.0)) {
    throw ArgumentError("bound inputs: delta must be in (0, 1)");
  }
}

double expected_missing_mass(const BoundInputs& inputs) {
  validate(inputs);
  std::vector<double> terms(inputs.marginals.size());
  for (std::size_t m = 0; m < inputs.marginals.size(); ++m) {
    double p = inputs.marginals[m];
    terms[m] = p * std::pow(1.0 - inputs.exposure_b * p, static_cast<double>(inputs.n_clicks));
  }
  return kahan_sum(terms) / inputs.exposure_b;
}

double theorem_lower_bound(const BoundInputs& inputs, SurvivalKind survival) {
  validate(inputs);
  if (inputs.n_clicks < 1) throw ArgumentError("theorem_lower_bound: n_clicks must be >= 1");
  const auto& p = inputs.marginals;
  const std::size_t k = p.size();
  // Fbar_m: tail sum (proof form) or head sum (statement form).
  std::vector<double> fbar(k);
  if (survival == SurvivalKind::kTail) {
    double acc = 0.0;
    for (std::size_t m = k; m-- > 0;) {
      acc += p[m];
      fbar[m] = acc;
    }
  } else {
    double acc = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
      acc += p[m];
      fbar[m] = acc;
    }
  }
  const double n = static_cast<double>(inputs.n_clicks);
  double best = 0.0;
  for (std::size_t m = 0; m < k; ++m) {
    double term = (fbar[m] / inputs.exposure_b) * std::exp(-inputs.exposure_b * p[m] * n);
    best = std::max(best, term);
  }
  double correction = (1.0 / (2.0 * std::sqrt(2.0 * n))) *
                      std::pow(std::log(2.0 * static_cast<double>(k) / inputs.delta), 1.5);
  return std::max(0.0, best - correction);
}

MonteCarloResult monte_carlo_missing_mass(const BoundInputs& inputs, int trials, uint64_t seed) {
  validate(inputs);
  if (trials < 1) throw ArgumentError("monte_carlo_missing_mass: trials must be >= 1");
  const int k = static_cast<int>(inputs.marginals.size());
  AliasSampler sampler(inputs.marginals, inputs.exposure_b);

  std::vector<double> masses(trials);
  parallel_for(0, static_cast<std::size_t>(trials), [&](std::size_t t) {
    Rng rng = derive_rng(seed, {kStreamTrial, static_cast<uint64_t>(t)});
    std::vector<uint8_t> sampled(k, 0);
    for (long long i = 0; i < inputs.n_clicks; ++i) {
      int m = sampler.draw(rng);
      if (m < k) sampled[m] = 1;
    }
    double covered = 0.0;
    for (int m = 0; m < k; ++m) {
      if (sampled[m]) covered += inputs.marginals[m];
    }
    masses[t] = (1.0 - covered) / inputs.exposure_b;
  });

  MonteCarloResult res;
  res.mean = kahan_mean(masses);
  if (trials > 1) {
    std::vector<double> sq(trials);
    for (int t = 0; t < trials; ++t) {
      double d = masses[t] - res.mean;
      sq[t] = d * d;
    }
    double var = kahan_sum(sq) / static_cast<double>(trials - 1);
    res.stderr_of_mean = std::sqrt(var / trials);
  }
  return res;
}

BoundReport verify_bound(const BoundInputs& inputs, int trials, uint64_t seed,
                         SurvivalKind survival) {
  if (trials < 100) throw ArgumentError("verify_bound: trials must be >= 100");
  const int k = static_cast<int>(inputs.marginals.size());
  AliasSampler sampler(inputs.marginals, inputs.exposure_b);
  std::vector<double> masses(trials);
  parallel_for(0, static_cast<std::size_t>(trials), [&](std::size_t t) {
    Rng rng = derive_rng(seed, {kStreamTrial, static_cast<uint64_t>(t)});
    std::vector<uint8_t> sampled(k, 0);
    for (long long i = 0; i < inputs.n_clicks; ++i) {
      int m = sampler.draw(rng);
      if (m < k) sampled[m] = 1;
    }
    double covered = 0.0;
    for (int m = 0; m < k; ++m) {
      if (sampled[m]) covered += inputs.marginals[m];
    }
    masses[t] = (1.0 - covered) / inputs.exposure_b;
  });

  BoundReport report;
  report.trials = trials;
  report.bound = theorem_lower_bound(inputs, survival);
  report.empirical_mean = kahan_mean(masses);
  int violations = 0;
  for (double m : masses) {
    if (m < report.bound) ++violations;
  }
  report.violation_rate = static_cast<double>(violations) / trials;
  std::vector<double> sorted = masses;
  std::sort(sorted.begin(), sorted.end());
  report.empirical_quantile =
      sorted[static_cast<std::size_t>(inputs.delta * (trials - 1))];
  double slack = 2.0 * std::sqrt(inputs.delta * (1.0 - inputs.delta) / trials);
  report.pass = report.violation_rate <= inputs.delta + slack;
  return report;
}

double lemma_probe(const World& world, const OvaModel& model, int missing_item, uint64_t seed) {
  if (missing_item < 0 || missing_item >= world.n_items()) {
    throw IndexError("lemma_probe: item id out of range");
  }
  const auto& region_docs = world.docs_by_item[missing_item];
  const auto& region_queries = world.queries_by_item[missing_item];
  if (region_docs.empty() || region_queries.empty()) {
    throw ArgumentError("lemma_probe: region D_m is empty for item " +
                        std::to_string(missing_item));
  }

  // Controls share the query and match the document's structure
  // (item count, visible count) so score differences can only come from
  // relevance, which is what the probe is trying to detect.
  struct BucketKey {
    int n_items;
    int n_visible;
    bool operator==(const BucketKey& o) const {
      return n_items == o.n_items && n_visible == o.n_visible;
    }
  };
  auto bucket_id = [](int n_items, int n_visible) { return n_items * 1024 + n_visible; };
  std::unordered_map<int, std::vector<int>> buckets;
  std::vector<int> non_covering;
  for (const auto& d : world.documents) {
    if (std::binary_search(d.items.begin(), d.items.end(), missing_item)) continue;
    non_covering.push_back(d.id);
    buckets[bucket_id(static_cast<int>(d.items.size()), static_cast<int>(d.visible_items.size()))]
        .push_back(d.id);
  }
  if (non_covering.empty()) {
    throw ArgumentError("lemma_probe: every document covers the probed item");
  }

  std::vector<double> pos_scores, neg_scores;
  Rng rng = derive_rng(seed, {kStreamProbe, static_cast<uint64_t>(missing_item)});
  for (int q : region_queries) {
    Embedding e = embed(model.encoder, world.queries[q].surface);
    for (int d : region_docs) {
      pos_scores.push_back(model.score(e, d));
      const Document& doc = world.documents[d];
      auto it = buckets.find(bucket_id(static_cast<int>(doc.items.size()),
                                       static_cast<int>(doc.visible_items.size())));
      const std::vector<int>& pool = (it != buckets.end() && !it->second.empty())
                                         ? it->second
                                         : non_covering;
      int control = pool[rng.below_int(static_cast<int>(pool.size()))];
      neg_scores.push_back(model.score(e, control));
    }
  }

  // Mann-Whitney AUC with tie correction.
  struct Obs {
    double score;
    int label;
  };
  std::vector<Obs> all;
  all.reserve(pos_scores.size() + neg_scores.size());
  for (double s : pos_scores) all.push_back({s, 1});
  for (double s : neg_scores) all.push_back({s, 0});
  std::sort(all.begin(), all.end(), [](const Obs& a, const Obs& b) { return a.score < b.score; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].label == 1) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  double n_pos = static_cast<double>(pos_scores.size());
  double n_neg = static_cast<double>(neg_scores.size());
  return (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

}  // namespace skimlab

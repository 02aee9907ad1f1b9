#pragma once

#include "skimlab/interactions.hpp"
#include "skimlab/world.hpp"
#include "skimlab/xctrain.hpp"

namespace skimlab {

// Document-document co-click augmentation. S(d, d') = |Q_d ∩ Q_d'| /
// sqrt(|Q_d| |Q_d'|) over the clicked query sets; every clicked (q, d)
// spawns (q, d') for each d' with S >= threshold, weighted by S. Input
// pairs are never removed and keep their weights.
InteractionSet gandalf_augment(const InteractionSet& train, double threshold);

// Teacher soft-score augmentation: per train query, add the teacher's top_m
// documents whose sigmoid score clears min_score as weighted positives.
InteractionSet lever_augment(const InteractionSet& train, const OvaModel& teacher,
                             const World& world, int top_m, double min_score);

// lever_augment followed by IPS-weighted training; soft weights and inverse
// propensities multiply (w = weight / propensity). Propensities default to
// the frequency model fitted on the pre-augmentation train set.
OvaModel compose_lever_ips(const InteractionSet& train, const OvaModel& teacher,
                           const World& world, const TrainConfig& cfg, int top_m = 10,
                           double min_score = 0.5);

}  // namespace skimlab

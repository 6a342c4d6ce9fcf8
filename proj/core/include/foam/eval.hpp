#pragma once

#include "foam/dataset.hpp"
#include "foam/metrics.hpp"
#include "foam/params.hpp"

namespace foam {

struct EvalOptions {
    int d_th = 1;
    int max_steps = 24;
    int beam = 1;        // >1: follower proposals rescored by speaker log-prob
    int jobs = 1;        // parallel rollouts; aggregation stays order-independent
    int max_episodes = 0; // 0: every record of the split
};

// Greedy (or speaker-rescored beam) evaluation over a split's dataset
// records. Observations are unmasked at evaluation time.
EvalResult evaluate_split(const WorldData& world, Split split, const ParamSet& follower_params,
                          const ParamSet* speaker_params, const EvalOptions& opt);

} // namespace foam

#pragma once

#include <array>
#include <memory>
#include <span>

#include "foam/lang.hpp"
#include "foam/params.hpp"
#include "foam/rng.hpp"
#include "foam/world.hpp"

namespace foam {

// Instruction-following agent: GRU instruction encoder, GRU action decoder
// conditioned on observations, action projection.
struct FollowerConfig {
    int vocab = 40;
    int embed = 32;
    int hidden = 64;
    int obs_dim = 20; // feature_dim + heading one-hot

    int decoder_in() const { return obs_dim + kActionCount; }
};

// Canonical parameter order: embed, encoder gates, decoder gates, action head.
ParamSet init_follower_params(const FollowerConfig& cfg, Rng& rng);
FollowerConfig follower_config_from(const ParamSet& params);

struct EpisodeItem {
    const EnvironmentGraph* env = nullptr;
    Instruction instruction; // content tokens
    Route target;
};

struct EpisodeBatch {
    std::vector<EpisodeItem> items;
    const DropoutMask* mask = nullptr; // episode-wide, optional
};

// Mean action cross-entropy over batch and time, padding masked out. With
// teacher forcing the decoder consumes gold previous actions and states;
// without it, its own argmax under free-running movement rules.
TapeLoss follower_loss(const ParamSet& params, const FollowerConfig& cfg,
                       const EpisodeBatch& batch, bool teacher_forcing);

// Single-route follower cross-entropy built on an existing tape from
// externally supplied [1, embed] instruction-step nodes; returns the node id
// of the summed (not averaged) action cross-entropy. This is the follower
// half of the straight-through reconstruction graph.
int follower_route_ce_on_tape(Tape& t, const ParamSet& params, const std::vector<int>& leaf_ids,
                              const FollowerConfig& cfg, const EnvironmentGraph& env,
                              const Route& target, const std::vector<int>& embedded_steps,
                              const DropoutMask* mask, bool teacher_forcing);

enum class DecodeMode { greedy, sample };

struct RolloutResult {
    Route route;
    std::vector<float> step_logps;
    double total_logp = 0.0;
};

// Decodes until stop or max_steps with invalid forward moves masked out of
// the action distribution; the final allowed step admits only stop.
RolloutResult rollout(const ParamSet& params, const FollowerConfig& cfg,
                      const EnvironmentGraph& env, std::span<const int> instruction, int start,
                      int heading, DecodeMode mode, int max_steps, Rng* rng = nullptr,
                      const DropoutMask* mask = nullptr);

struct BeamCandidate {
    Route route;
    double logp = 0.0;
};

// Beam search over action sequences, sorted by follower log-prob. The greedy
// route is always retained among the candidates.
std::vector<BeamCandidate> beam_candidates(const ParamSet& params, const FollowerConfig& cfg,
                                           const EnvironmentGraph& env,
                                           std::span<const int> instruction, int start,
                                           int heading, int beam_width, int max_steps);

// Incremental single-episode decoder; rollout, beam search and the test
// oracles all step through this one path.
class FollowerDecoder {
public:
    FollowerDecoder(const ParamSet& params, const FollowerConfig& cfg,
                    const EnvironmentGraph& env, std::span<const int> instruction, int start,
                    int heading, int max_steps, const DropoutMask* mask);
    ~FollowerDecoder();
    FollowerDecoder(FollowerDecoder&&) noexcept;

    struct State {
        int node = 0;
        int heading = 0;
        int hidden = -1; // tape node id
        int prev_action = -1;
        int steps = 0;
        bool finished = false;
    };

    const State& initial() const;
    // Masked action distribution at `state`; invalid forward moves carry
    // exactly zero probability and the final step admits only stop.
    std::array<float, kActionCount> action_probs(const State& state);
    State advance(const State& state, int action);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace foam

#pragma once

#include <span>

#include "foam/lang.hpp"
#include "foam/params.hpp"
#include "foam/rng.hpp"
#include "foam/world.hpp"

namespace foam {

// Instruction generator: per-step route projection, GRU route encoder, GRU
// token decoder, output projection to the vocabulary.
struct SpeakerConfig {
    int vocab = 40;
    int embed = 32;
    int hidden = 64;
    int step_dim = 24; // obs_dim + action one-hot
    int bos_id = 1;
    int eos_id = 2;
    int max_len = 48;
};

// Canonical parameter order: step projection, encoder gates, token embedding,
// decoder gates, output head.
ParamSet init_speaker_params(const SpeakerConfig& cfg, Rng& rng);
// Recovers the dimensions from parameter shapes; bos/eos/max_len keep their
// defaults and stay caller-controlled.
SpeakerConfig speaker_config_from(const ParamSet& params);

struct SpeakerSample {
    Instruction tokens; // includes the terminating EOS when there is one
    std::vector<float> token_logps;
    float total_logp = 0.0f;
    bool ended_with_eos = false;

    Instruction content() const {
        Instruction c = tokens;
        if (ended_with_eos && !c.empty()) c.pop_back();
        return c;
    }
};

struct SpeakerBatchItem {
    const EnvironmentGraph* env = nullptr;
    Route route;
    Instruction instruction; // content tokens; EOS is appended internally
};

// Mean token-level cross-entropy of the gold instructions (with EOS) under
// teacher forcing, padding masked out.
TapeLoss speaker_loss(const ParamSet& params, const SpeakerConfig& cfg,
                      const std::vector<SpeakerBatchItem>& batch,
                      const DropoutMask* mask = nullptr);

// Autoregressive decoding. In sample mode tokens are drawn from the
// temperature-scaled softmax and log-probs are recorded from that same
// distribution; greedy mode records plain-softmax log-probs.
SpeakerSample speaker_generate(const ParamSet& params, const SpeakerConfig& cfg,
                               const EnvironmentGraph& env, const Route& route, bool sample,
                               float temperature, Rng* rng, const DropoutMask* mask = nullptr);

// Exact teacher-forced log P(tokens | route); tokens are scored verbatim, so
// include EOS for a complete sequence.
double speaker_score(const ParamSet& params, const SpeakerConfig& cfg,
                     const EnvironmentGraph& env, const Route& route, std::span<const int> tokens,
                     const DropoutMask* mask = nullptr);

// Mean over items of the total teacher-forced log-prob, on tape, for the
// REINFORCE-style speaker gradient. Items' instructions are scored verbatim.
TapeLoss speaker_logprob_mean(const ParamSet& params, const SpeakerConfig& cfg,
                              const std::vector<SpeakerBatchItem>& batch,
                              const DropoutMask* mask = nullptr);

// Teacher-forced forward on an existing tape; returns one [1, vocab] softmax
// node per token position. The straight-through reconstruction graph feeds
// these into the follower.
std::vector<int> speaker_probs_on_tape(Tape& t, const ParamSet& params,
                                       const std::vector<int>& leaf_ids, const SpeakerConfig& cfg,
                                       const EnvironmentGraph& env, const Route& route,
                                       std::span<const int> tokens, const DropoutMask* mask);

} // namespace foam

#pragma once

#include <functional>
#include <optional>

#include "foam/dataset.hpp"
#include "foam/follower.hpp"
#include "foam/metrics.hpp"
#include "foam/speaker.hpp"

namespace foam {

enum class TrainMode { foam, envdrop_baseline, supervised_only };
const char* train_mode_name(TrainMode m);
TrainMode train_mode_from(std::string_view name);

struct TrainConfig {
    float eta_f = 0.2f;  // follower learning rate
    float eta_s = 0.05f; // speaker learning rate
    // pretraining may run at its own rates; 0 falls back to eta_f / eta_s
    float pretrain_eta_f = 0.0f;
    float pretrain_eta_s = 0.0f;
    int batch_labeled = 8;
    int batch_aug = 8;
    int pretrain_steps = 5000;
    int total_steps = 20000; // includes pretraining; train cycles = total - pretrain
    int sup_per_cycle = 1;   // supervised follower updates per cycle
    bool recon_loss = true;
    bool bilevel_loss = true;
    float keep_prob = 0.7f;
    float clip_norm = 5.0f;
    float temperature = 1.0f;
    bool bt_sample = true; // sampled speaker decoding during back-translation
    bool aug_teacher_forcing = false;
    bool labeled_dropout = true; // environmental dropout on labeled training episodes
    uint64_t seed = 1;
    int follower_embed = 32;
    int follower_hidden = 64;
    int speaker_embed = 32;
    int speaker_hidden = 64;
    int max_instr_len = 48;
    int eval_max_steps = 24;
    int d_th = 1;
    int val_every = 200;
    int checkpoint_every = 0; // 0: final only
    int val_max_episodes = 0; // 0: all
    int route_min_nodes = 3;
    int route_max_nodes = 8;
    int divergence_window = 1000;
    double divergence_factor = 10.0;

    int train_cycles() const { return total_steps - pretrain_steps; }
};

// Full runs require positive learning rates; allow_zero_rates admits the
// degenerate rates used when exercising single steps in isolation.
void validate_train_config(const TrainConfig& cfg, TrainMode mode, bool allow_zero_rates = false);

FollowerConfig make_follower_config(const TrainConfig& cfg, const WorldData& world);
SpeakerConfig make_speaker_config(const TrainConfig& cfg, const WorldData& world);

// Sampled routes with their speaker instructions and the episode dropout mask.
struct AugmentedBatch {
    uint64_t batch_id = 0;
    std::vector<const EnvironmentGraph*> envs;
    std::vector<Route> routes;
    std::vector<SpeakerSample> samples;
    DropoutMask mask;
};

struct BtStepResult {
    uint64_t batch_id = 0;
    float loss_u = 0.0f;
    GradVector grad_u; // follower gradient of L_u at the pre-update parameters
    double grad_u_norm = 0.0;
    AugmentedBatch batch;
};

struct BiLevelStepReport {
    int step = 0;
    double loss_u = 0.0;
    double loss_l = 0.0;   // labeled loss at the updated follower
    double loss_sup = 0.0; // supervised step loss
    double h = 0.0;        // raw gradient-alignment reward
    double reward = 0.0;   // baseline-centered reward actually applied
    double norm_grad_u = 0.0;
    double norm_grad_l = 0.0;
    double norm_bilevel = 0.0;
    double norm_recon = 0.0;
    double norm_speaker = 0.0; // applied speaker gradient
};

AugmentedBatch make_augmented_batch(const WorldData& world, const ParamSet& speaker_params,
                                    const SpeakerConfig& scfg,
                                    std::vector<const EnvironmentGraph*> envs,
                                    std::vector<Route> routes, DropoutMask mask, bool sample,
                                    float temperature, Rng* rng, uint64_t batch_id);

EpisodeBatch follower_batch_from_aug(const AugmentedBatch& batch);

// Straight-through gradient of the back-translation loss with respect to the
// speaker: the follower consumes the sampled tokens' embeddings in the
// forward pass while the backward pass treats each sampled one-hot as the
// speaker's softmax output. Returns speaker-parameter gradients only.
GradMap straight_through_grad(const ParamSet& speaker_params, const ParamSet& follower_params,
                              const SpeakerConfig& scfg, const FollowerConfig& fcfg,
                              const AugmentedBatch& batch, bool teacher_forcing);

// Gradient of the mean teacher-forced log-prob of the sampled instructions.
GradMap speaker_logprob_grads(const ParamSet& speaker_params, const SpeakerConfig& scfg,
                              const AugmentedBatch& batch);

// Total speaker gradient h*st - h*logp over the speaker parameter set; a null
// term is simply omitted.
GradMap compose_speaker_grad(const ParamSet& speaker_params, double h, const GradMap* logp_grad,
                             const GradMap* st_grad);

struct SpeakerStepOutcome {
    BiLevelStepReport report; // loss_l, h and gradient norms filled in
    GradMap speaker_grad;
};

// The bi-level speaker update sans the SGD application: labeled-gradient
// reward h, REINFORCE-style term, optional straight-through reconstruction
// term. grad_batch_id must identify the batch grad_u was computed on.
// `baseline` is subtracted from h before either term is weighted; at desk
// scale the post-update cosine carries a sizeable constant curvature offset,
// so the trainer passes a running mean here to recenter the reward.
SpeakerStepOutcome foam_speaker_update(const TrainConfig& cfg, const ParamSet& speaker_params,
                                       const SpeakerConfig& scfg, const ParamSet& follower_new,
                                       const FollowerConfig& fcfg, const GradVector& grad_u,
                                       uint64_t grad_batch_id, const AugmentedBatch& batch,
                                       const EpisodeBatch& labeled_batch, double baseline = 0.0);

// Orchestrates one model pair through back-translation / bi-level cycles.
class Trainer {
public:
    Trainer(const WorldData& world, TrainConfig cfg, TrainMode mode, ParamSet follower_params,
            ParamSet speaker_params);

    // One cycle: augmented follower step, speaker step (foam), then the
    // configured number of supervised follower steps.
    BiLevelStepReport run_cycle();

    BtStepResult bt_follower_step();
    BiLevelStepReport foam_speaker_step(const BtStepResult& bt);
    double supervised_follower_step();

    EpisodeBatch sample_labeled_batch(Rng& rng, int count) const;
    EvalResult validate(Split split) const;

    int step() const { return step_; }
    int augmented_batches() const { return aug_batches_; }
    const ParamSet& follower_params() const { return follower_; }
    const ParamSet& speaker_params() const { return speaker_; }
    ParamSet& follower_params() { return follower_; }
    ParamSet& speaker_params() { return speaker_; }
    const FollowerConfig& follower_config() const { return fcfg_; }
    const SpeakerConfig& speaker_config() const { return scfg_; }

    // run-state snapshot for exact resume
    std::map<std::string, uint64_t> rng_states() const;
    void restore_rng_states(const std::map<std::string, uint64_t>& states);
    void set_step(int step) { step_ = step; }
    void set_next_batch_id(uint64_t id) { next_batch_id_ = id; }
    uint64_t next_batch_id() const { return next_batch_id_; }

private:
    const WorldData& world_;
    TrainConfig cfg_;
    TrainMode mode_;
    FollowerConfig fcfg_;
    SpeakerConfig scfg_;
    ParamSet follower_;
    ParamSet speaker_;
    std::vector<const EnvironmentGraph*> train_envs_;
    Rng bt_routes_rng_;
    Rng dropout_rng_;
    Rng sample_rng_;
    Rng sup_rng_;
    Rng sup_dropout_rng_;
    Rng reward_rng_;
    uint64_t next_batch_id_ = 1;
    int step_ = 0;
    int aug_batches_ = 0;
    double h_baseline_ = 0.0; // running mean of the raw reward
    bool baseline_started_ = false;

public:
    double h_baseline() const { return h_baseline_; }
    void set_h_baseline(double b, bool started) {
        h_baseline_ = b;
        baseline_started_ = started;
    }
    bool baseline_started() const { return baseline_started_; }
};

struct PretrainResult {
    ParamSet params;    // best-by-validation
    double best_metric = 0.0;
    int best_step = 0;
    std::vector<std::pair<int, double>> val_log;
};

// Supervised pretraining of one side. Follower validation is val-seen success
// rate (higher better); speaker validation is val-seen loss (lower better).
PretrainResult pretrain(const WorldData& world, const TrainConfig& cfg, bool follower_side);

ParamSet init_follower_for(const WorldData& world, const TrainConfig& cfg);
ParamSet init_speaker_for(const WorldData& world, const TrainConfig& cfg);

struct TrainRunSummary {
    int steps_done = 0;
    int aug_batches = 0;
    double mean_h = 0.0;
    double std_h = 0.0;
    EvalResult final_val_seen;
    EvalResult final_val_unseen;
};

// Runs the train cycles and writes the run directory: steps.jsonl, val.jsonl,
// checkpoints/ and state files. With resume=true, continues a previous run in
// place, with exact step numbering and RNG state.
TrainRunSummary train_run(const WorldData& world, const TrainConfig& cfg, TrainMode mode,
                          ParamSet follower0, ParamSet speaker0, const std::string& run_dir,
                          bool resume);

} // namespace foam

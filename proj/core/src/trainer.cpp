#include "foam/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "foam/checkpoint.hpp"
#include "foam/eval.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace foam {

const char* train_mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::foam: return "foam";
        case TrainMode::envdrop_baseline: return "envdrop-baseline";
        case TrainMode::supervised_only: return "supervised-only";
    }
    return "?";
}

TrainMode train_mode_from(std::string_view name) {
    if (name == "foam") return TrainMode::foam;
    if (name == "envdrop-baseline") return TrainMode::envdrop_baseline;
    if (name == "supervised-only") return TrainMode::supervised_only;
    throw Error::config("unknown training mode: " + std::string(name));
}

void validate_train_config(const TrainConfig& cfg, TrainMode mode, bool allow_zero_rates) {
    if (!allow_zero_rates && (!(cfg.eta_f > 0.0f) || !(cfg.eta_s > 0.0f))) {
        throw Error::config("learning rates must be positive");
    }
    if (cfg.eta_f < 0.0f || cfg.eta_s < 0.0f) {
        throw Error::config("learning rates must not be negative");
    }
    if (cfg.total_steps < cfg.pretrain_steps) {
        throw Error::config("total_steps must be >= pretrain_steps");
    }
    if (cfg.batch_labeled < 1 || cfg.batch_aug < 1) {
        throw Error::config("batch sizes must be positive");
    }
    if (!(cfg.keep_prob > 0.0f) || cfg.keep_prob > 1.0f) {
        throw Error::config("keep_prob must lie in (0, 1]");
    }
    if (!(cfg.temperature > 0.0f)) throw Error::config("temperature must be positive");
    if (mode == TrainMode::foam && !cfg.recon_loss && !cfg.bilevel_loss) {
        throw Error::config("foam mode needs at least one speaker loss enabled "
                            "(--no-recon and --no-bilevel exclude each other)");
    }
    if (mode == TrainMode::supervised_only && cfg.sup_per_cycle < 1) {
        throw Error::config("supervised-only mode needs sup_per_cycle >= 1");
    }
    if (cfg.sup_per_cycle < 0) throw Error::config("sup_per_cycle must be >= 0");
    if (cfg.route_min_nodes < 2 || cfg.route_max_nodes < cfg.route_min_nodes) {
        throw Error::config("bad route length bounds");
    }
}

FollowerConfig make_follower_config(const TrainConfig& cfg, const WorldData& world) {
    FollowerConfig f;
    f.vocab = world.vocab.size();
    f.embed = cfg.follower_embed;
    f.hidden = cfg.follower_hidden;
    f.obs_dim = world.options.feature_dim + kHeadingCount;
    return f;
}

SpeakerConfig make_speaker_config(const TrainConfig& cfg, const WorldData& world) {
    SpeakerConfig s;
    s.vocab = world.vocab.size();
    s.embed = cfg.speaker_embed;
    s.hidden = cfg.speaker_hidden;
    s.step_dim = world.options.feature_dim + kHeadingCount + kActionCount;
    s.bos_id = Vocabulary::bos_id;
    s.eos_id = Vocabulary::eos_id;
    s.max_len = cfg.max_instr_len;
    return s;
}

ParamSet init_follower_for(const WorldData& world, const TrainConfig& cfg) {
    Rng rng(stream_seed(cfg.seed, "init-follower"));
    return init_follower_params(make_follower_config(cfg, world), rng);
}

ParamSet init_speaker_for(const WorldData& world, const TrainConfig& cfg) {
    Rng rng(stream_seed(cfg.seed, "init-speaker"));
    return init_speaker_params(make_speaker_config(cfg, world), rng);
}

AugmentedBatch make_augmented_batch(const WorldData& world, const ParamSet& speaker_params,
                                    const SpeakerConfig& scfg,
                                    std::vector<const EnvironmentGraph*> envs,
                                    std::vector<Route> routes, DropoutMask mask, bool sample,
                                    float temperature, Rng* rng, uint64_t batch_id) {
    (void)world;
    if (envs.size() != routes.size() || envs.empty()) {
        throw Error::data("make_augmented_batch: route/env mismatch");
    }
    AugmentedBatch batch;
    batch.batch_id = batch_id;
    batch.envs = std::move(envs);
    batch.routes = std::move(routes);
    batch.mask = std::move(mask);
    batch.samples.reserve(batch.routes.size());
    for (size_t i = 0; i < batch.routes.size(); ++i) {
        batch.samples.push_back(speaker_generate(speaker_params, scfg, *batch.envs[i],
                                                 batch.routes[i], sample, temperature, rng,
                                                 &batch.mask));
    }
    return batch;
}

EpisodeBatch follower_batch_from_aug(const AugmentedBatch& batch) {
    EpisodeBatch eb;
    eb.mask = &batch.mask;
    for (size_t i = 0; i < batch.routes.size(); ++i) {
        EpisodeItem item;
        item.env = batch.envs[i];
        item.instruction = batch.samples[i].content();
        item.target = batch.routes[i];
        eb.items.push_back(std::move(item));
    }
    return eb;
}

GradMap straight_through_grad(const ParamSet& speaker_params, const ParamSet& follower_params,
                              const SpeakerConfig& scfg, const FollowerConfig& fcfg,
                              const AugmentedBatch& batch, bool teacher_forcing) {
    for (const SpeakerSample& s : batch.samples) {
        if (s.token_logps.size() != s.tokens.size()) {
            throw Error::data("straight_through_grad: batch lacks recorded speaker "
                              "distributions");
        }
    }
    int64_t total_actions = 0;
    for (const Route& r : batch.routes) total_actions += static_cast<int64_t>(r.actions.size());

    GradMap acc;
    for (const auto& [name, t] : speaker_params.items) acc[name] = Tensor::zeros(t.shape);

    const int follower_embed_index = follower_params.index_of("follower.embed");
    if (follower_embed_index < 0) throw Error::internal("follower.embed missing");

    for (size_t k = 0; k < batch.routes.size(); ++k) {
        const SpeakerSample& sample = batch.samples[k];
        const Instruction content = sample.content();

        Tape t;
        const std::vector<int> sp_leafs = speaker_params.register_on(t);
        const std::vector<int> fo_leafs = follower_params.register_on(t);
        const std::vector<int> probs = speaker_probs_on_tape(
            t, speaker_params, sp_leafs, scfg, *batch.envs[k], batch.routes[k], sample.tokens,
            &batch.mask);

        std::vector<int> embedded;
        embedded.reserve(content.size());
        for (size_t i = 0; i < content.size(); ++i) {
            const std::vector<int> one{content[i]};
            const int st = t.straight_through(probs[i], one);
            embedded.push_back(t.matmul(st, fo_leafs[static_cast<size_t>(follower_embed_index)]));
        }

        const int ce_sum = follower_route_ce_on_tape(t, follower_params, fo_leafs, fcfg,
                                                     *batch.envs[k], batch.routes[k], embedded,
                                                     &batch.mask, teacher_forcing);
        const int loss = t.scale(ce_sum, 1.0f / static_cast<float>(total_actions));
        GradMap grads = t.backward(loss);
        for (auto& [name, g] : acc) {
            const Tensor& add = grads.at(name);
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += add.data[i];
        }
    }
    return acc;
}

GradMap speaker_logprob_grads(const ParamSet& speaker_params, const SpeakerConfig& scfg,
                              const AugmentedBatch& batch) {
    std::vector<SpeakerBatchItem> items;
    items.reserve(batch.routes.size());
    for (size_t i = 0; i < batch.routes.size(); ++i) {
        SpeakerBatchItem item;
        item.env = batch.envs[i];
        item.route = batch.routes[i];
        item.instruction = batch.samples[i].tokens; // scored verbatim, EOS included
        items.push_back(std::move(item));
    }
    TapeLoss lp = speaker_logprob_mean(speaker_params, scfg, items, &batch.mask);
    return lp.backward();
}

GradMap compose_speaker_grad(const ParamSet& speaker_params, double h, const GradMap* logp_grad,
                             const GradMap* st_grad) {
    GradMap out;
    const float hf = static_cast<float>(h);
    for (const auto& [name, t] : speaker_params.items) {
        Tensor g = Tensor::zeros(t.shape);
        if (logp_grad != nullptr) {
            const Tensor& lg = logp_grad->at(name);
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] -= hf * lg.data[i];
        }
        if (st_grad != nullptr) {
            const Tensor& sg = st_grad->at(name);
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += hf * sg.data[i];
        }
        out[name] = std::move(g);
    }
    return out;
}

SpeakerStepOutcome foam_speaker_update(const TrainConfig& cfg, const ParamSet& speaker_params,
                                       const SpeakerConfig& scfg, const ParamSet& follower_new,
                                       const FollowerConfig& fcfg, const GradVector& grad_u,
                                       uint64_t grad_batch_id, const AugmentedBatch& batch,
                                       const EpisodeBatch& labeled_batch, double baseline) {
    if (grad_batch_id != batch.batch_id) {
        throw Error::data("foam_speaker_update: gradient was computed on a different "
                          "augmented batch");
    }
    SpeakerStepOutcome out;

    TapeLoss ll = follower_loss(follower_new, fcfg, labeled_batch, /*teacher_forcing=*/true);
    GradMap gl = ll.backward();
    const GradVector gl_flat = flatten_grads(follower_new, gl);
    const double h = cosine_similarity(gl_flat, grad_u);
    const double reward = h - baseline;

    out.report.loss_l = ll.value();
    out.report.h = h;
    out.report.reward = reward;
    out.report.norm_grad_l = grad_vector_norm(gl_flat);
    out.report.norm_grad_u = grad_vector_norm(grad_u);

    GradMap logp, st;
    if (cfg.bilevel_loss) {
        logp = speaker_logprob_grads(speaker_params, scfg, batch);
        GradMap term = compose_speaker_grad(speaker_params, reward, &logp, nullptr);
        out.report.norm_bilevel = grad_map_norm(term);
    }
    if (cfg.recon_loss) {
        st = straight_through_grad(speaker_params, follower_new, scfg, fcfg, batch,
                                   cfg.aug_teacher_forcing);
        GradMap term = compose_speaker_grad(speaker_params, reward, nullptr, &st);
        out.report.norm_recon = grad_map_norm(term);
    }
    out.speaker_grad = compose_speaker_grad(speaker_params, reward,
                                            cfg.bilevel_loss ? &logp : nullptr,
                                            cfg.recon_loss ? &st : nullptr);
    out.report.norm_speaker = grad_map_norm(out.speaker_grad);
    return out;
}

Trainer::Trainer(const WorldData& world, TrainConfig cfg, TrainMode mode, ParamSet follower_params,
                 ParamSet speaker_params)
    : world_(world),
      cfg_(cfg),
      mode_(mode),
      fcfg_(make_follower_config(cfg, world)),
      scfg_(make_speaker_config(cfg, world)),
      follower_(std::move(follower_params)),
      speaker_(std::move(speaker_params)),
      train_envs_(world.envs_of(Split::train)),
      bt_routes_rng_(stream_seed(cfg.seed, "bt-routes")),
      dropout_rng_(stream_seed(cfg.seed, "dropout")),
      sample_rng_(stream_seed(cfg.seed, "speaker-sampling")),
      sup_rng_(stream_seed(cfg.seed, "sup-batch")),
      sup_dropout_rng_(stream_seed(cfg.seed, "sup-dropout")),
      reward_rng_(stream_seed(cfg.seed, "reward-batch")) {
    validate_train_config(cfg_, mode_, /*allow_zero_rates=*/true);
    if (train_envs_.empty()) throw Error::data("trainer: world has no train environments");
    if (world.train.empty()) throw Error::data("trainer: empty labeled training set");
}

EpisodeBatch Trainer::sample_labeled_batch(Rng& rng, int count) const {
    const std::vector<DatasetRecord>& data = world_.train;
    EpisodeBatch batch;
    for (int i = 0; i < count; ++i) {
        const DatasetRecord& rec = data[rng.uniform_int(static_cast<int>(data.size()))];
        EpisodeItem item;
        item.env = &world_.env(rec.env_id);
        item.instruction = rec.tokens;
        item.target = rec.route;
        batch.items.push_back(std::move(item));
    }
    return batch;
}

BtStepResult Trainer::bt_follower_step() {
    DropoutMask mask =
        sample_dropout_mask(world_.options.feature_dim, cfg_.keep_prob, dropout_rng_);
    std::vector<const EnvironmentGraph*> envs;
    std::vector<Route> routes;
    for (int i = 0; i < cfg_.batch_aug; ++i) {
        const EnvironmentGraph* env =
            train_envs_[bt_routes_rng_.uniform_int(static_cast<int>(train_envs_.size()))];
        envs.push_back(env);
        routes.push_back(
            sample_route(*env, bt_routes_rng_, cfg_.route_min_nodes, cfg_.route_max_nodes));
    }
    AugmentedBatch batch =
        make_augmented_batch(world_, speaker_, scfg_, std::move(envs), std::move(routes),
                             std::move(mask), cfg_.bt_sample, cfg_.temperature, &sample_rng_,
                             next_batch_id_++);
    ++aug_batches_;

    const EpisodeBatch eb = follower_batch_from_aug(batch);
    TapeLoss loss = follower_loss(follower_, fcfg_, eb, cfg_.aug_teacher_forcing);
    GradMap grads = loss.backward();

    BtStepResult out;
    out.batch_id = batch.batch_id;
    out.loss_u = loss.value();
    out.grad_u = flatten_grads(follower_, grads);
    out.grad_u_norm = grad_vector_norm(out.grad_u);
    out.batch = std::move(batch);
    if (cfg_.eta_f > 0.0f) sgd_step(follower_, grads, cfg_.eta_f, cfg_.clip_norm);
    return out;
}

BiLevelStepReport Trainer::foam_speaker_step(const BtStepResult& bt) {
    const EpisodeBatch labeled = sample_labeled_batch(reward_rng_, cfg_.batch_labeled);
    SpeakerStepOutcome out =
        foam_speaker_update(cfg_, speaker_, scfg_, follower_, fcfg_, bt.grad_u, bt.batch_id,
                            bt.batch, labeled, baseline_started_ ? h_baseline_ : 0.0);
    if (cfg_.eta_s > 0.0f) sgd_step(speaker_, out.speaker_grad, cfg_.eta_s, cfg_.clip_norm);
    // running mean of the raw reward; the first step seeds it
    constexpr double kBaselineDecay = 0.9;
    h_baseline_ = baseline_started_ ? kBaselineDecay * h_baseline_ +
                                          (1.0 - kBaselineDecay) * out.report.h
                                    : out.report.h;
    baseline_started_ = true;
    return out.report;
}

double Trainer::supervised_follower_step() {
    EpisodeBatch batch = sample_labeled_batch(sup_rng_, cfg_.batch_labeled);
    DropoutMask mask;
    if (cfg_.labeled_dropout) {
        mask = sample_dropout_mask(world_.options.feature_dim, cfg_.keep_prob, sup_dropout_rng_);
        batch.mask = &mask;
    }
    TapeLoss loss = follower_loss(follower_, fcfg_, batch, /*teacher_forcing=*/true);
    GradMap grads = loss.backward();
    if (cfg_.eta_f > 0.0f) sgd_step(follower_, grads, cfg_.eta_f, cfg_.clip_norm);
    return loss.value();
}

BiLevelStepReport Trainer::run_cycle() {
    BiLevelStepReport rep;
    rep.step = ++step_;
    if (mode_ != TrainMode::supervised_only) {
        BtStepResult bt = bt_follower_step();
        rep.loss_u = bt.loss_u;
        rep.norm_grad_u = bt.grad_u_norm;
        if (mode_ == TrainMode::foam) {
            BiLevelStepReport sp = foam_speaker_step(bt);
            rep.loss_l = sp.loss_l;
            rep.h = sp.h;
            rep.reward = sp.reward;
            rep.norm_grad_l = sp.norm_grad_l;
            rep.norm_bilevel = sp.norm_bilevel;
            rep.norm_recon = sp.norm_recon;
            rep.norm_speaker = sp.norm_speaker;
        }
    }
    for (int i = 0; i < cfg_.sup_per_cycle; ++i) rep.loss_sup = supervised_follower_step();
    return rep;
}

EvalResult Trainer::validate(Split split) const {
    EvalOptions opt;
    opt.d_th = cfg_.d_th;
    opt.max_steps = cfg_.eval_max_steps;
    opt.max_episodes = cfg_.val_max_episodes;
    return evaluate_split(world_, split, follower_, nullptr, opt);
}

std::map<std::string, uint64_t> Trainer::rng_states() const {
    return {
        {"bt-routes", bt_routes_rng_.state()},     {"dropout", dropout_rng_.state()},
        {"speaker-sampling", sample_rng_.state()}, {"sup-batch", sup_rng_.state()},
        {"sup-dropout", sup_dropout_rng_.state()}, {"reward-batch", reward_rng_.state()},
    };
}

void Trainer::restore_rng_states(const std::map<std::string, uint64_t>& states) {
    bt_routes_rng_.set_state(states.at("bt-routes"));
    dropout_rng_.set_state(states.at("dropout"));
    sample_rng_.set_state(states.at("speaker-sampling"));
    sup_rng_.set_state(states.at("sup-batch"));
    sup_dropout_rng_.set_state(states.at("sup-dropout"));
    reward_rng_.set_state(states.at("reward-batch"));
}

PretrainResult pretrain(const WorldData& world, const TrainConfig& cfg, bool follower_side) {
    if (world.train.empty()) throw Error::data("pretrain: empty labeled training set");
    PretrainResult out;
    const FollowerConfig fcfg = make_follower_config(cfg, world);
    const SpeakerConfig scfg = make_speaker_config(cfg, world);
    ParamSet params = follower_side ? init_follower_for(world, cfg) : init_speaker_for(world, cfg);
    const float lr_f = cfg.pretrain_eta_f > 0.0f ? cfg.pretrain_eta_f : cfg.eta_f;
    const float lr_s = cfg.pretrain_eta_s > 0.0f ? cfg.pretrain_eta_s : cfg.eta_s;
    Rng batch_rng(stream_seed(cfg.seed, follower_side ? "pretrain-follower" : "pretrain-speaker"));
    Rng dropout_rng(stream_seed(cfg.seed, follower_side ? "pretrain-follower-dropout"
                                                        : "pretrain-speaker-dropout"));

    // validation batch for the speaker side is the full val-seen set
    std::vector<SpeakerBatchItem> speaker_val;
    if (!follower_side) {
        for (const DatasetRecord& rec : world.val_seen) {
            SpeakerBatchItem item;
            item.env = &world.env(rec.env_id);
            item.route = rec.route;
            item.instruction = rec.tokens;
            speaker_val.push_back(std::move(item));
        }
        if (speaker_val.empty()) throw Error::data("pretrain: empty val-seen set");
    }

    auto validate_now = [&](int step) {
        double metric;
        if (follower_side) {
            EvalOptions opt;
            opt.d_th = cfg.d_th;
            opt.max_steps = cfg.eval_max_steps;
            opt.max_episodes = cfg.val_max_episodes;
            WorldData const& w = world;
            metric = evaluate_split(w, Split::val_seen, params, nullptr, opt).sr;
        } else {
            metric = -speaker_loss(params, scfg, speaker_val).value(); // higher is better
        }
        out.val_log.emplace_back(step, follower_side ? metric : -metric);
        if (out.val_log.size() == 1 || metric > out.best_metric) {
            out.best_metric = metric;
            out.best_step = step;
            out.params = params;
        }
    };

    if (cfg.pretrain_steps == 0) {
        out.params = params;
        out.best_step = 0;
        return out;
    }

    double initial_loss = 0.0;
    int diverged_for = 0;
    for (int step = 1; step <= cfg.pretrain_steps; ++step) {
        double loss_value;
        DropoutMask mask;
        const DropoutMask* mask_ptr = nullptr;
        if (cfg.labeled_dropout) {
            mask = sample_dropout_mask(world.options.feature_dim, cfg.keep_prob, dropout_rng);
            mask_ptr = &mask;
        }
        if (follower_side) {
            EpisodeBatch batch;
            batch.mask = mask_ptr;
            for (int i = 0; i < cfg.batch_labeled; ++i) {
                const DatasetRecord& rec =
                    world.train[batch_rng.uniform_int(static_cast<int>(world.train.size()))];
                EpisodeItem item;
                item.env = &world.env(rec.env_id);
                item.instruction = rec.tokens;
                item.target = rec.route;
                batch.items.push_back(std::move(item));
            }
            TapeLoss loss = follower_loss(params, fcfg, batch, /*teacher_forcing=*/true);
            GradMap grads = loss.backward();
            sgd_step(params, grads, lr_f, cfg.clip_norm);
            loss_value = loss.value();
        } else {
            std::vector<SpeakerBatchItem> batch;
            for (int i = 0; i < cfg.batch_labeled; ++i) {
                const DatasetRecord& rec =
                    world.train[batch_rng.uniform_int(static_cast<int>(world.train.size()))];
                SpeakerBatchItem item;
                item.env = &world.env(rec.env_id);
                item.route = rec.route;
                item.instruction = rec.tokens;
                batch.push_back(std::move(item));
            }
            TapeLoss loss = speaker_loss(params, scfg, batch, mask_ptr);
            GradMap grads = loss.backward();
            sgd_step(params, grads, lr_s, cfg.clip_norm);
            loss_value = loss.value();
        }

        if (step == 1) initial_loss = loss_value;
        diverged_for = loss_value > cfg.divergence_factor * initial_loss ? diverged_for + 1 : 0;
        if (diverged_for >= cfg.divergence_window) {
            throw Error::numeric("pretrain diverged: loss " + std::to_string(loss_value) +
                                 " stayed above " + std::to_string(cfg.divergence_factor) +
                                 "x the initial loss for " + std::to_string(diverged_for) +
                                 " steps");
        }
        if (cfg.val_every > 0 && (step % cfg.val_every == 0 || step == cfg.pretrain_steps)) {
            validate_now(step);
        }
    }
    if (out.val_log.empty()) {
        out.params = params;
        out.best_step = cfg.pretrain_steps;
    }
    return out;
}

namespace {

ordered_json report_to_json(const BiLevelStepReport& r, TrainMode mode) {
    ordered_json j;
    j["step"] = r.step;
    j["mode"] = train_mode_name(mode);
    j["loss_u"] = r.loss_u;
    j["loss_l"] = r.loss_l;
    j["loss_sup"] = r.loss_sup;
    j["h"] = r.h;
    j["reward"] = r.reward;
    j["norm_grad_u"] = r.norm_grad_u;
    j["norm_grad_l"] = r.norm_grad_l;
    j["norm_bilevel"] = r.norm_bilevel;
    j["norm_recon"] = r.norm_recon;
    j["norm_speaker"] = r.norm_speaker;
    return j;
}

ordered_json eval_to_json(int step, const EvalResult& r) {
    ordered_json j;
    j["step"] = step;
    j["split"] = r.split;
    j["episodes"] = r.episodes;
    j["sr"] = r.sr;
    j["spl"] = r.spl;
    j["ne"] = r.ne;
    j["ndtw"] = r.ndtw;
    j["sdtw"] = r.sdtw;
    return j;
}

std::string step_tag(int step) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", step);
    return buf;
}

void save_state(const fs::path& path, const Trainer& trainer) {
    ordered_json j;
    j["step"] = trainer.step();
    j["next_batch_id"] = trainer.next_batch_id();
    j["aug_batches"] = trainer.augmented_batches();
    j["h_baseline"] = trainer.h_baseline();
    j["baseline_started"] = trainer.baseline_started();
    ordered_json rng;
    for (const auto& [name, state] : trainer.rng_states()) rng[name] = state;
    j["rng"] = std::move(rng);
    std::ofstream os(path, std::ios::trunc);
    os << j.dump(2) << '\n';
}

} // namespace

TrainRunSummary train_run(const WorldData& world, const TrainConfig& cfg, TrainMode mode,
                          ParamSet follower0, ParamSet speaker0, const std::string& run_dir,
                          bool resume) {
    validate_train_config(cfg, mode);
    const fs::path root(run_dir);
    fs::create_directories(root / "checkpoints");

    Trainer trainer(world, cfg, mode, std::move(follower0), std::move(speaker0));
    int start_step = 0;
    if (resume) {
        const fs::path state_path = root / "state_final.json";
        if (!fs::exists(state_path)) {
            throw Error::data("resume: no state_final.json in " + run_dir);
        }
        ordered_json j;
        {
            std::ifstream is(state_path);
            is >> j;
        }
        start_step = j.at("step").get<int>();
        trainer.set_step(start_step);
        trainer.set_next_batch_id(j.at("next_batch_id").get<uint64_t>());
        trainer.set_h_baseline(j.at("h_baseline").get<double>(),
                               j.at("baseline_started").get<bool>());
        std::map<std::string, uint64_t> states;
        for (const auto& [name, v] : j.at("rng").items()) states[name] = v.get<uint64_t>();
        trainer.restore_rng_states(states);
        trainer.follower_params() =
            load_checkpoint((root / "checkpoints" / "follower_final.bin").string());
        trainer.speaker_params() =
            load_checkpoint((root / "checkpoints" / "speaker_final.bin").string());
    }

    std::ofstream steps_log(root / "steps.jsonl", resume ? std::ios::app : std::ios::trunc);
    std::ofstream val_log(root / "val.jsonl", resume ? std::ios::app : std::ios::trunc);
    if (!steps_log || !val_log) throw Error::data("train: cannot write logs in " + run_dir);

    const int cycles = cfg.train_cycles();
    TrainRunSummary summary;
    std::vector<double> h_values;
    double initial_loss = 0.0;
    bool have_initial = false;
    int diverged_for = 0;

    for (int step = start_step + 1; step <= cycles; ++step) {
        const BiLevelStepReport rep = trainer.run_cycle();
        steps_log << report_to_json(rep, mode).dump() << '\n';
        if (mode == TrainMode::foam) h_values.push_back(rep.h);

        const double guard_loss = cfg.sup_per_cycle > 0 ? rep.loss_sup : rep.loss_u;
        if (!have_initial) {
            initial_loss = guard_loss;
            have_initial = true;
        }
        diverged_for = guard_loss > cfg.divergence_factor * initial_loss ? diverged_for + 1 : 0;
        if (diverged_for >= cfg.divergence_window) {
            throw Error::numeric("train diverged at step " + std::to_string(step));
        }

        if (cfg.val_every > 0 && (step % cfg.val_every == 0 || step == cycles)) {
            for (Split split : {Split::val_seen, Split::val_unseen}) {
                const EvalResult r = trainer.validate(split);
                val_log << eval_to_json(step, r).dump() << '\n';
                if (step == cycles) {
                    (split == Split::val_seen ? summary.final_val_seen
                                              : summary.final_val_unseen) = r;
                }
            }
        }
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
            save_checkpoint((root / "checkpoints" / ("follower_" + step_tag(step) + ".bin"))
                                .string(),
                            trainer.follower_params());
            save_checkpoint((root / "checkpoints" / ("speaker_" + step_tag(step) + ".bin"))
                                .string(),
                            trainer.speaker_params());
            save_state(root / ("state_" + step_tag(step) + ".json"), trainer);
        }
    }

    save_checkpoint((root / "checkpoints" / "follower_final.bin").string(),
                    trainer.follower_params());
    save_checkpoint((root / "checkpoints" / "speaker_final.bin").string(),
                    trainer.speaker_params());
    save_state(root / "state_final.json", trainer);

    summary.steps_done = trainer.step();
    summary.aug_batches = trainer.augmented_batches();
    if (!h_values.empty()) {
        double mean = 0.0;
        for (double h : h_values) mean += h;
        mean /= static_cast<double>(h_values.size());
        double var = 0.0;
        for (double h : h_values) var += (h - mean) * (h - mean);
        var = h_values.size() > 1 ? var / static_cast<double>(h_values.size() - 1) : 0.0;
        summary.mean_h = mean;
        summary.std_h = std::sqrt(var);
    }

    // final validation even when val_every never fired on the last step
    if (summary.final_val_seen.episodes == 0) {
        summary.final_val_seen = trainer.validate(Split::val_seen);
        summary.final_val_unseen = trainer.validate(Split::val_unseen);
    }

    ordered_json sj;
    sj["mode"] = train_mode_name(mode);
    sj["steps"] = summary.steps_done;
    sj["aug_batches"] = summary.aug_batches;
    sj["mean_h"] = summary.mean_h;
    sj["std_h"] = summary.std_h;
    sj["val_seen_sr"] = summary.final_val_seen.sr;
    sj["val_unseen_sr"] = summary.final_val_unseen.sr;
    {
        std::ofstream os(root / "summary.json", std::ios::trunc);
        os << sj.dump(2) << '\n';
    }
    return summary;
}

} // namespace foam

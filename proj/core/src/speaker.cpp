#include "foam/speaker.hpp"

#include <algorithm>
#include <cmath>

#include "model_util.hpp"

namespace foam {

using detail::GruIds;

ParamSet init_speaker_params(const SpeakerConfig& cfg, Rng& rng) {
    ParamSet ps;
    detail::add_param(ps, "speaker.step.w", {cfg.step_dim, cfg.embed}, rng);
    detail::add_param(ps, "speaker.step.b", {cfg.embed}, rng);
    detail::add_gru(ps, "speaker.enc", cfg.embed, cfg.hidden, rng);
    detail::add_param(ps, "speaker.embed", {cfg.vocab, cfg.embed}, rng);
    detail::add_gru(ps, "speaker.dec", cfg.embed, cfg.hidden, rng);
    detail::add_param(ps, "speaker.out.w", {cfg.hidden, cfg.vocab}, rng);
    detail::add_param(ps, "speaker.out.b", {cfg.vocab}, rng);
    return ps;
}

SpeakerConfig speaker_config_from(const ParamSet& params) {
    SpeakerConfig cfg;
    const Tensor& step_w = params.at("speaker.step.w");
    const Tensor& out_w = params.at("speaker.out.w");
    cfg.step_dim = step_w.shape[0];
    cfg.embed = step_w.shape[1];
    cfg.hidden = out_w.shape[0];
    cfg.vocab = out_w.shape[1];
    return cfg;
}

namespace {

struct SpeakerIds {
    int step_w, step_b;
    GruIds enc, dec;
    int embed, out_w, out_b;
};

SpeakerIds resolve(const ParamSet& ps, const std::vector<int>& leafs) {
    SpeakerIds ids;
    ids.step_w = detail::resolve_param(ps, leafs, "speaker.step.w");
    ids.step_b = detail::resolve_param(ps, leafs, "speaker.step.b");
    ids.enc = detail::resolve_gru(ps, leafs, "speaker.enc");
    ids.embed = detail::resolve_param(ps, leafs, "speaker.embed");
    ids.dec = detail::resolve_gru(ps, leafs, "speaker.dec");
    ids.out_w = detail::resolve_param(ps, leafs, "speaker.out.w");
    ids.out_b = detail::resolve_param(ps, leafs, "speaker.out.b");
    return ids;
}

// Per-step route features: observation at the pre-action state plus the
// action one-hot, for every action including the final stop.
std::vector<std::vector<float>> route_step_features(const EnvironmentGraph& env,
                                                    const Route& route, const DropoutMask* mask,
                                                    int step_dim) {
    if (route.nodes.empty() || route.actions.empty()) {
        throw Error::data("speaker: empty route in " + env.env_id);
    }
    std::vector<std::vector<float>> steps;
    steps.reserve(route.actions.size());
    int node = route.nodes.front();
    int heading = kStartHeading;
    for (int action : route.actions) {
        std::vector<float> row = observe(env, node, heading, mask);
        row.resize(static_cast<size_t>(step_dim), 0.0f);
        row[static_cast<size_t>(step_dim - kActionCount + action)] = 1.0f;
        steps.push_back(std::move(row));
        if (action == act_forward) {
            const int next = env.neighbor_towards(node, heading);
            if (next < 0) throw Error::data("speaker: route breaks in " + env.env_id);
            node = next;
        } else if (action == act_left || action == act_right) {
            heading = apply_turn(heading, action);
        }
    }
    return steps;
}

// Batched route encoding with carry-through padding.
int encode_routes(Tape& t, const SpeakerIds& ids, const SpeakerConfig& cfg,
                  const std::vector<SpeakerBatchItem>& batch, const DropoutMask* mask) {
    const int b = static_cast<int>(batch.size());
    std::vector<std::vector<std::vector<float>>> feats;
    feats.reserve(batch.size());
    size_t max_t = 0;
    for (const SpeakerBatchItem& item : batch) {
        feats.push_back(route_step_features(*item.env, item.route, mask, cfg.step_dim));
        max_t = std::max(max_t, feats.back().size());
    }
    int h = t.constant(Tensor::zeros({b, cfg.hidden}));
    for (size_t step = 0; step < max_t; ++step) {
        Tensor inp = Tensor::zeros({b, cfg.step_dim});
        std::vector<uint8_t> active(static_cast<size_t>(b));
        bool all = true;
        for (int i = 0; i < b; ++i) {
            const auto& rows = feats[static_cast<size_t>(i)];
            active[static_cast<size_t>(i)] = step < rows.size();
            all = all && active[static_cast<size_t>(i)];
            if (step < rows.size()) {
                std::copy(rows[step].begin(), rows[step].end(),
                          inp.data.begin() + static_cast<size_t>(i) * cfg.step_dim);
            }
        }
        const int x = t.add(t.matmul(t.constant(std::move(inp)), ids.step_w), ids.step_b);
        const int h_new = detail::gru_step(t, ids.enc, x, h);
        h = all ? h_new : detail::masked_carry(t, h_new, h, active, cfg.hidden);
    }
    return h;
}

int decode_step_probs(Tape& t, const SpeakerIds& ids, int h) {
    return t.softmax(t.add(t.matmul(h, ids.out_w), ids.out_b));
}

} // namespace

TapeLoss speaker_loss(const ParamSet& params, const SpeakerConfig& cfg,
                      const std::vector<SpeakerBatchItem>& batch, const DropoutMask* mask) {
    if (batch.empty()) throw Error::data("speaker_loss: empty batch");
    TapeLoss out;
    Tape& t = out.tape;
    const std::vector<int> leafs = params.register_on(t);
    const SpeakerIds ids = resolve(params, leafs);
    const int b = static_cast<int>(batch.size());

    int h = encode_routes(t, ids, cfg, batch, mask);

    // targets: content tokens plus EOS
    std::vector<Instruction> targets;
    size_t max_t = 0;
    for (const SpeakerBatchItem& item : batch) {
        Instruction target = item.instruction;
        target.push_back(cfg.eos_id);
        max_t = std::max(max_t, target.size());
        targets.push_back(std::move(target));
    }

    std::vector<int> ce_nodes;
    std::vector<float> valid_mask;
    int64_t valid_count = 0;
    std::vector<int> prev(static_cast<size_t>(b), cfg.bos_id);
    for (size_t step = 0; step < max_t; ++step) {
        const int x = t.gather(ids.embed, prev);
        h = detail::gru_step(t, ids.dec, x, h);
        const int probs = decode_step_probs(t, ids, h);
        std::vector<int> tok(static_cast<size_t>(b), 0);
        for (int i = 0; i < b; ++i) {
            const Instruction& target = targets[static_cast<size_t>(i)];
            if (step < target.size()) {
                tok[static_cast<size_t>(i)] = target[step];
                valid_mask.push_back(1.0f);
                ++valid_count;
            } else {
                valid_mask.push_back(0.0f);
            }
            prev[static_cast<size_t>(i)] = tok[static_cast<size_t>(i)];
        }
        ce_nodes.push_back(t.cross_entropy(probs, tok));
    }

    int all_ce = ce_nodes.front();
    for (size_t i = 1; i < ce_nodes.size(); ++i) all_ce = t.concat(all_ce, ce_nodes[i]);
    const int masked = t.mul(all_ce, t.constant(Tensor::row(std::move(valid_mask))));
    out.loss = t.scale(t.sum(masked), 1.0f / static_cast<float>(valid_count));
    return out;
}

SpeakerSample speaker_generate(const ParamSet& params, const SpeakerConfig& cfg,
                               const EnvironmentGraph& env, const Route& route, bool sample,
                               float temperature, Rng* rng, const DropoutMask* mask) {
    if (sample && rng == nullptr) throw Error::config("speaker_generate: sample mode needs rng");
    if (sample && !(temperature > 0.0f)) {
        throw Error::config("speaker_generate: temperature must be positive");
    }
    Tape t;
    const std::vector<int> leafs = params.register_on(t);
    const SpeakerIds ids = resolve(params, leafs);
    std::vector<SpeakerBatchItem> one(1);
    one[0].env = &env;
    one[0].route = route;
    int h = encode_routes(t, ids, cfg, one, mask);

    SpeakerSample out;
    int prev = cfg.bos_id;
    for (int step = 0; step < cfg.max_len; ++step) {
        const std::vector<int> prev_ids{prev};
        const int x = t.gather(ids.embed, prev_ids);
        h = detail::gru_step(t, ids.dec, x, h);
        int logits = t.add(t.matmul(h, ids.out_w), ids.out_b);
        if (sample && temperature != 1.0f) logits = t.scale(logits, 1.0f / temperature);
        const Tensor& p = t.value(t.softmax(logits));
        int token;
        if (sample) {
            token = rng->categorical(p.data);
        } else {
            token = 0;
            for (int j = 1; j < cfg.vocab; ++j) {
                if (p.data[static_cast<size_t>(j)] > p.data[static_cast<size_t>(token)]) token = j;
            }
        }
        const float lp = std::log(p.data[static_cast<size_t>(token)]);
        out.tokens.push_back(token);
        out.token_logps.push_back(lp);
        out.total_logp += lp;
        if (token == cfg.eos_id) {
            out.ended_with_eos = true;
            break;
        }
        prev = token;
    }
    return out;
}

double speaker_score(const ParamSet& params, const SpeakerConfig& cfg,
                     const EnvironmentGraph& env, const Route& route, std::span<const int> tokens,
                     const DropoutMask* mask) {
    if (tokens.empty()) throw Error::data("speaker_score: empty instruction");
    Tape t;
    const std::vector<int> leafs = params.register_on(t);
    const std::vector<int> probs = speaker_probs_on_tape(t, params, leafs, cfg, env, route,
                                                         tokens, mask);
    double total = 0.0;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] < 0 || tokens[i] >= cfg.vocab) {
            throw Error::data("speaker_score: token id " + std::to_string(tokens[i]) +
                              " out of range [0," + std::to_string(cfg.vocab) + ")");
        }
        total += std::log(
            t.value(probs[i]).data[static_cast<size_t>(tokens[i])]);
    }
    return total;
}

TapeLoss speaker_logprob_mean(const ParamSet& params, const SpeakerConfig& cfg,
                              const std::vector<SpeakerBatchItem>& batch,
                              const DropoutMask* mask) {
    if (batch.empty()) throw Error::data("speaker_logprob_mean: empty batch");
    TapeLoss out;
    Tape& t = out.tape;
    const std::vector<int> leafs = params.register_on(t);

    int totals = -1;
    for (const SpeakerBatchItem& item : batch) {
        if (item.instruction.empty()) {
            throw Error::data("speaker_logprob_mean: empty instruction");
        }
        const std::vector<int> probs = speaker_probs_on_tape(t, params, leafs, cfg, *item.env,
                                                             item.route, item.instruction, mask);
        int ce = -1;
        for (size_t i = 0; i < item.instruction.size(); ++i) {
            const std::vector<int> target{item.instruction[i]};
            const int one = t.cross_entropy(probs[i], target);
            ce = (ce < 0) ? one : t.concat(ce, one);
        }
        const int total = t.sum(ce); // sum of -log p
        totals = (totals < 0) ? total : t.concat(totals, total);
    }
    out.loss = t.scale(t.mean(totals), -1.0f); // mean log-prob
    return out;
}

std::vector<int> speaker_probs_on_tape(Tape& t, const ParamSet& params,
                                       const std::vector<int>& leaf_ids, const SpeakerConfig& cfg,
                                       const EnvironmentGraph& env, const Route& route,
                                       std::span<const int> tokens, const DropoutMask* mask) {
    const SpeakerIds ids = resolve(params, leaf_ids);
    std::vector<SpeakerBatchItem> one(1);
    one[0].env = &env;
    one[0].route = route;
    int h = encode_routes(t, ids, cfg, one, mask);

    std::vector<int> probs;
    probs.reserve(tokens.size());
    int prev = cfg.bos_id;
    for (size_t i = 0; i < tokens.size(); ++i) {
        const std::vector<int> prev_ids{prev};
        const int x = t.gather(ids.embed, prev_ids);
        h = detail::gru_step(t, ids.dec, x, h);
        probs.push_back(decode_step_probs(t, ids, h));
        prev = tokens[i];
    }
    return probs;
}

} // namespace foam

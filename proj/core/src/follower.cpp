#include "foam/follower.hpp"

#include <algorithm>
#include <cmath>

#include "model_util.hpp"

namespace foam {

using detail::GruIds;

ParamSet init_follower_params(const FollowerConfig& cfg, Rng& rng) {
    ParamSet ps;
    detail::add_param(ps, "follower.embed", {cfg.vocab, cfg.embed}, rng);
    detail::add_gru(ps, "follower.enc", cfg.embed, cfg.hidden, rng);
    detail::add_gru(ps, "follower.dec", cfg.decoder_in(), cfg.hidden, rng);
    detail::add_param(ps, "follower.act.w", {cfg.hidden, kActionCount}, rng);
    detail::add_param(ps, "follower.act.b", {kActionCount}, rng);
    return ps;
}

FollowerConfig follower_config_from(const ParamSet& params) {
    FollowerConfig cfg;
    const Tensor& embed = params.at("follower.embed");
    const Tensor& dec_zx = params.at("follower.dec.zx");
    cfg.vocab = embed.shape[0];
    cfg.embed = embed.shape[1];
    cfg.hidden = dec_zx.shape[1];
    cfg.obs_dim = dec_zx.shape[0] - kActionCount;
    return cfg;
}

namespace {

struct FollowerIds {
    int embed;
    GruIds enc, dec;
    int act_w, act_b;
};

FollowerIds resolve(const ParamSet& ps, const std::vector<int>& leafs) {
    FollowerIds ids;
    ids.embed = detail::resolve_param(ps, leafs, "follower.embed");
    ids.enc = detail::resolve_gru(ps, leafs, "follower.enc");
    ids.dec = detail::resolve_gru(ps, leafs, "follower.dec");
    ids.act_w = detail::resolve_param(ps, leafs, "follower.act.w");
    ids.act_b = detail::resolve_param(ps, leafs, "follower.act.b");
    return ids;
}

// Batched GRU encoding of padded instructions; rows whose instruction is
// exhausted carry their hidden state through.
int encode_instructions(Tape& t, const FollowerIds& ids, int hidden,
                        const std::vector<const Instruction*>& instrs) {
    const int b = static_cast<int>(instrs.size());
    size_t max_len = 0;
    for (const Instruction* ins : instrs) max_len = std::max(max_len, ins->size());
    int h = t.constant(Tensor::zeros({b, hidden}));
    for (size_t step = 0; step < max_len; ++step) {
        std::vector<int> tok(static_cast<size_t>(b), 0);
        std::vector<uint8_t> active(static_cast<size_t>(b));
        bool all = true;
        for (int i = 0; i < b; ++i) {
            const Instruction& ins = *instrs[static_cast<size_t>(i)];
            active[static_cast<size_t>(i)] = step < ins.size();
            all = all && active[static_cast<size_t>(i)];
            if (step < ins.size()) tok[static_cast<size_t>(i)] = ins[step];
        }
        const int x = t.gather(ids.embed, tok);
        const int h_new = detail::gru_step(t, ids.enc, x, h);
        h = all ? h_new : detail::masked_carry(t, h_new, h, active, hidden);
    }
    return h;
}

// Single-row encoder over externally built [1, embed] step inputs.
int encode_embedded(Tape& t, const FollowerIds& ids, int hidden,
                    const std::vector<int>& embedded_steps) {
    int h = t.constant(Tensor::zeros({1, hidden}));
    for (int x : embedded_steps) h = detail::gru_step(t, ids.enc, x, h);
    return h;
}

Tensor decoder_input_row(const EnvironmentGraph& env, int node, int heading, int prev_action,
                         const DropoutMask* mask, int obs_dim) {
    std::vector<float> obs = observe(env, node, heading, mask);
    obs.resize(static_cast<size_t>(obs_dim) + kActionCount, 0.0f);
    if (prev_action >= 0) obs[static_cast<size_t>(obs_dim) + prev_action] = 1.0f;
    return Tensor({1, obs_dim + kActionCount}, std::move(obs));
}

int argmax_row(const Tensor& probs, int row) {
    int best = 0;
    for (int j = 1; j < probs.cols(); ++j) {
        if (probs.at(row, j) > probs.at(row, best)) best = j;
    }
    return best;
}

struct DecodedCe {
    std::vector<int> ce_nodes;     // one [B] node per time step
    std::vector<float> valid_mask; // t-major, parallel to concatenated ce
    int64_t valid_count = 0;
};

// Unrolls the action decoder over the batch and collects per-step action
// cross-entropies against the gold routes.
DecodedCe decode_ce(Tape& t, const FollowerIds& ids, const FollowerConfig& cfg,
                    const EpisodeBatch& batch, int h_enc, bool teacher_forcing) {
    const int b = static_cast<int>(batch.items.size());
    struct ItemState {
        int node, heading, prev_action;
    };
    std::vector<ItemState> st(static_cast<size_t>(b));
    size_t max_t = 0;
    for (int i = 0; i < b; ++i) {
        const Route& r = batch.items[static_cast<size_t>(i)].target;
        if (r.nodes.empty() || r.actions.empty()) {
            throw Error::data("follower_loss: empty target route");
        }
        st[static_cast<size_t>(i)] = {r.nodes.front(), kStartHeading, -1};
        max_t = std::max(max_t, r.actions.size());
    }

    DecodedCe out;
    int h = h_enc;
    for (size_t step = 0; step < max_t; ++step) {
        Tensor x = Tensor::zeros({b, cfg.decoder_in()});
        for (int i = 0; i < b; ++i) {
            const EpisodeItem& item = batch.items[static_cast<size_t>(i)];
            const ItemState& s = st[static_cast<size_t>(i)];
            Tensor row = decoder_input_row(*item.env, s.node, s.heading, s.prev_action,
                                           batch.mask, cfg.obs_dim);
            std::copy(row.data.begin(), row.data.end(),
                      x.data.begin() + static_cast<size_t>(i) * cfg.decoder_in());
        }
        h = detail::gru_step(t, ids.dec, t.constant(std::move(x)), h);
        const int probs = t.softmax(t.add(t.matmul(h, ids.act_w), ids.act_b));

        std::vector<int> targets(static_cast<size_t>(b), 0);
        for (int i = 0; i < b; ++i) {
            const Route& r = batch.items[static_cast<size_t>(i)].target;
            if (step < r.actions.size()) {
                targets[static_cast<size_t>(i)] = r.actions[step];
                out.valid_mask.push_back(1.0f);
                ++out.valid_count;
            } else {
                out.valid_mask.push_back(0.0f);
            }
        }
        out.ce_nodes.push_back(t.cross_entropy(probs, targets));

        const Tensor& pv = t.value(probs);
        for (int i = 0; i < b; ++i) {
            const EpisodeItem& item = batch.items[static_cast<size_t>(i)];
            const Route& r = item.target;
            ItemState& s = st[static_cast<size_t>(i)];
            int action;
            if (teacher_forcing) {
                action = step < r.actions.size() ? r.actions[step] : act_stop;
            } else {
                action = argmax_row(pv, i);
            }
            s.prev_action = action;
            if (action == act_forward) {
                const int next = item.env->neighbor_towards(s.node, s.heading);
                if (next >= 0) s.node = next; // free-running: invalid forward is a no-op
            } else if (action == act_left || action == act_right) {
                s.heading = apply_turn(s.heading, action);
            }
        }
    }
    return out;
}

} // namespace

TapeLoss follower_loss(const ParamSet& params, const FollowerConfig& cfg,
                       const EpisodeBatch& batch, bool teacher_forcing) {
    if (batch.items.empty()) throw Error::data("follower_loss: empty batch");
    TapeLoss out;
    Tape& t = out.tape;
    const std::vector<int> leafs = params.register_on(t);
    const FollowerIds ids = resolve(params, leafs);

    std::vector<const Instruction*> instrs;
    instrs.reserve(batch.items.size());
    for (const EpisodeItem& item : batch.items) instrs.push_back(&item.instruction);
    const int h_enc = encode_instructions(t, ids, cfg.hidden, instrs);

    DecodedCe ce = decode_ce(t, ids, cfg, batch, h_enc, teacher_forcing);
    int all_ce = ce.ce_nodes.front();
    for (size_t i = 1; i < ce.ce_nodes.size(); ++i) all_ce = t.concat(all_ce, ce.ce_nodes[i]);
    const int masked = t.mul(all_ce, t.constant(Tensor::row(std::move(ce.valid_mask))));
    out.loss = t.scale(t.sum(masked), 1.0f / static_cast<float>(ce.valid_count));
    return out;
}

int follower_route_ce_on_tape(Tape& t, const ParamSet& params, const std::vector<int>& leaf_ids,
                              const FollowerConfig& cfg, const EnvironmentGraph& env,
                              const Route& target, const std::vector<int>& embedded_steps,
                              const DropoutMask* mask, bool teacher_forcing) {
    const FollowerIds ids = resolve(params, leaf_ids);
    const int h_enc = encode_embedded(t, ids, cfg.hidden, embedded_steps);
    EpisodeBatch one;
    EpisodeItem item;
    item.env = &env;
    item.target = target;
    one.items.push_back(std::move(item));
    one.mask = mask;
    DecodedCe ce = decode_ce(t, ids, cfg, one, h_enc, teacher_forcing);
    int all_ce = ce.ce_nodes.front();
    for (size_t i = 1; i < ce.ce_nodes.size(); ++i) all_ce = t.concat(all_ce, ce.ce_nodes[i]);
    return t.sum(all_ce);
}

struct FollowerDecoder::Impl {
    const EnvironmentGraph& env;
    DropoutMask mask;
    bool has_mask;
    int max_steps;
    int obs_dim;
    int hidden;
    Tape tape;
    FollowerIds ids;
    State initial;

    Impl(const ParamSet& params, const FollowerConfig& cfg, const EnvironmentGraph& e,
         std::span<const int> instruction, int start, int heading, int steps,
         const DropoutMask* m)
        : env(e),
          mask(m != nullptr ? *m : DropoutMask{}),
          has_mask(m != nullptr),
          max_steps(steps),
          obs_dim(cfg.obs_dim),
          hidden(cfg.hidden),
          ids{} {
        if (max_steps < 1) throw Error::config("follower decoder: max_steps must be >= 1");
        env.check_node(start, "rollout");
        const std::vector<int> leafs = params.register_on(tape);
        ids = resolve(params, leafs);
        const Instruction ins(instruction.begin(), instruction.end());
        std::vector<const Instruction*> one{&ins};
        const int h_enc = encode_instructions(tape, ids, hidden, one);
        initial = make_state(start, heading, -1, h_enc, 0);
    }

    State make_state(int node, int heading, int prev_action, int parent_hidden, int steps) {
        Tensor x = decoder_input_row(env, node, heading, prev_action,
                                     has_mask ? &mask : nullptr, obs_dim);
        const int h = detail::gru_step(tape, ids.dec, tape.constant(std::move(x)), parent_hidden);
        State s;
        s.node = node;
        s.heading = heading;
        s.hidden = h;
        s.prev_action = prev_action;
        s.steps = steps;
        return s;
    }

    std::array<float, kActionCount> probs(const State& s) {
        Tensor m = Tensor::zeros({1, kActionCount});
        if (s.steps >= max_steps - 1) {
            for (int a = 0; a < kActionCount; ++a) {
                if (a != act_stop) m.data[static_cast<size_t>(a)] = -1e9f;
            }
        } else if (env.neighbor_towards(s.node, s.heading) < 0) {
            m.data[act_forward] = -1e9f;
        }
        const int logits = tape.add(tape.add(tape.matmul(s.hidden, ids.act_w), ids.act_b),
                                    tape.constant(std::move(m)));
        const Tensor& p = tape.value(tape.softmax(logits));
        std::array<float, kActionCount> out{};
        std::copy(p.data.begin(), p.data.end(), out.begin());
        return out;
    }

    State step(const State& s, int action) {
        if (s.finished) throw Error::internal("follower decoder: advancing a finished state");
        if (action == act_stop) {
            State done = s;
            done.finished = true;
            done.prev_action = act_stop;
            ++done.steps;
            return done;
        }
        int node = s.node, heading = s.heading;
        if (action == act_forward) {
            const int next = env.neighbor_towards(node, heading);
            if (next >= 0) node = next;
        } else {
            heading = apply_turn(heading, action);
        }
        return make_state(node, heading, action, s.hidden, s.steps + 1);
    }
};

FollowerDecoder::FollowerDecoder(const ParamSet& params, const FollowerConfig& cfg,
                                 const EnvironmentGraph& env, std::span<const int> instruction,
                                 int start, int heading, int max_steps, const DropoutMask* mask)
    : impl_(std::make_unique<Impl>(params, cfg, env, instruction, start, heading, max_steps,
                                   mask)) {}

FollowerDecoder::~FollowerDecoder() = default;
FollowerDecoder::FollowerDecoder(FollowerDecoder&&) noexcept = default;

const FollowerDecoder::State& FollowerDecoder::initial() const { return impl_->initial; }

std::array<float, kActionCount> FollowerDecoder::action_probs(const State& state) {
    return impl_->probs(state);
}

FollowerDecoder::State FollowerDecoder::advance(const State& state, int action) {
    return impl_->step(state, action);
}

RolloutResult rollout(const ParamSet& params, const FollowerConfig& cfg,
                      const EnvironmentGraph& env, std::span<const int> instruction, int start,
                      int heading, DecodeMode mode, int max_steps, Rng* rng,
                      const DropoutMask* mask) {
    if (mode == DecodeMode::sample && rng == nullptr) {
        throw Error::config("rollout: sample mode needs an rng");
    }
    FollowerDecoder dec(params, cfg, env, instruction, start, heading, max_steps, mask);
    RolloutResult out;
    out.route.env_id = env.env_id;
    out.route.nodes.push_back(start);

    FollowerDecoder::State state = dec.initial();
    while (!state.finished) {
        const auto probs = dec.action_probs(state);
        int action;
        if (mode == DecodeMode::greedy) {
            action = 0;
            for (int a = 1; a < kActionCount; ++a) {
                if (probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(action)]) action = a;
            }
        } else {
            action = rng->categorical(probs);
        }
        const float lp = std::log(probs[static_cast<size_t>(action)]);
        out.step_logps.push_back(lp);
        out.total_logp += lp;
        out.route.actions.push_back(action);
        state = dec.advance(state, action);
        if (action == act_forward && state.node != out.route.nodes.back()) {
            out.route.nodes.push_back(state.node);
        }
    }
    out.route.goal = out.route.nodes.back();
    return out;
}

namespace {

struct BeamEntry {
    FollowerDecoder::State state;
    double logp = 0.0;
    std::vector<int> actions;
    std::vector<int> nodes;
};

bool beam_less(const BeamEntry& a, const BeamEntry& b) {
    if (a.logp != b.logp) return a.logp > b.logp;
    return a.actions < b.actions;
}

} // namespace

std::vector<BeamCandidate> beam_candidates(const ParamSet& params, const FollowerConfig& cfg,
                                           const EnvironmentGraph& env,
                                           std::span<const int> instruction, int start,
                                           int heading, int beam_width, int max_steps) {
    if (beam_width < 1) throw Error::config("beam_candidates: beam width must be >= 1");
    FollowerDecoder dec(params, cfg, env, instruction, start, heading, max_steps, nullptr);

    std::vector<BeamEntry> active;
    BeamEntry init;
    init.state = dec.initial();
    init.nodes.push_back(start);
    active.push_back(std::move(init));
    std::vector<BeamEntry> finished;

    for (int step = 0; step < max_steps && !active.empty(); ++step) {
        std::vector<BeamEntry> expanded;
        for (BeamEntry& entry : active) {
            const auto probs = dec.action_probs(entry.state);
            for (int a = 0; a < kActionCount; ++a) {
                if (probs[static_cast<size_t>(a)] <= 0.0f) continue;
                BeamEntry child = entry;
                child.logp += std::log(probs[static_cast<size_t>(a)]);
                child.actions.push_back(a);
                child.state = dec.advance(entry.state, a);
                if (a == act_forward && child.state.node != child.nodes.back()) {
                    child.nodes.push_back(child.state.node);
                }
                if (a == act_stop) {
                    finished.push_back(std::move(child));
                } else {
                    expanded.push_back(std::move(child));
                }
            }
        }
        std::sort(expanded.begin(), expanded.end(), beam_less);
        if (static_cast<int>(expanded.size()) > beam_width) {
            expanded.resize(static_cast<size_t>(beam_width));
        }
        active = std::move(expanded);
    }

    std::sort(finished.begin(), finished.end(), beam_less);
    std::vector<BeamCandidate> out;
    for (const BeamEntry& e : finished) {
        if (static_cast<int>(out.size()) >= beam_width) break;
        BeamCandidate c;
        c.route.env_id = env.env_id;
        c.route.nodes = e.nodes;
        c.route.actions = e.actions;
        c.route.goal = e.nodes.back();
        c.logp = e.logp;
        out.push_back(std::move(c));
    }

    // The greedy route is part of the contract; splice it in if pruned.
    RolloutResult greedy =
        rollout(params, cfg, env, instruction, start, heading, DecodeMode::greedy, max_steps);
    const bool present = std::any_of(out.begin(), out.end(), [&](const BeamCandidate& c) {
        return c.route == greedy.route;
    });
    if (!present) {
        BeamCandidate g{greedy.route, greedy.total_logp};
        if (static_cast<int>(out.size()) < beam_width) {
            out.push_back(std::move(g));
        } else {
            out.back() = std::move(g);
        }
        std::sort(out.begin(), out.end(), [](const BeamCandidate& a, const BeamCandidate& b) {
            if (a.logp != b.logp) return a.logp > b.logp;
            return a.route.actions < b.route.actions;
        });
    }
    return out;
}

} // namespace foam

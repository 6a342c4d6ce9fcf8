#pragma once

// Shared fixtures and oracles for the test suites.

#include <cmath>
#include <functional>
#include <vector>

#include "foam/dataset.hpp"
#include "foam/follower.hpp"
#include "foam/speaker.hpp"
#include "foam/tape.hpp"
#include "foam/trainer.hpp"

namespace foam::testing {

// Central finite differences against the tape gradients. `build` must
// construct the same scalar loss from the leaf ids it is given; inputs are
// registered as named leaves in order.
struct FdReport {
    double max_rel_err = 0.0;
    int coords = 0;
};

inline FdReport fd_check(const std::vector<Tensor>& inputs,
                         const std::function<int(Tape&, const std::vector<int>&)>& build,
                         float step = 1e-3f) {
    auto eval = [&](const std::vector<Tensor>& ins) {
        Tape t;
        std::vector<int> ids;
        for (size_t i = 0; i < ins.size(); ++i) {
            ids.push_back(t.leaf(ins[i], "in" + std::to_string(i)));
        }
        const int loss = build(t, ids);
        return static_cast<double>(t.value(loss).data[0]);
    };

    Tape t;
    std::vector<int> ids;
    for (size_t i = 0; i < inputs.size(); ++i) {
        ids.push_back(t.leaf(inputs[i], "in" + std::to_string(i)));
    }
    const int loss = build(t, ids);
    const GradMap grads = t.backward(loss);

    FdReport report;
    for (size_t i = 0; i < inputs.size(); ++i) {
        const Tensor& g = grads.at("in" + std::to_string(i));
        for (size_t c = 0; c < inputs[i].data.size(); ++c) {
            std::vector<Tensor> plus = inputs, minus = inputs;
            plus[i].data[c] += step;
            minus[i].data[c] -= step;
            const double fd = (eval(plus) - eval(minus)) / (2.0 * step);
            const double a = g.data[c];
            const double rel = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
            report.max_rel_err = std::max(report.max_rel_err, rel);
            ++report.coords;
        }
    }
    return report;
}

// Small world fixtures. The single-environment variant keeps every split at
// one env so follower pretraining can be exercised quickly.
inline GenWorldOptions tiny_world_options(uint64_t seed = 11) {
    GenWorldOptions opt;
    opt.seed = seed;
    opt.n_train = 1;
    opt.n_val_seen = 1;
    opt.n_val_unseen = 1;
    opt.grid = 4;
    opt.feature_dim = 8;
    opt.num_tags = 6;
    opt.routes_per_env = 10;
    opt.route_min_nodes = 3;
    opt.route_max_nodes = 6;
    return opt;
}

inline TrainConfig tiny_train_config(uint64_t seed = 1) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.follower_embed = 12;
    cfg.follower_hidden = 24;
    cfg.speaker_embed = 12;
    cfg.speaker_hidden = 24;
    cfg.batch_labeled = 6;
    cfg.batch_aug = 4;
    cfg.eta_f = 0.25f;
    cfg.eta_s = 0.04f;
    cfg.val_every = 100;
    cfg.eval_max_steps = 20;
    cfg.route_min_nodes = 3;
    cfg.route_max_nodes = 6;
    cfg.max_instr_len = 40;
    return cfg;
}

// Enumerates every token sequence the speaker can emit under (vocab, eos,
// max_len): sequences end at EOS or at the length cap.
inline void enumerate_sequences(int vocab, int eos_id, int max_len, Instruction& prefix,
                                std::vector<Instruction>& out) {
    for (int tok = 0; tok < vocab; ++tok) {
        prefix.push_back(tok);
        if (tok == eos_id || static_cast<int>(prefix.size()) == max_len) {
            out.push_back(prefix);
        } else {
            enumerate_sequences(vocab, eos_id, max_len, prefix, out);
        }
        prefix.pop_back();
    }
}

inline std::vector<Instruction> all_sequences(int vocab, int eos_id, int max_len) {
    std::vector<Instruction> out;
    Instruction prefix;
    enumerate_sequences(vocab, eos_id, max_len, prefix, out);
    return out;
}

} // namespace foam::testing

#pragma once

// Internal helpers shared by the follower and speaker models.

#include <string>
#include <vector>

#include "foam/params.hpp"
#include "foam/rng.hpp"
#include "foam/tape.hpp"

namespace foam::detail {

inline constexpr float kInitRange = 0.08f;

inline void add_param(ParamSet& ps, std::string name, std::vector<int> shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (float& v : t.data) v = rng.uniform_float(-kInitRange, kInitRange);
    ps.add(std::move(name), std::move(t));
}

inline void add_gru(ParamSet& ps, const std::string& prefix, int in_dim, int hidden, Rng& rng) {
    for (const char* gate : {"z", "r", "n"}) {
        add_param(ps, prefix + "." + gate + "x", {in_dim, hidden}, rng);
        add_param(ps, prefix + "." + gate + "h", {hidden, hidden}, rng);
        add_param(ps, prefix + "." + gate + "b", {hidden}, rng);
    }
}

// Node ids of one GRU's weights on a tape.
struct GruIds {
    int zx, zh, zb, rx, rh, rb, nx, nh, nb;
};

// Looks up the tape node ids of a registered GRU by parameter name.
inline GruIds resolve_gru(const ParamSet& ps, const std::vector<int>& leaf_ids,
                          const std::string& prefix) {
    auto id = [&](const std::string& suffix) {
        const int i = ps.index_of(prefix + "." + suffix);
        if (i < 0) throw Error::internal("missing parameter " + prefix + "." + suffix);
        return leaf_ids[static_cast<size_t>(i)];
    };
    return {id("zx"), id("zh"), id("zb"), id("rx"), id("rh"), id("rb"),
            id("nx"), id("nh"), id("nb")};
}

inline int resolve_param(const ParamSet& ps, const std::vector<int>& leaf_ids,
                         const std::string& name) {
    const int i = ps.index_of(name);
    if (i < 0) throw Error::internal("missing parameter " + name);
    return leaf_ids[static_cast<size_t>(i)];
}

// h' = (1-z)*n + z*h with z = sig(xWzx + hWzh + bz), r = sig(...),
// n = tanh(xWnx + (r*h)Wnh + bn).
inline int gru_step(Tape& t, const GruIds& w, int x, int h) {
    const int z = t.sigmoid(t.add(t.add(t.matmul(x, w.zx), t.matmul(h, w.zh)), w.zb));
    const int r = t.sigmoid(t.add(t.add(t.matmul(x, w.rx), t.matmul(h, w.rh)), w.rb));
    const int n = t.tanh(t.add(t.add(t.matmul(x, w.nx), t.matmul(t.mul(r, h), w.nh)), w.nb));
    return t.add(t.mul(t.one_minus(z), n), t.mul(z, h));
}

// Carry-through step mask for padded recurrent unrolls:
// h = active*h_new + (1-active)*h_old, with `active` per batch row.
inline int masked_carry(Tape& t, int h_new, int h_old, const std::vector<uint8_t>& active,
                        int hidden) {
    const int b = static_cast<int>(active.size());
    Tensor on = Tensor::zeros({b, hidden});
    Tensor off = Tensor::zeros({b, hidden});
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < hidden; ++j) {
            (active[static_cast<size_t>(i)] ? on : off).at(i, j) = 1.0f;
        }
    }
    return t.add(t.mul(h_new, t.constant(std::move(on))), t.mul(h_old, t.constant(std::move(off))));
}

} // namespace foam::detail

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "foam/tape.hpp"
#include "foam/tensor.hpp"

namespace foam {

// Named flat collection of trainable tensors. Canonical parameter order is
// the insertion order; it is what checkpoints, GradVector flattening and
// tape registration all share.
struct ParamSet {
    std::vector<std::pair<std::string, Tensor>> items;

    void add(std::string name, Tensor t) { items.emplace_back(std::move(name), std::move(t)); }
    int index_of(std::string_view name) const;
    const Tensor& at(std::string_view name) const;
    Tensor& at(std::string_view name);
    int64_t total_size() const;
    bool same_layout(const ParamSet& o) const;

    // Registers every parameter as a named leaf; returned ids parallel items.
    std::vector<int> register_on(Tape& tape) const;
};

// Flat concatenation of per-parameter gradients in canonical order.
struct GradVector {
    std::vector<float> v;
    size_t size() const { return v.size(); }
};

GradVector flatten_grads(const ParamSet& order, const GradMap& grads);
GradMap unflatten_grads(const ParamSet& order, const GradVector& flat);

double grad_map_norm(const GradMap& grads);
double grad_vector_norm(const GradVector& g);

// u.v / (|u||v|); returns 0 when either norm falls below eps, since a zero
// gradient carries no alignment signal.
double cosine_similarity(const GradVector& u, const GradVector& v, double eps = 1e-12);

// p <- p - lr * g with optional global-norm clipping (clip_norm <= 0 disables).
// Rejects non-finite gradients.
void sgd_step(ParamSet& params, const GradMap& grads, float lr, float clip_norm);

} // namespace foam

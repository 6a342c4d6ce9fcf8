#include "foam/params.hpp"

#include <cmath>

namespace foam {

int ParamSet::index_of(std::string_view name) const {
    for (size_t i = 0; i < items.size(); ++i) {
        if (items[i].first == name) return static_cast<int>(i);
    }
    return -1;
}

const Tensor& ParamSet::at(std::string_view name) const {
    int i = index_of(name);
    if (i < 0) throw Error::internal("unknown parameter: " + std::string(name));
    return items[static_cast<size_t>(i)].second;
}

Tensor& ParamSet::at(std::string_view name) {
    int i = index_of(name);
    if (i < 0) throw Error::internal("unknown parameter: " + std::string(name));
    return items[static_cast<size_t>(i)].second;
}

int64_t ParamSet::total_size() const {
    int64_t n = 0;
    for (const auto& [name, t] : items) n += t.numel();
    return n;
}

bool ParamSet::same_layout(const ParamSet& o) const {
    if (items.size() != o.items.size()) return false;
    for (size_t i = 0; i < items.size(); ++i) {
        if (items[i].first != o.items[i].first) return false;
        if (items[i].second.shape != o.items[i].second.shape) return false;
    }
    return true;
}

std::vector<int> ParamSet::register_on(Tape& tape) const {
    std::vector<int> ids;
    ids.reserve(items.size());
    for (const auto& [name, t] : items) ids.push_back(tape.leaf(t, name));
    return ids;
}

GradVector flatten_grads(const ParamSet& order, const GradMap& grads) {
    if (grads.size() != order.items.size()) {
        throw Error::data("flatten_grads: got " + std::to_string(grads.size()) +
                          " gradients for " + std::to_string(order.items.size()) + " parameters");
    }
    GradVector out;
    out.v.reserve(static_cast<size_t>(order.total_size()));
    for (const auto& [name, t] : order.items) {
        auto it = grads.find(name);
        if (it == grads.end()) throw Error::data("flatten_grads: missing gradient for " + name);
        if (it->second.shape != t.shape) {
            throw Error::data("flatten_grads: shape mismatch for " + name);
        }
        out.v.insert(out.v.end(), it->second.data.begin(), it->second.data.end());
    }
    return out;
}

GradMap unflatten_grads(const ParamSet& order, const GradVector& flat) {
    if (static_cast<int64_t>(flat.v.size()) != order.total_size()) {
        throw Error::data("unflatten_grads: length " + std::to_string(flat.v.size()) +
                          " != parameter count " + std::to_string(order.total_size()));
    }
    GradMap out;
    size_t pos = 0;
    for (const auto& [name, t] : order.items) {
        Tensor g = Tensor::zeros(t.shape);
        std::copy(flat.v.begin() + pos, flat.v.begin() + pos + g.data.size(), g.data.begin());
        pos += g.data.size();
        out[name] = std::move(g);
    }
    return out;
}

double grad_map_norm(const GradMap& grads) {
    double acc = 0.0;
    for (const auto& [name, g] : grads) {
        for (float v : g.data) acc += static_cast<double>(v) * v;
    }
    return std::sqrt(acc);
}

double grad_vector_norm(const GradVector& g) {
    double acc = 0.0;
    for (float v : g.v) acc += static_cast<double>(v) * v;
    return std::sqrt(acc);
}

double cosine_similarity(const GradVector& u, const GradVector& v, double eps) {
    if (u.v.size() != v.v.size()) {
        throw Error::data("cosine_similarity: length mismatch " + std::to_string(u.v.size()) +
                          " vs " + std::to_string(v.v.size()));
    }
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (size_t i = 0; i < u.v.size(); ++i) {
        dot += static_cast<double>(u.v[i]) * v.v[i];
        nu += static_cast<double>(u.v[i]) * u.v[i];
        nv += static_cast<double>(v.v[i]) * v.v[i];
    }
    nu = std::sqrt(nu);
    nv = std::sqrt(nv);
    if (nu < eps || nv < eps) return 0.0;
    double c = dot / (nu * nv);
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    return c;
}

void sgd_step(ParamSet& params, const GradMap& grads, float lr, float clip_norm) {
    if (grads.size() != params.items.size()) {
        throw Error::data("sgd_step: gradient map does not cover the parameter set");
    }
    for (const auto& [name, g] : grads) {
        for (float v : g.data) {
            if (!std::isfinite(v)) {
                throw Error::numeric("sgd_step: non-finite gradient for " + name);
            }
        }
    }
    double scale = 1.0;
    if (clip_norm > 0.0f) {
        const double norm = grad_map_norm(grads);
        if (norm > clip_norm) scale = clip_norm / norm;
    }
    for (auto& [name, t] : params.items) {
        auto it = grads.find(name);
        if (it == grads.end()) throw Error::data("sgd_step: missing gradient for " + name);
        if (it->second.shape != t.shape) throw Error::data("sgd_step: shape mismatch for " + name);
        const float step = lr * static_cast<float>(scale);
        for (size_t i = 0; i < t.data.size(); ++i) t.data[i] -= step * it->second.data[i];
    }
}

} // namespace foam

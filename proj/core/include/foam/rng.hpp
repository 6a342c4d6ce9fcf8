#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace foam {

// Deterministic splitmix64 generator. One global seed is fanned out into
// named independent streams (see stream_seed), so adding a consumer to one
// stream never perturbs the others. State is a single u64, which keeps
// run-state snapshots trivial.
class Rng {
public:
    Rng() : state_(0x9e3779b97f4a7c15ull) {}
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float uniform_float(float lo, float hi) {
        return lo + static_cast<float>(uniform()) * (hi - lo);
    }

    // Uniform integer in [0, n). n must be positive.
    int uniform_int(int n) { return static_cast<int>(uniform() * n); }

    // Samples an index from an (approximately normalized) probability vector.
    // Zero-probability entries are never selected.
    int categorical(std::span<const float> probs) {
        const double u = uniform();
        double cum = 0.0;
        int last_positive = -1;
        for (size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] <= 0.0f) continue;
            last_positive = static_cast<int>(i);
            cum += probs[i];
            if (u < cum) return last_positive;
        }
        return last_positive; // fp slack: u fell past the accumulated total
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

private:
    uint64_t state_;
};

// FNV-1a mix of the global seed with a stream name.
inline uint64_t stream_seed(uint64_t global_seed, std::string_view name) {
    uint64_t h = 0xcbf29ce484222325ull ^ global_seed;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    h ^= global_seed >> 17;
    h *= 0x100000001b3ull;
    return h;
}

} // namespace foam

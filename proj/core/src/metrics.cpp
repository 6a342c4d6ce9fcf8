#include "foam/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "foam/error.hpp"

namespace foam {

double dtw_cost(const EnvironmentGraph& env, std::span<const int> a, std::span<const int> b) {
    const size_t n = a.size(), m = b.size();
    if (n == 0 || m == 0) throw Error::data("dtw: empty node sequence");
    std::vector<double> prev(m), cur(m);
    auto ground = [&](size_t i, size_t j) {
        return static_cast<double>(shortest_distance(env, a[i], b[j]));
    };
    prev[0] = ground(0, 0);
    for (size_t j = 1; j < m; ++j) prev[j] = prev[j - 1] + ground(0, j);
    for (size_t i = 1; i < n; ++i) {
        cur[0] = prev[0] + ground(i, 0);
        for (size_t j = 1; j < m; ++j) {
            cur[j] = ground(i, j) + std::min({prev[j], cur[j - 1], prev[j - 1]});
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

EpisodeMetrics episode_metrics(const EnvironmentGraph& env, const Route& predicted,
                               const Route& reference, int d_th) {
    if (predicted.env_id != env.env_id || reference.env_id != env.env_id) {
        throw Error::data("episode_metrics: routes from different environments (" +
                          predicted.env_id + ", " + reference.env_id + " vs " + env.env_id + ")");
    }
    if (predicted.nodes.empty() || reference.nodes.empty()) {
        throw Error::data("episode_metrics: empty route");
    }
    EpisodeMetrics m;
    m.ne = shortest_distance(env, predicted.nodes.back(), reference.goal);
    m.success = m.ne <= d_th ? 1 : 0;
    const int shortest = shortest_distance(env, reference.nodes.front(), reference.goal);
    const int taken = predicted.hops();
    m.spl = m.success == 1
                ? static_cast<double>(shortest) / std::max(taken, shortest)
                : 0.0;
    const double dtw = dtw_cost(env, predicted.nodes, reference.nodes);
    m.ndtw = std::exp(-dtw / (static_cast<double>(reference.nodes.size()) * d_th));
    m.sdtw = m.success * m.ndtw;
    return m;
}

EvalResult aggregate_metrics(std::string split, std::vector<EpisodeMetrics> per_episode) {
    EvalResult r;
    r.split = std::move(split);
    r.episodes = static_cast<int>(per_episode.size());
    double sr = 0, spl = 0, ne = 0, ndtw = 0, sdtw = 0;
    for (const EpisodeMetrics& m : per_episode) {
        sr += m.success;
        spl += m.spl;
        ne += m.ne;
        ndtw += m.ndtw;
        sdtw += m.sdtw;
    }
    if (r.episodes > 0) {
        const double n = r.episodes;
        r.sr = 100.0 * sr / n;
        r.spl = 100.0 * spl / n;
        r.ne = ne / n;
        r.ndtw = 100.0 * ndtw / n;
        r.sdtw = 100.0 * sdtw / n;
    }
    r.per_episode = std::move(per_episode);
    return r;
}

namespace {

// n-gram counts keyed by the flattened token window
std::map<std::vector<int>, int> ngram_counts(const Instruction& tokens, int n) {
    std::map<std::vector<int>, int> counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
        std::vector<int> gram(tokens.begin() + i, tokens.begin() + i + n);
        ++counts[gram];
    }
    return counts;
}

} // namespace

double corpus_bleu(const std::vector<std::vector<Instruction>>& references,
                   const std::vector<Instruction>& hypotheses, bool smooth) {
    if (hypotheses.empty()) throw Error::data("corpus_bleu: empty corpus");
    if (references.size() != hypotheses.size()) {
        throw Error::data("corpus_bleu: " + std::to_string(references.size()) +
                          " reference sets for " + std::to_string(hypotheses.size()) +
                          " hypotheses");
    }
    constexpr int kMaxOrder = 4;
    double matched[kMaxOrder] = {0, 0, 0, 0};
    double total[kMaxOrder] = {0, 0, 0, 0};
    int64_t hyp_len = 0, ref_len = 0;

    for (size_t s = 0; s < hypotheses.size(); ++s) {
        const Instruction& hyp = hypotheses[s];
        const std::vector<Instruction>& refs = references[s];
        if (refs.empty()) throw Error::data("corpus_bleu: hypothesis without references");
        hyp_len += static_cast<int64_t>(hyp.size());
        // closest reference length; ties take the shorter
        int best = static_cast<int>(refs[0].size());
        for (const Instruction& r : refs) {
            const int len = static_cast<int>(r.size());
            const auto d = [&](int l) { return std::abs(l - static_cast<int>(hyp.size())); };
            if (d(len) < d(best) || (d(len) == d(best) && len < best)) best = len;
        }
        ref_len += best;

        for (int n = 1; n <= kMaxOrder; ++n) {
            auto hyp_counts = ngram_counts(hyp, n);
            std::map<std::vector<int>, int> max_ref;
            for (const Instruction& r : refs) {
                for (const auto& [gram, c] : ngram_counts(r, n)) {
                    max_ref[gram] = std::max(max_ref[gram], c);
                }
            }
            for (const auto& [gram, c] : hyp_counts) {
                total[n - 1] += c;
                auto it = max_ref.find(gram);
                if (it != max_ref.end()) matched[n - 1] += std::min(c, it->second);
            }
        }
    }

    double log_prec = 0.0;
    for (int n = 0; n < kMaxOrder; ++n) {
        double num = matched[n];
        double den = total[n];
        if (smooth && n > 0) {
            num += 1.0;
            den += 1.0;
        }
        if (den <= 0.0 || num <= 0.0) return 0.0;
        log_prec += 0.25 * std::log(num / den);
    }
    const double bp = hyp_len >= ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
    return 100.0 * bp * std::exp(log_prec);
}

LengthHistogram length_histogram(const std::vector<Instruction>& references,
                                 const std::vector<Instruction>& hypotheses, int bucket_width) {
    if (references.size() != hypotheses.size()) {
        throw Error::data("length_histogram: reference/hypothesis count mismatch");
    }
    if (bucket_width < 1) throw Error::config("length_histogram: bucket width must be >= 1");
    LengthHistogram h;
    h.bucket_width = bucket_width;
    h.total = static_cast<int>(references.size());
    for (size_t i = 0; i < references.size(); ++i) {
        const int diff = static_cast<int>(references[i].size()) -
                         static_cast<int>(hypotheses[i].size());
        const int bucket = diff >= 0 ? diff / bucket_width : -(((-diff) + bucket_width - 1) / bucket_width);
        ++h.buckets[bucket];
    }
    return h;
}

} // namespace foam

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "foam/metrics.hpp"
#include "foam/rng.hpp"
#include "helpers.hpp"

using namespace foam;

namespace {

// Exhaustive DTW oracle: minimum alignment cost over every monotone warping
// path from (0,0) to (n-1,m-1).
double dtw_brute(const EnvironmentGraph& env, std::span<const int> a, std::span<const int> b,
                 size_t i, size_t j) {
    const double ground = shortest_distance(env, a[i], b[j]);
    if (i == 0 && j == 0) return ground;
    double best = std::numeric_limits<double>::infinity();
    if (i > 0) best = std::min(best, dtw_brute(env, a, b, i - 1, j));
    if (j > 0) best = std::min(best, dtw_brute(env, a, b, i, j - 1));
    if (i > 0 && j > 0) best = std::min(best, dtw_brute(env, a, b, i - 1, j - 1));
    return ground + best;
}

// 0-1-2-3 line graph
EnvironmentGraph line4() {
    EnvironmentGraph env;
    env.env_id = "line4";
    env.grid = 4;
    env.feature_dim = 2;
    env.nodes.resize(4);
    for (int i = 0; i < 4; ++i) {
        env.nodes[static_cast<size_t>(i)] = {i, i, 0, 0, std::vector<float>(2, 0.0f)};
    }
    env.adj = {{1}, {0, 2}, {1, 3}, {2}};
    env.build_distances();
    return env;
}

Route make_route(const std::string& env_id, std::vector<int> nodes) {
    Route r;
    r.env_id = env_id;
    r.nodes = std::move(nodes);
    r.goal = r.nodes.back();
    return r;
}

} // namespace

TEST_CASE("dtw equals brute-force alignment enumeration up to length 6") {
    const auto envs = generate_world(41, 1, 1, 1, 4, 4, 6);
    const EnvironmentGraph& env = envs[0];

    // walk-based path collection, lengths 1..6
    Rng rng(13);
    std::vector<std::vector<int>> paths;
    for (int len = 1; len <= 6; ++len) {
        for (int trial = 0; trial < 6; ++trial) {
            std::vector<int> p{rng.uniform_int(env.node_count())};
            while (static_cast<int>(p.size()) < len) {
                const auto& nb = env.adj[static_cast<size_t>(p.back())];
                p.push_back(nb[static_cast<size_t>(rng.uniform_int(static_cast<int>(nb.size())))]);
            }
            paths.push_back(std::move(p));
        }
    }
    int compared = 0;
    for (const auto& a : paths) {
        for (const auto& b : paths) {
            const double fast = dtw_cost(env, a, b);
            const double brute = dtw_brute(env, a, b, a.size() - 1, b.size() - 1);
            REQUIRE(fast == doctest::Approx(brute).epsilon(1e-12));
            ++compared;
        }
    }
    CHECK(compared == 36 * 36);
}

TEST_CASE("episode metrics on hand-computed fixtures") {
    const EnvironmentGraph env = line4();
    const Route ref = make_route("line4", {0, 1, 2});

    SUBCASE("exact prediction") {
        const EpisodeMetrics m = episode_metrics(env, ref, ref, 1);
        CHECK(m.success == 1);
        CHECK(m.ne == 0);
        CHECK(m.spl == doctest::Approx(1.0));
        CHECK(m.ndtw == doctest::Approx(1.0));
        CHECK(m.sdtw == doctest::Approx(1.0));
    }

    SUBCASE("overshoot by one hop still succeeds at d_th=1") {
        const Route pred = make_route("line4", {0, 1, 2, 3});
        const EpisodeMetrics m = episode_metrics(env, pred, ref, 1);
        CHECK(m.success == 1);
        CHECK(m.ne == 1);
        CHECK(m.spl == doctest::Approx(2.0 / 3.0));
        // alignment (0,0)(1,1)(2,2)(3,2): cost 1 -> exp(-1/3)
        CHECK(m.ndtw == doctest::Approx(std::exp(-1.0 / 3.0)));
        CHECK(m.sdtw == doctest::Approx(std::exp(-1.0 / 3.0)));
    }

    SUBCASE("stopping too far away zeroes success, spl and sdtw") {
        const Route pred = make_route("line4", {0});
        const EpisodeMetrics m = episode_metrics(env, pred, ref, 1);
        CHECK(m.success == 0);
        CHECK(m.ne == 2);
        CHECK(m.spl == 0.0);
        CHECK(m.sdtw == 0.0);
        CHECK(m.ndtw > 0.0);
    }

    SUBCASE("successful detour of twice the shortest length gives spl 0.5") {
        const Route pred = make_route("line4", {0, 1, 0, 1, 2});
        const EpisodeMetrics m = episode_metrics(env, pred, ref, 1);
        CHECK(m.success == 1);
        CHECK(m.spl == doctest::Approx(0.5));
    }

    SUBCASE("sdtw never exceeds ndtw or success") {
        Rng rng(3);
        for (int i = 0; i < 50; ++i) {
            std::vector<int> nodes{rng.uniform_int(4)};
            for (int s = 0; s < 3; ++s) {
                const auto& nb = env.adj[static_cast<size_t>(nodes.back())];
                nodes.push_back(
                    nb[static_cast<size_t>(rng.uniform_int(static_cast<int>(nb.size())))]);
            }
            const Route pred = make_route("line4", std::move(nodes));
            const EpisodeMetrics m = episode_metrics(env, pred, ref, 1);
            CHECK(m.sdtw <= m.ndtw + 1e-12);
            CHECK(m.sdtw <= m.success + 1e-12);
            CHECK(m.spl <= m.success + 1e-12);
            CHECK(m.ndtw > 0.0);
            CHECK(m.ndtw <= 1.0);
        }
    }

    SUBCASE("environment mismatch is an error") {
        Route wrong = ref;
        wrong.env_id = "other";
        CHECK_THROWS_AS((void)episode_metrics(env, wrong, ref, 1), Error);
    }
}

TEST_CASE("corpus bleu") {
    using I = Instruction;

    SUBCASE("identical corpus scores 100") {
        const std::vector<I> hyps{{1, 2, 3, 4, 5}, {6, 7, 8, 9}};
        const std::vector<std::vector<I>> refs{{hyps[0]}, {hyps[1]}};
        CHECK(corpus_bleu(refs, hyps) == doctest::Approx(100.0));
    }

    SUBCASE("disjoint tokens score 0") {
        const std::vector<I> hyps{{1, 2, 3, 4}};
        const std::vector<std::vector<I>> refs{{I{5, 6, 7, 8}}};
        CHECK(corpus_bleu(refs, hyps) == 0.0);
    }

    SUBCASE("two-sentence corpus matches the hand computation") {
        // r1 = h1 = [1 2 3 4 1 5]; r2 = [1 6 3 4 1 5], h2 = [1 6 3 4 5]
        // 1-gram 11/11, 2-gram 8/9, 3-gram 6/7, 4-gram 4/5
        // c = 11, r = 12 -> BP = exp(1 - 12/11)
        const std::vector<I> hyps{{1, 2, 3, 4, 1, 5}, {1, 6, 3, 4, 5}};
        const std::vector<std::vector<I>> refs{{I{1, 2, 3, 4, 1, 5}}, {I{1, 6, 3, 4, 1, 5}}};
        const double expected = 100.0 * std::exp(1.0 - 12.0 / 11.0) *
                                std::pow((8.0 / 9.0) * (6.0 / 7.0) * (4.0 / 5.0), 0.25);
        CHECK(corpus_bleu(refs, hyps) == doctest::Approx(expected).epsilon(1e-9));
    }

    SUBCASE("corpus order is irrelevant") {
        const std::vector<I> hyps{{1, 2, 3, 4, 1, 5}, {1, 6, 3, 4, 5}, {2, 2, 3, 9}};
        const std::vector<std::vector<I>> refs{
            {I{1, 2, 3, 4, 1, 5}}, {I{1, 6, 3, 4, 1, 5}}, {I{2, 2, 3, 4}}};
        const double base = corpus_bleu(refs, hyps);
        const std::vector<int> perm{2, 0, 1};
        std::vector<I> hyps2;
        std::vector<std::vector<I>> refs2;
        for (int i : perm) {
            hyps2.push_back(hyps[static_cast<size_t>(i)]);
            refs2.push_back(refs[static_cast<size_t>(i)]);
        }
        CHECK(corpus_bleu(refs2, hyps2) == doctest::Approx(base).epsilon(1e-12));
    }

    SUBCASE("multi-reference clipping picks the best reference") {
        const std::vector<I> hyps{{1, 2, 3, 4}};
        const std::vector<std::vector<I>> refs{{I{9, 9, 9, 9}, I{1, 2, 3, 4}}};
        CHECK(corpus_bleu(refs, hyps) == doctest::Approx(100.0));
    }

    SUBCASE("empty corpus is an error") {
        CHECK_THROWS_AS((void)corpus_bleu({}, {}), Error);
    }
}

TEST_CASE("length histogram") {
    using I = Instruction;
    const std::vector<I> refs{{1, 2, 3}, {1, 2, 3, 4}, {1}};

    SUBCASE("identical corpora put all mass at zero") {
        const LengthHistogram h = length_histogram(refs, refs, 1);
        CHECK(h.total == 3);
        CHECK(h.buckets.at(0) == 3);
        CHECK(h.buckets.size() == 1);
    }

    SUBCASE("counts always sum to the corpus size") {
        const std::vector<I> hyps{{1, 2}, {1, 2, 3, 4, 5, 6}, {1}};
        const LengthHistogram h = length_histogram(refs, hyps, 1);
        int sum = 0;
        for (const auto& [b, c] : h.buckets) sum += c;
        CHECK(sum == 3);
        CHECK(h.buckets.at(1) == 1);  // 3 - 2
        CHECK(h.buckets.at(-2) == 1); // 4 - 6
        CHECK(h.buckets.at(0) == 1);
    }

    SUBCASE("uniformly shortening hypotheses shifts the histogram") {
        const std::vector<I> hyps{{1, 2, 3}, {1, 2, 3, 4}};
        std::vector<I> shorter;
        for (const I& h : hyps) shorter.emplace_back(h.begin(), h.end() - 1);
        const std::vector<I> refs2{refs[0], refs[1]};
        const LengthHistogram base = length_histogram(refs2, hyps, 1);
        const LengthHistogram shifted = length_histogram(refs2, shorter, 1);
        for (const auto& [bucket, count] : base.buckets) {
            CHECK(shifted.buckets.at(bucket + 1) == count);
        }
    }

    SUBCASE("mismatched lengths are an error") {
        CHECK_THROWS_AS((void)length_histogram(refs, {{1}}, 1), Error);
    }
}

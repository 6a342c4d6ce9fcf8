#include <doctest.h>

#include <set>

#include "foam/dataset.hpp"
#include "foam/world.hpp"
#include "helpers.hpp"

using namespace foam;

TEST_CASE("world generation determinism and structure") {
    const auto envs1 = generate_world(7, 2, 1, 1, 4, 8, 6);
    const auto envs2 = generate_world(7, 2, 1, 1, 4, 8, 6);
    REQUIRE(envs1.size() == 4);
    for (size_t i = 0; i < envs1.size(); ++i) {
        CHECK(envs1[i].env_id == envs2[i].env_id);
        CHECK(envs1[i].adj == envs2[i].adj);
        for (size_t n = 0; n < envs1[i].nodes.size(); ++n) {
            CHECK(envs1[i].nodes[n].tag == envs2[i].nodes[n].tag);
            CHECK(envs1[i].nodes[n].feat == envs2[i].nodes[n].feat); // bitwise
        }
    }

    SUBCASE("degree bound and connectivity") {
        for (const EnvironmentGraph& env : envs1) {
            for (int n = 0; n < env.node_count(); ++n) {
                CHECK(env.degree(n) <= 4);
                CHECK(shortest_distance(env, 0, n) >= 0); // reachable
            }
        }
    }

    SUBCASE("tag sets of train and val-unseen are disjoint") {
        std::set<int> train_tags, unseen_tags;
        for (const EnvironmentGraph& env : envs1) {
            for (const WorldNode& n : env.nodes) {
                if (env.split == Split::train) train_tags.insert(n.tag);
                if (env.split == Split::val_unseen) unseen_tags.insert(n.tag);
            }
        }
        for (int t : unseen_tags) CHECK(train_tags.count(t) == 0);
    }

    SUBCASE("no environment id repeats across splits") {
        std::set<std::string> ids;
        for (const EnvironmentGraph& env : envs1) CHECK(ids.insert(env.env_id).second);
    }

    SUBCASE("infeasible tag split") {
        CHECK_THROWS_AS((void)generate_world(1, 1, 1, 1, 3, 4, 1), Error);
    }

    SUBCASE("parallel generation matches serial") {
        const auto par = generate_world(7, 2, 1, 1, 4, 8, 6, /*jobs=*/3);
        REQUIRE(par.size() == envs1.size());
        for (size_t i = 0; i < par.size(); ++i) {
            CHECK(par[i].adj == envs1[i].adj);
            CHECK(par[i].nodes[3].feat == envs1[i].nodes[3].feat);
        }
    }
}

TEST_CASE("route sampling") {
    const auto envs = generate_world(21, 1, 1, 1, 5, 8, 6);
    const EnvironmentGraph& env = envs[0];

    SUBCASE("1000 samples stay within bounds and replay exactly") {
        Rng rng(3);
        for (int i = 0; i < 1000; ++i) {
            const Route r = sample_route(env, rng, 3, 8);
            const int nodes = static_cast<int>(r.nodes.size());
            CHECK(nodes >= 3);
            CHECK(nodes <= 8);
            CHECK(r.actions.back() == act_stop);
            CHECK(replay_matches(env, r));
            // shortest-path property
            CHECK(r.hops() == shortest_distance(env, r.nodes.front(), r.goal));
        }
    }

    SUBCASE("two-node path graph gives a one-hop route") {
        // hand-built 2-node environment
        EnvironmentGraph tiny;
        tiny.env_id = "tiny";
        tiny.grid = 2;
        tiny.feature_dim = 4;
        tiny.nodes.resize(2);
        tiny.nodes[0] = {0, 0, 0, 0, std::vector<float>(4, 0.1f)};
        tiny.nodes[1] = {1, 1, 0, 1, std::vector<float>(4, 0.2f)};
        tiny.adj = {{1}, {0}};
        tiny.build_distances();
        Rng rng(5);
        const Route r = sample_route(tiny, rng, 2, 2);
        CHECK(r.hops() == 1);
        CHECK(r.actions.back() == act_stop);
    }

    SUBCASE("unsatisfiable bounds raise a data error naming the env") {
        Rng rng(5);
        CHECK_THROWS_WITH_AS((void)sample_route(env, rng, 26, 30),
                             doctest::Contains(env.env_id.c_str()), Error);
    }
}

TEST_CASE("observations and dropout") {
    const auto envs = generate_world(4, 1, 1, 1, 4, 8, 6);
    const EnvironmentGraph& env = envs[0];

    SUBCASE("heading one-hot is appended") {
        const auto obs = observe(env, 5, 2, nullptr);
        REQUIRE(obs.size() == 12);
        CHECK(obs[8 + 2] == 1.0f);
        CHECK(obs[8 + 0] == 0.0f);
    }

    SUBCASE("all-kept mask is identical to no mask") {
        const DropoutMask full = full_keep_mask(8);
        CHECK(observe(env, 3, 0, &full) == observe(env, 3, 0, nullptr));
    }

    SUBCASE("kept dimensions are rescaled by 1/keep_prob") {
        DropoutMask m;
        m.keep_prob = 0.5f;
        m.keep.assign(8, 0);
        m.keep[2] = 1;
        const auto masked = observe(env, 3, 0, &m);
        const auto plain = observe(env, 3, 0, nullptr);
        CHECK(masked[2] == doctest::Approx(2.0f * plain[2]));
        CHECK(masked[0] == 0.0f);
        CHECK(masked[7] == 0.0f);
    }

    SUBCASE("the same mask zeroes the same dims on every node of an episode") {
        Rng rng(8);
        const DropoutMask m = sample_dropout_mask(8, 0.5f, rng);
        const auto a = observe(env, 1, 0, &m);
        const auto b = observe(env, 9, 0, &m);
        for (size_t i = 0; i < m.keep.size(); ++i) {
            if (!m.keep[i]) {
                CHECK(a[i] == 0.0f);
                CHECK(b[i] == 0.0f);
            }
        }
    }

    SUBCASE("mask projection is idempotent") {
        Rng rng(8);
        const DropoutMask m = sample_dropout_mask(8, 0.6f, rng);
        std::vector<float> once(env.nodes[2].feat);
        m.project(once);
        std::vector<float> twice = once;
        m.project(twice);
        CHECK(once == twice);
    }

    SUBCASE("invalid node id") {
        CHECK_THROWS_AS((void)observe(env, 99, 0, nullptr), Error);
    }
}

TEST_CASE("shortest distances") {
    const auto envs = generate_world(4, 1, 1, 1, 4, 8, 6);
    const EnvironmentGraph& env = envs[0];
    CHECK(shortest_distance(env, 3, 3) == 0);
    for (int n : env.adj[0]) CHECK(shortest_distance(env, 0, n) == 1);
    for (int a = 0; a < env.node_count(); a += 3) {
        for (int b = 0; b < env.node_count(); b += 2) {
            CHECK(shortest_distance(env, a, b) == shortest_distance(env, b, a));
        }
    }
}

TEST_CASE("route replay property over sampled routes") {
    const auto opt = foam::testing::tiny_world_options(19);
    const WorldData world = build_world(opt);
    for (const DatasetRecord& rec : world.train) {
        const EnvironmentGraph& env = world.env(rec.env_id);
        CHECK(replay_matches(env, rec.route));
        const auto visited =
            replay_actions(env, rec.route.nodes.front(), kStartHeading, rec.route.actions);
        CHECK(visited == rec.route.nodes);
    }
}

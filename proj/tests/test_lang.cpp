#include <doctest.h>

#include "foam/dataset.hpp"
#include "foam/lang.hpp"
#include "helpers.hpp"

using namespace foam;

namespace {

// Environment where node 0 -> 1 is a single east edge; tag of node 1 is
// forced so the stop phrase is predictable.
EnvironmentGraph line_env(int tag_goal) {
    EnvironmentGraph env;
    env.env_id = "line";
    env.grid = 2;
    env.feature_dim = 4;
    env.nodes.resize(4);
    for (int i = 0; i < 4; ++i) {
        env.nodes[static_cast<size_t>(i)] = {i, i % 2, i / 2, 0, std::vector<float>(4, 0.0f)};
    }
    env.nodes[1].tag = tag_goal;
    env.adj = {{1}, {0}, {}, {}};
    env.adj[2] = {};
    env.adj[3] = {};
    env.build_distances();
    return env;
}

} // namespace

TEST_CASE("vocabulary basics") {
    const Vocabulary v(12);
    CHECK(v.size() == 40);
    CHECK(v.id("<pad>") == Vocabulary::pad_id);
    CHECK(v.id("<eos>") == Vocabulary::eos_id);
    CHECK(v.id("nonsense-word") == Vocabulary::unk_id);
    CHECK(v.token(v.tag_token_id(0)) == "red");
    CHECK(v.tag_of_token(v.tag_token_id(5)) == 5);
    CHECK(v.tag_of_token(v.id("go")) == -1);
}

TEST_CASE("grammar emits the documented phrase for a one-hop route") {
    const Vocabulary vocab(12);
    EnvironmentGraph env = line_env(0); // goal tag "red"
    Route route;
    route.env_id = "line";
    route.nodes = {0, 1};
    route.actions = {act_right, act_forward, act_stop}; // east from a north start
    route.goal = 1;

    // style 0: "go forward ... stop at the red"; the initial turn shows up too
    const Instruction ins = annotate(route, env, vocab, 0);
    CHECK(vocab.detokenize(ins) == "turn right go forward stop at the red");

    SUBCASE("pure forward route matches the minimal phrase") {
        EnvironmentGraph north = line_env(0);
        // rewire so 0 -> 2 (north edge)
        north.adj = {{2}, {}, {0}, {}};
        north.nodes[2].tag = 0;
        north.build_distances();
        Route up;
        up.env_id = "line";
        up.nodes = {0, 2};
        up.actions = {act_forward, act_stop};
        up.goal = 2;
        CHECK(vocab.detokenize(annotate(up, north, vocab, 0)) == "go forward stop at the red");
    }
}

TEST_CASE("annotation determinism and style variation") {
    const auto opt = foam::testing::tiny_world_options(23);
    const WorldData world = build_world(opt);
    const EnvironmentGraph& env = world.env(world.train.front().env_id);
    const Route& route = world.train.front().route;

    CHECK(annotate(route, env, world.vocab, 1) == annotate(route, env, world.vocab, 1));
    const Instruction s0 = annotate(route, env, world.vocab, 0);
    const Instruction s1 = annotate(route, env, world.vocab, 1);
    const Instruction s2 = annotate(route, env, world.vocab, 2);
    CHECK(s0 != s1);
    CHECK(s1 != s2);

    // every style parses back to the same route
    for (const Instruction& ins : {s0, s1, s2}) {
        const Route parsed =
            oracle_parse(ins, env, world.vocab, route.nodes.front(), kStartHeading);
        CHECK(parsed.nodes == route.nodes);
        CHECK(parsed.actions == route.actions);
    }
}

TEST_CASE("oracle parser round trip over 1000 sampled routes") {
    const auto envs = generate_world(31, 1, 1, 1, 5, 8, 6);
    const Vocabulary vocab(6);
    Rng rng(17);
    int checked = 0;
    for (int i = 0; i < 1000; ++i) {
        const EnvironmentGraph& env = envs[static_cast<size_t>(i % envs.size())];
        const Route route = sample_route(env, rng, 3, 8);
        const uint64_t style = static_cast<uint64_t>(i % kStyleCount);
        const Instruction ins = annotate(route, env, vocab, style);
        const Route parsed = oracle_parse(ins, env, vocab, route.nodes.front(), kStartHeading);
        REQUIRE(parsed.nodes == route.nodes);
        REQUIRE(parsed.actions == route.actions);
        REQUIRE(parsed.goal == route.goal);
        ++checked;
    }
    CHECK(checked == 1000);
}

TEST_CASE("parser error paths") {
    const Vocabulary vocab(12);
    const EnvironmentGraph env = line_env(0);

    CHECK_THROWS_AS((void)oracle_parse(Instruction{}, env, vocab, 0, kStartHeading), Error);
    CHECK_THROWS_AS(
        (void)oracle_parse(Instruction{Vocabulary::unk_id}, env, vocab, 0, kStartHeading), Error);
    // truncated phrase
    CHECK_THROWS_AS((void)oracle_parse(vocab.tokenize("go"), env, vocab, 0, kStartHeading),
                    Error);
    // no stop phrase
    CHECK_THROWS_AS(
        (void)oracle_parse(vocab.tokenize("turn right go forward"), env, vocab, 0, kStartHeading),
        Error);
    // forward with no edge (heading north from node 0)
    CHECK_THROWS_AS(
        (void)oracle_parse(vocab.tokenize("go forward stop at the red"), env, vocab, 0,
                           kStartHeading),
        Error);
    // wrong goal tag
    CHECK_THROWS_AS(
        (void)oracle_parse(vocab.tokenize("turn right go forward stop at the blue"), env, vocab,
                           0, kStartHeading),
        Error);
    // trailing tokens
    CHECK_THROWS_AS(
        (void)oracle_parse(vocab.tokenize("turn right go forward stop at the red go forward"),
                           env, vocab, 0, kStartHeading),
        Error);
}

TEST_CASE("vocabulary closure: annotations never contain unk or reserved ids") {
    const auto opt = foam::testing::tiny_world_options(29);
    const WorldData world = build_world(opt);
    for (const DatasetRecord& rec : world.train) {
        for (int tok : rec.tokens) {
            CHECK(tok >= 4);
            CHECK(tok < world.vocab.size());
        }
    }
}

TEST_CASE("annotation length is monotone under route extension") {
    // truncating a route to a prefix (re-terminated with stop) never yields a
    // longer annotation
    const auto envs = generate_world(37, 1, 1, 1, 5, 8, 6);
    const EnvironmentGraph& env = envs[0];
    const Vocabulary vocab(6);
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const Route route = sample_route(env, rng, 4, 8);
        Route prefix;
        prefix.env_id = route.env_id;
        prefix.nodes.assign(route.nodes.begin(), route.nodes.end() - 1);
        prefix.goal = prefix.nodes.back();
        prefix.actions = actions_from_nodes(env, prefix.nodes);
        const size_t full = annotate(route, env, vocab, 0).size();
        const size_t part = annotate(prefix, env, vocab, 0).size();
        CHECK(part <= full);
    }
}

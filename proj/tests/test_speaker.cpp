#include <doctest.h>

#include <cmath>

#include "foam/speaker.hpp"
#include "helpers.hpp"

using namespace foam;
using foam::testing::all_sequences;

namespace {

struct Fixture {
    WorldData world;
    SpeakerConfig cfg;
    ParamSet params;

    static GenWorldOptions options(uint64_t seed, int num_tags) {
        GenWorldOptions opt = foam::testing::tiny_world_options(seed);
        if (num_tags > 0) opt.num_tags = num_tags;
        return opt;
    }

    explicit Fixture(uint64_t seed = 5, int embed = 10, int hidden = 16, int num_tags = 0)
        : world(build_world(options(seed, num_tags))) {
        cfg.vocab = world.vocab.size();
        cfg.embed = embed;
        cfg.hidden = hidden;
        cfg.step_dim = world.options.feature_dim + kHeadingCount + kActionCount;
        cfg.bos_id = Vocabulary::bos_id;
        cfg.eos_id = Vocabulary::eos_id;
        cfg.max_len = 40;
        Rng rng(stream_seed(seed, "init"));
        params = init_speaker_params(cfg, rng);
    }

    std::vector<SpeakerBatchItem> batch(int count) const {
        std::vector<SpeakerBatchItem> b;
        for (int i = 0; i < count; ++i) {
            const DatasetRecord& rec = world.train[static_cast<size_t>(i) % world.train.size()];
            SpeakerBatchItem item;
            item.env = &world.env(rec.env_id);
            item.route = rec.route;
            item.instruction = rec.tokens;
            b.push_back(std::move(item));
        }
        return b;
    }
};

// Tiny toy speaker: vocabulary of `vocab` tokens where the last id is EOS
// (and doubles as BOS for the first decoder input).
struct Toy {
    WorldData world;
    SpeakerConfig cfg;
    ParamSet params;
    Route route;
    const EnvironmentGraph* env;

    Toy(int vocab, int max_len, uint64_t seed) {
        GenWorldOptions opt = foam::testing::tiny_world_options(seed);
        opt.grid = 3;
        opt.feature_dim = 4;
        opt.num_tags = 3;
        opt.routes_per_env = 2;
        opt.route_min_nodes = 2;
        opt.route_max_nodes = 3;
        world = build_world(opt);
        cfg.vocab = vocab;
        cfg.embed = 4;
        cfg.hidden = 6;
        cfg.step_dim = opt.feature_dim + kHeadingCount + kActionCount;
        cfg.bos_id = vocab - 1;
        cfg.eos_id = vocab - 1;
        cfg.max_len = max_len;
        Rng rng(stream_seed(seed, "toy-init"));
        params = init_speaker_params(cfg, rng);
        env = &world.envs.front();
        route = world.train.front().route;
    }
};

} // namespace

TEST_CASE("speaker loss at random initialization is close to ln(vocab)") {
    const Fixture f(5, 10, 16, /*num_tags=*/12); // the full 40-token vocabulary
    REQUIRE(f.cfg.vocab == 40);
    const TapeLoss loss = speaker_loss(f.params, f.cfg, f.batch(8));
    CHECK(loss.value() == doctest::Approx(std::log(40.0)).epsilon(0.1 / std::log(40.0)));
}

TEST_CASE("a perfect predictor has zero loss") {
    const Fixture f;
    ParamSet ps = f.params;
    for (auto& [name, t] : ps.items) {
        for (float& v : t.data) v = 0.0f;
    }
    ps.at("speaker.out.b").data[static_cast<size_t>(f.cfg.eos_id)] = 60.0f;
    // empty instruction: the only target token is EOS
    SpeakerBatchItem item;
    item.env = &f.world.env(f.world.train.front().env_id);
    item.route = f.world.train.front().route;
    item.instruction = {};
    CHECK(speaker_loss(ps, f.cfg, {item}).value() == 0.0f);
}

TEST_CASE("duplicating the batch leaves the mean speaker loss unchanged") {
    const Fixture f;
    auto once = f.batch(4);
    auto twice = f.batch(4);
    for (const auto& item : once) twice.push_back(item);
    CHECK(speaker_loss(f.params, f.cfg, once).value() ==
          doctest::Approx(speaker_loss(f.params, f.cfg, twice).value()).epsilon(1e-6));
}

TEST_CASE("generation") {
    const Fixture f;
    const DatasetRecord& rec = f.world.train.front();
    const EnvironmentGraph& env = f.world.env(rec.env_id);

    SUBCASE("greedy decoding is deterministic") {
        const SpeakerSample a = speaker_generate(f.params, f.cfg, env, rec.route, false, 1.0f,
                                                 nullptr);
        const SpeakerSample b = speaker_generate(f.params, f.cfg, env, rec.route, false, 1.0f,
                                                 nullptr);
        CHECK(a.tokens == b.tokens);
        CHECK(a.token_logps == b.token_logps);
        CHECK(static_cast<int>(a.tokens.size()) <= f.cfg.max_len);
    }

    SUBCASE("temperature approaching zero reproduces greedy decoding") {
        const SpeakerSample greedy = speaker_generate(f.params, f.cfg, env, rec.route, false,
                                                      1.0f, nullptr);
        Rng rng(4);
        const SpeakerSample cold = speaker_generate(f.params, f.cfg, env, rec.route, true, 1e-4f,
                                                    &rng);
        CHECK(cold.tokens == greedy.tokens);
    }

    SUBCASE("total log-prob is the sum of the per-token log-probs") {
        Rng rng(6);
        const SpeakerSample s = speaker_generate(f.params, f.cfg, env, rec.route, true, 1.0f,
                                                 &rng);
        float sum = 0.0f;
        for (float lp : s.token_logps) sum += lp;
        CHECK(s.total_logp == doctest::Approx(sum).epsilon(1e-6));
    }

    SUBCASE("uniform single-step toy sampling is 1/3 each within 2%") {
        Toy toy(3, 1, 17);
        for (auto& [name, t] : toy.params.items) {
            for (float& v : t.data) v = 0.0f; // logits [0,0,0]
        }
        Rng rng(23);
        std::array<int, 3> counts{};
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            const SpeakerSample s = speaker_generate(toy.params, toy.cfg, *toy.env, toy.route,
                                                     true, 1.0f, &rng);
            REQUIRE(s.tokens.size() == 1);
            ++counts[static_cast<size_t>(s.tokens[0])];
        }
        for (int tok = 0; tok < 3; ++tok) {
            const double freq = static_cast<double>(counts[static_cast<size_t>(tok)]) / n;
            CHECK(std::abs(freq - 1.0 / 3.0) <= 0.02);
        }
    }
}

TEST_CASE("scoring") {
    const Fixture f;
    const DatasetRecord& rec = f.world.train.front();
    const EnvironmentGraph& env = f.world.env(rec.env_id);

    SUBCASE("score of a greedy generation equals its recorded log-prob") {
        const SpeakerSample s = speaker_generate(f.params, f.cfg, env, rec.route, false, 1.0f,
                                                 nullptr);
        const double score = speaker_score(f.params, f.cfg, env, rec.route, s.tokens);
        CHECK(score == doctest::Approx(s.total_logp).epsilon(1e-5));
    }

    SUBCASE("re-scoring a sampled instruction reproduces its recorded log-prob") {
        Rng rng(12);
        for (int trial = 0; trial < 10; ++trial) {
            const SpeakerSample s = speaker_generate(f.params, f.cfg, env, rec.route, true, 1.0f,
                                                     &rng);
            const double score = speaker_score(f.params, f.cfg, env, rec.route, s.tokens);
            CHECK(std::abs(score - s.total_logp) < 1e-5);
        }
    }

    SUBCASE("any score is non-positive") {
        CHECK(speaker_score(f.params, f.cfg, env, rec.route, rec.tokens) <= 0.0);
    }

    SUBCASE("empty instruction and out-of-range ids are errors") {
        CHECK_THROWS_AS((void)speaker_score(f.params, f.cfg, env, rec.route, Instruction{}),
                        Error);
        CHECK_THROWS_AS(
            (void)speaker_score(f.params, f.cfg, env, rec.route, Instruction{f.cfg.vocab + 3}),
            Error);
    }
}

TEST_CASE("sequence probabilities normalize to one on tiny models") {
    for (const int vocab : {2, 3}) {
        Toy toy(vocab, 2, static_cast<uint64_t>(31 + vocab));
        const auto sequences = all_sequences(vocab, toy.cfg.eos_id, toy.cfg.max_len);
        double total = 0.0;
        for (const Instruction& seq : sequences) {
            total += std::exp(speaker_score(toy.params, toy.cfg, *toy.env, toy.route, seq));
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-4));
        CHECK(sequences.size() == (vocab == 2 ? 3u : 7u));
    }
}

TEST_CASE("speaker loss gradient matches finite differences on a micro config") {
    GenWorldOptions opt = foam::testing::tiny_world_options(9);
    opt.grid = 3;
    opt.feature_dim = 3;
    opt.num_tags = 3;
    opt.routes_per_env = 3;
    opt.route_min_nodes = 2;
    opt.route_max_nodes = 3;
    const WorldData world = build_world(opt);

    SpeakerConfig cfg;
    cfg.vocab = 6; // clip token ids below
    cfg.embed = 3;
    cfg.hidden = 4;
    cfg.step_dim = opt.feature_dim + kHeadingCount + kActionCount;
    cfg.bos_id = 1;
    cfg.eos_id = 2;
    cfg.max_len = 10;
    Rng rng(13);
    ParamSet params = init_speaker_params(cfg, rng);

    std::vector<SpeakerBatchItem> batch;
    for (int i = 0; i < 2; ++i) {
        const DatasetRecord& rec = world.train[static_cast<size_t>(i)];
        SpeakerBatchItem item;
        item.env = &world.env(rec.env_id);
        item.route = rec.route;
        for (size_t t = 0; t < 5 && t < rec.tokens.size(); ++t) {
            item.instruction.push_back(rec.tokens[t] % 6); // remap into the toy vocab
        }
        batch.push_back(std::move(item));
    }

    const GradMap grads = speaker_loss(params, cfg, batch).backward();
    auto eval = [&](const ParamSet& ps) {
        return static_cast<double>(speaker_loss(ps, cfg, batch).value());
    };
    const float h = 1e-3f;
    double worst = 0.0;
    for (auto& [name, tensor] : params.items) {
        const Tensor& g = grads.at(name);
        for (size_t c = 0; c < tensor.data.size(); ++c) {
            ParamSet plus = params, minus = params;
            plus.at(name).data[c] += h;
            minus.at(name).data[c] -= h;
            const double fd = (eval(plus) - eval(minus)) / (2.0 * h);
            const double rel = std::abs(g.data[c] - fd) /
                               std::max({1.0, std::abs(fd), std::abs(double(g.data[c]))});
            worst = std::max(worst, rel);
        }
    }
    CHECK(worst < 1e-3);
    MESSAGE("speaker loss fd worst rel err: ", worst);
}

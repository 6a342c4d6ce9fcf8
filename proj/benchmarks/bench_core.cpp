#include <benchmark/benchmark.h>

#include "foam/eval.hpp"
#include "foam/metrics.hpp"
#include "foam/trainer.hpp"

using namespace foam;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (float& v : t.data) v = rng.uniform_float(-0.5f, 0.5f);
    return t;
}

const WorldData& bench_world() {
    static const WorldData world = [] {
        GenWorldOptions opt;
        opt.seed = 7;
        opt.n_train = 2;
        opt.n_val_seen = 1;
        opt.n_val_unseen = 1;
        opt.grid = 5;
        opt.feature_dim = 16;
        opt.num_tags = 12;
        opt.routes_per_env = 30;
        return build_world(opt);
    }();
    return world;
}

TrainConfig bench_config() {
    TrainConfig cfg;
    cfg.seed = 7;
    cfg.pretrain_steps = 0;
    cfg.total_steps = 0;
    cfg.batch_labeled = 8;
    cfg.batch_aug = 8;
    return cfg;
}

EpisodeBatch labeled_batch(const WorldData& world, int count) {
    EpisodeBatch batch;
    for (int i = 0; i < count; ++i) {
        const DatasetRecord& rec = world.train[static_cast<size_t>(i) % world.train.size()];
        EpisodeItem item;
        item.env = &world.env(rec.env_id);
        item.instruction = rec.tokens;
        item.target = rec.route;
        batch.items.push_back(std::move(item));
    }
    return batch;
}

} // namespace

static void BM_MatMul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(3);
    Tape t;
    const int a = t.leaf(random_tensor({n, n}, rng));
    const int b = t.leaf(random_tensor({n, n}, rng));
    for (auto _ : state) {
        Tape fresh;
        const int x = fresh.constant(t.value(a));
        const int y = fresh.constant(t.value(b));
        benchmark::DoNotOptimize(fresh.matmul(x, y));
    }
    state.SetItemsProcessed(state.iterations() * int64_t{2} * n * n * n);
}
BENCHMARK(BM_MatMul)->Arg(16)->Arg(32)->Arg(64);

static void BM_FollowerLossBackward(benchmark::State& state) {
    const WorldData& world = bench_world();
    const TrainConfig cfg = bench_config();
    const ParamSet params = init_follower_for(world, cfg);
    const FollowerConfig fcfg = make_follower_config(cfg, world);
    const EpisodeBatch batch = labeled_batch(world, static_cast<int>(state.range(0)));
    for (auto _ : state) {
        TapeLoss loss = follower_loss(params, fcfg, batch, true);
        benchmark::DoNotOptimize(loss.backward());
    }
}
BENCHMARK(BM_FollowerLossBackward)->Arg(4)->Arg(8);

static void BM_SpeakerGenerate(benchmark::State& state) {
    const WorldData& world = bench_world();
    const TrainConfig cfg = bench_config();
    const ParamSet params = init_speaker_for(world, cfg);
    const SpeakerConfig scfg = make_speaker_config(cfg, world);
    const DatasetRecord& rec = world.train.front();
    Rng rng(5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(speaker_generate(params, scfg, world.env(rec.env_id), rec.route,
                                                  true, 1.0f, &rng));
    }
}
BENCHMARK(BM_SpeakerGenerate);

static void BM_GreedyRollout(benchmark::State& state) {
    const WorldData& world = bench_world();
    const TrainConfig cfg = bench_config();
    const ParamSet params = init_follower_for(world, cfg);
    const FollowerConfig fcfg = make_follower_config(cfg, world);
    const DatasetRecord& rec = world.train.front();
    for (auto _ : state) {
        benchmark::DoNotOptimize(rollout(params, fcfg, world.env(rec.env_id), rec.tokens,
                                         rec.route.nodes.front(), kStartHeading,
                                         DecodeMode::greedy, 24));
    }
}
BENCHMARK(BM_GreedyRollout);

static void BM_NdtwEpisode(benchmark::State& state) {
    const WorldData& world = bench_world();
    const DatasetRecord& a = world.train[0];
    const DatasetRecord& b = world.train[3];
    const EnvironmentGraph& env = world.env(a.env_id);
    for (auto _ : state) {
        benchmark::DoNotOptimize(episode_metrics(env, a.route, b.route, 1));
    }
}
BENCHMARK(BM_NdtwEpisode);

static void BM_FoamCycle(benchmark::State& state) {
    const WorldData& world = bench_world();
    TrainConfig cfg = bench_config();
    Trainer trainer(world, cfg, TrainMode::foam, init_follower_for(world, cfg),
                    init_speaker_for(world, cfg));
    for (auto _ : state) {
        benchmark::DoNotOptimize(trainer.run_cycle());
    }
}
BENCHMARK(BM_FoamCycle);

BENCHMARK_MAIN();

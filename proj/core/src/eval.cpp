#include "foam/eval.hpp"

#include <atomic>
#include <thread>

#include "foam/follower.hpp"
#include "foam/speaker.hpp"

namespace foam {

EvalResult evaluate_split(const WorldData& world, Split split, const ParamSet& follower_params,
                          const ParamSet* speaker_params, const EvalOptions& opt) {
    if (opt.beam < 1) throw Error::config("evaluate: beam width must be >= 1");
    if (opt.beam > 1 && speaker_params == nullptr) {
        throw Error::config("evaluate: beam rescoring needs a speaker checkpoint");
    }
    const FollowerConfig fcfg = follower_config_from(follower_params);
    SpeakerConfig scfg;
    if (speaker_params != nullptr) {
        scfg = speaker_config_from(*speaker_params);
        if (scfg.vocab != world.vocab.size()) {
            throw Error::data("evaluate: speaker vocabulary (" + std::to_string(scfg.vocab) +
                              ") does not match the world vocabulary (" +
                              std::to_string(world.vocab.size()) + ")");
        }
    }
    if (fcfg.vocab != world.vocab.size()) {
        throw Error::data("evaluate: follower vocabulary (" + std::to_string(fcfg.vocab) +
                          ") does not match the world vocabulary (" +
                          std::to_string(world.vocab.size()) + ")");
    }

    const std::vector<DatasetRecord>& records = world.dataset(split);
    size_t count = records.size();
    if (opt.max_episodes > 0) count = std::min(count, static_cast<size_t>(opt.max_episodes));

    std::vector<EpisodeMetrics> per_episode(count);
    auto run_episode = [&](size_t i) {
        const DatasetRecord& rec = records[i];
        const EnvironmentGraph& env = world.env(rec.env_id);
        const int start = rec.route.nodes.front();
        Route predicted;
        if (opt.beam == 1) {
            predicted = rollout(follower_params, fcfg, env, rec.tokens, start, kStartHeading,
                                DecodeMode::greedy, opt.max_steps)
                            .route;
        } else {
            const std::vector<BeamCandidate> cands =
                beam_candidates(follower_params, fcfg, env, rec.tokens, start, kStartHeading,
                                opt.beam, opt.max_steps);
            Instruction scored = rec.tokens;
            scored.push_back(scfg.eos_id);
            double best = 0.0;
            int best_idx = -1;
            for (size_t c = 0; c < cands.size(); ++c) {
                const double s =
                    speaker_score(*speaker_params, scfg, env, cands[c].route, scored);
                if (best_idx < 0 || s > best) {
                    best = s;
                    best_idx = static_cast<int>(c);
                }
            }
            predicted = cands[static_cast<size_t>(best_idx)].route;
        }
        per_episode[i] = episode_metrics(env, predicted, rec.route, opt.d_th);
    };

    const int jobs = std::max(1, opt.jobs);
    if (jobs == 1 || count < 2) {
        for (size_t i = 0; i < count; ++i) run_episode(i);
    } else {
        std::vector<std::thread> threads;
        std::atomic<size_t> next{0};
        for (int j = 0; j < jobs; ++j) {
            threads.emplace_back([&]() {
                for (size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                    run_episode(i);
                }
            });
        }
        for (std::thread& th : threads) th.join();
    }
    return aggregate_metrics(split_name(split), std::move(per_episode));
}

} // namespace foam

// Command-line entry point: world generation, pretraining, training,
// evaluation, speaker dumps and the ablation grid.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "foam/checkpoint.hpp"
#include "foam/config.hpp"
#include "foam/dataset.hpp"
#include "foam/eval.hpp"
#include "foam/trainer.hpp"
#include "foam/version.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace foam;

namespace {

// ---------------------------------------------------------------------------
// config plumbing

struct CommonOpts {
    std::string config_file;
    std::vector<std::string> sets; // key=value overrides
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_file, "flat key=value config file");
    cmd->add_option("--set", opts.sets, "config override, e.g. --set train.eta_s=0.05")
        ->take_all();
}

FlatConfig resolve_config(const CommonOpts& opts) {
    FlatConfig flags;
    for (const std::string& kv : opts.sets) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw Error::config("--set expects key=value, got '" + kv + "'");
        }
        flags.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!opts.config_file.empty()) {
        flags.merge_over(FlatConfig::from_file(opts.config_file)); // flags win
    }
    return flags;
}

TrainConfig train_config_from(const FlatConfig& c) {
    TrainConfig t;
    t.eta_f = static_cast<float>(c.get_double("train.eta_f", t.eta_f));
    t.eta_s = static_cast<float>(c.get_double("train.eta_s", t.eta_s));
    t.pretrain_eta_f = static_cast<float>(c.get_double("train.pretrain_eta_f", t.pretrain_eta_f));
    t.pretrain_eta_s = static_cast<float>(c.get_double("train.pretrain_eta_s", t.pretrain_eta_s));
    t.batch_labeled = c.get_int("train.batch_labeled", t.batch_labeled);
    t.batch_aug = c.get_int("train.batch_aug", t.batch_aug);
    t.pretrain_steps = c.get_int("train.pretrain_steps", t.pretrain_steps);
    t.total_steps = c.get_int("train.total_steps", t.total_steps);
    t.sup_per_cycle = c.get_int("train.sup_per_cycle", t.sup_per_cycle);
    t.recon_loss = c.get_bool("train.recon", t.recon_loss);
    t.bilevel_loss = c.get_bool("train.bilevel", t.bilevel_loss);
    t.keep_prob = static_cast<float>(c.get_double("train.keep_prob", t.keep_prob));
    t.clip_norm = static_cast<float>(c.get_double("train.clip_norm", t.clip_norm));
    t.temperature = static_cast<float>(c.get_double("train.temperature", t.temperature));
    t.bt_sample = c.get_bool("train.bt_sample", t.bt_sample);
    t.aug_teacher_forcing = c.get_bool("train.aug_teacher_forcing", t.aug_teacher_forcing);
    t.labeled_dropout = c.get_bool("train.labeled_dropout", t.labeled_dropout);
    t.seed = c.get_u64("train.seed", t.seed);
    t.follower_embed = c.get_int("model.follower_embed", t.follower_embed);
    t.follower_hidden = c.get_int("model.follower_hidden", t.follower_hidden);
    t.speaker_embed = c.get_int("model.speaker_embed", t.speaker_embed);
    t.speaker_hidden = c.get_int("model.speaker_hidden", t.speaker_hidden);
    t.max_instr_len = c.get_int("lang.max_instr_len", t.max_instr_len);
    t.eval_max_steps = c.get_int("eval.max_steps", t.eval_max_steps);
    t.d_th = c.get_int("eval.d_th", t.d_th);
    t.val_every = c.get_int("train.val_every", t.val_every);
    t.checkpoint_every = c.get_int("train.checkpoint_every", t.checkpoint_every);
    t.val_max_episodes = c.get_int("train.val_max_episodes", t.val_max_episodes);
    t.route_min_nodes = c.get_int("world.route_min_nodes", t.route_min_nodes);
    t.route_max_nodes = c.get_int("world.route_max_nodes", t.route_max_nodes);
    t.divergence_window = c.get_int("train.divergence_window", t.divergence_window);
    t.divergence_factor = c.get_double("train.divergence_factor", t.divergence_factor);
    return t;
}

ordered_json effective_config_json(const TrainConfig& t) {
    ordered_json j;
    j["train.eta_f"] = t.eta_f;
    j["train.eta_s"] = t.eta_s;
    j["train.pretrain_eta_f"] = t.pretrain_eta_f;
    j["train.pretrain_eta_s"] = t.pretrain_eta_s;
    j["train.batch_labeled"] = t.batch_labeled;
    j["train.batch_aug"] = t.batch_aug;
    j["train.pretrain_steps"] = t.pretrain_steps;
    j["train.total_steps"] = t.total_steps;
    j["train.sup_per_cycle"] = t.sup_per_cycle;
    j["train.recon"] = t.recon_loss;
    j["train.bilevel"] = t.bilevel_loss;
    j["train.keep_prob"] = t.keep_prob;
    j["train.clip_norm"] = t.clip_norm;
    j["train.temperature"] = t.temperature;
    j["train.bt_sample"] = t.bt_sample;
    j["train.aug_teacher_forcing"] = t.aug_teacher_forcing;
    j["train.labeled_dropout"] = t.labeled_dropout;
    j["train.seed"] = t.seed;
    j["train.val_every"] = t.val_every;
    j["train.checkpoint_every"] = t.checkpoint_every;
    j["train.val_max_episodes"] = t.val_max_episodes;
    j["train.divergence_window"] = t.divergence_window;
    j["train.divergence_factor"] = t.divergence_factor;
    j["model.follower_embed"] = t.follower_embed;
    j["model.follower_hidden"] = t.follower_hidden;
    j["model.speaker_embed"] = t.speaker_embed;
    j["model.speaker_hidden"] = t.speaker_hidden;
    j["lang.max_instr_len"] = t.max_instr_len;
    j["eval.max_steps"] = t.eval_max_steps;
    j["eval.d_th"] = t.d_th;
    j["world.route_min_nodes"] = t.route_min_nodes;
    j["world.route_max_nodes"] = t.route_max_nodes;
    return j;
}

int64_t unix_ms_now() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

ordered_json world_hashes_json(const std::string& world_dir) {
    ordered_json j;
    for (const char* name : {"world.jsonl", "vocab.json", "dataset_train.jsonl",
                             "dataset_val_seen.jsonl", "dataset_val_unseen.jsonl"}) {
        j[name] = hash_hex(file_hash((fs::path(world_dir) / name).string()));
    }
    return j;
}

void write_manifest(const std::string& run_dir, const std::string& command,
                    const std::string& mode, const TrainConfig& cfg,
                    const std::string& world_dir) {
    ordered_json m;
    m["format"] = kManifestFormat;
    m["version"] = kVersionString;
    m["command"] = command;
    m["mode"] = mode;
    m["seed"] = cfg.seed;
    m["created_unix_ms"] = unix_ms_now();
    m["world_dir"] = world_dir;
    m["world_files"] = world_hashes_json(world_dir);
    m["config"] = effective_config_json(cfg);
    fs::create_directories(run_dir);
    std::ofstream os(fs::path(run_dir) / "manifest.json", std::ios::trunc);
    if (!os) throw Error::data("cannot write manifest in " + run_dir);
    os << m.dump(2) << '\n';
}

void verify_manifest_hashes(const std::string& run_dir, const std::string& world_dir) {
    const fs::path path = fs::path(run_dir) / "manifest.json";
    if (!fs::exists(path)) throw Error::data("resume: no manifest.json in " + run_dir);
    ordered_json m;
    {
        std::ifstream is(path);
        is >> m;
    }
    for (const auto& [name, hex] : m.at("world_files").items()) {
        const uint64_t actual = file_hash((fs::path(world_dir) / name).string());
        if (hash_hex(actual) != hex.get<std::string>()) {
            throw Error::data("world file " + name + " changed since the manifest was written");
        }
    }
}

// unique gold routes of a split, in dataset order, with their references
struct RouteGroup {
    const DatasetRecord* first = nullptr; // style-0 reference
    std::vector<const DatasetRecord*> records;
};

std::vector<RouteGroup> unique_routes(const std::vector<DatasetRecord>& records) {
    std::vector<RouteGroup> groups;
    for (const DatasetRecord& rec : records) {
        if (groups.empty() || !(groups.back().first->route == rec.route)) {
            RouteGroup g;
            g.first = &rec;
            groups.push_back(std::move(g));
        }
        groups.back().records.push_back(&rec);
    }
    return groups;
}

// ---------------------------------------------------------------------------
// subcommands

struct GenWorldArgs {
    CommonOpts common;
    std::string out;
    uint64_t seed = 1;
    int n_train = 3, n_val_seen = 2, n_val_unseen = 3;
    int grid = 5, feature_dim = 16, num_tags = 12;
    int routes_per_env = 25;
    int min_nodes = 3, max_nodes = 8;
    int jobs = 1;
    bool force = false;
};

int cmd_gen_world(const GenWorldArgs& a) {
    const FlatConfig c = resolve_config(a.common);
    GenWorldOptions opt;
    opt.seed = c.get_u64("world.seed", a.seed);
    opt.n_train = c.get_int("world.n_train", a.n_train);
    opt.n_val_seen = c.get_int("world.n_val_seen", a.n_val_seen);
    opt.n_val_unseen = c.get_int("world.n_val_unseen", a.n_val_unseen);
    opt.grid = c.get_int("world.grid", a.grid);
    opt.feature_dim = c.get_int("world.feature_dim", a.feature_dim);
    opt.num_tags = c.get_int("world.num_tags", a.num_tags);
    opt.routes_per_env = c.get_int("world.routes_per_env", a.routes_per_env);
    opt.route_min_nodes = c.get_int("world.route_min_nodes", a.min_nodes);
    opt.route_max_nodes = c.get_int("world.route_max_nodes", a.max_nodes);

    const WorldData world = build_world(opt, a.jobs);
    save_world_dir(a.out, world, a.force);
    std::cout << "wrote " << world.envs.size() << " environments, "
              << world.train.size() + world.val_seen.size() + world.val_unseen.size()
              << " dataset records to " << a.out << "\n";
    return 0;
}

struct PretrainArgs {
    CommonOpts common;
    std::string world_dir;
    std::string which; // follower | speaker
    std::string out;
    uint64_t seed = 0; // 0: take from config
    int steps = -1;
};

int cmd_pretrain(const PretrainArgs& a) {
    FlatConfig c = resolve_config(a.common);
    if (a.seed != 0) c.set("train.seed", std::to_string(a.seed));
    if (a.steps >= 0) c.set("train.pretrain_steps", std::to_string(a.steps));
    TrainConfig cfg = train_config_from(c);
    if (cfg.total_steps < cfg.pretrain_steps) cfg.total_steps = cfg.pretrain_steps;

    if (a.which != "follower" && a.which != "speaker") {
        throw Error::config("--which must be follower or speaker");
    }
    const WorldData world = load_world_dir(a.world_dir);
    const PretrainResult result = pretrain(world, cfg, a.which == "follower");
    save_checkpoint(a.out, result.params);
    std::cout << "pretrained " << a.which << " for " << cfg.pretrain_steps << " steps; best "
              << (a.which == "follower" ? "val-seen SR " : "val-seen loss ")
              << (a.which == "follower" ? result.best_metric : -result.best_metric) << " at step "
              << result.best_step << "; saved " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    CommonOpts common;
    std::string world_dir;
    std::string mode = "foam";
    std::string out;
    std::string follower_ckpt, speaker_ckpt;
    uint64_t seed = 0;
    int total_steps = -1;
    int pretrain_steps = -1;
    bool no_recon = false, no_bilevel = false;
    bool resume = false;
};

int cmd_train(const TrainArgs& a) {
    FlatConfig c = resolve_config(a.common);
    if (a.seed != 0) c.set("train.seed", std::to_string(a.seed));
    if (a.total_steps >= 0) c.set("train.total_steps", std::to_string(a.total_steps));
    if (a.pretrain_steps >= 0) c.set("train.pretrain_steps", std::to_string(a.pretrain_steps));
    if (a.no_recon) c.set("train.recon", "false");
    if (a.no_bilevel) c.set("train.bilevel", "false");
    const TrainConfig cfg = train_config_from(c);
    const TrainMode mode = train_mode_from(a.mode);
    validate_train_config(cfg, mode); // config errors before any compute

    const WorldData world = load_world_dir(a.world_dir);

    ParamSet follower0, speaker0;
    if (!a.follower_ckpt.empty()) {
        follower0 = load_checkpoint(a.follower_ckpt);
        if (!follower0.same_layout(init_follower_for(world, cfg))) {
            throw Error::data("follower checkpoint layout does not match the configured model");
        }
    } else if (a.resume) {
        follower0 = init_follower_for(world, cfg); // replaced by the resume state
    } else {
        std::cout << "pretraining follower for " << cfg.pretrain_steps << " steps...\n";
        follower0 = pretrain(world, cfg, /*follower_side=*/true).params;
    }
    if (!a.speaker_ckpt.empty()) {
        speaker0 = load_checkpoint(a.speaker_ckpt);
        if (!speaker0.same_layout(init_speaker_for(world, cfg))) {
            throw Error::data("speaker checkpoint layout does not match the configured model");
        }
    } else if (mode == TrainMode::supervised_only || a.resume) {
        speaker0 = init_speaker_for(world, cfg);
    } else {
        std::cout << "pretraining speaker for " << cfg.pretrain_steps << " steps...\n";
        speaker0 = pretrain(world, cfg, /*follower_side=*/false).params;
    }

    if (a.resume) {
        verify_manifest_hashes(a.out, a.world_dir);
    } else {
        write_manifest(a.out, "train", a.mode, cfg, a.world_dir);
        // keep the pretrained inputs next to the run for later comparisons
        fs::create_directories(fs::path(a.out) / "checkpoints");
        save_checkpoint((fs::path(a.out) / "checkpoints" / "follower_pretrained.bin").string(),
                        follower0);
        save_checkpoint((fs::path(a.out) / "checkpoints" / "speaker_pretrained.bin").string(),
                        speaker0);
    }

    const TrainRunSummary summary =
        train_run(world, cfg, mode, std::move(follower0), std::move(speaker0), a.out, a.resume);
    std::cout << "mode=" << a.mode << " steps=" << summary.steps_done
              << " val_seen_sr=" << summary.final_val_seen.sr
              << " val_unseen_sr=" << summary.final_val_unseen.sr << " mean_h=" << summary.mean_h
              << "\n";
    return 0;
}

struct EvaluateArgs {
    CommonOpts common;
    std::string world_dir;
    std::string follower_ckpt, speaker_ckpt;
    std::string split = "val_unseen";
    std::string out;
    int beam = 1;
    int max_steps = -1;
    int d_th = -1;
    int jobs = 1;
    int max_episodes = 0;
};

int cmd_evaluate(const EvaluateArgs& a) {
    const FlatConfig c = resolve_config(a.common);
    const TrainConfig cfg = train_config_from(c);
    const WorldData world = load_world_dir(a.world_dir);
    const Split split = split_from_name(a.split);

    const ParamSet follower = load_checkpoint(a.follower_ckpt);
    ParamSet speaker;
    const bool have_speaker = !a.speaker_ckpt.empty();
    if (have_speaker) speaker = load_checkpoint(a.speaker_ckpt);

    EvalOptions opt;
    opt.beam = a.beam;
    opt.max_steps = a.max_steps > 0 ? a.max_steps : cfg.eval_max_steps;
    opt.d_th = a.d_th > 0 ? a.d_th : cfg.d_th;
    opt.jobs = a.jobs;
    opt.max_episodes = a.max_episodes;

    const EvalResult r =
        evaluate_split(world, split, follower, have_speaker ? &speaker : nullptr, opt);
    std::cout << r.split << ": episodes=" << r.episodes << " SR=" << r.sr << " SPL=" << r.spl
              << " NE=" << r.ne << " nDTW=" << r.ndtw << " sDTW=" << r.sdtw << "\n";

    if (!a.out.empty()) {
        ordered_json j;
        j["split"] = r.split;
        j["episodes"] = r.episodes;
        j["beam"] = a.beam;
        j["sr"] = r.sr;
        j["spl"] = r.spl;
        j["ne"] = r.ne;
        j["ndtw"] = r.ndtw;
        j["sdtw"] = r.sdtw;
        ordered_json per = ordered_json::array();
        for (const EpisodeMetrics& m : r.per_episode) {
            ordered_json e;
            e["success"] = m.success;
            e["ne"] = m.ne;
            e["spl"] = m.spl;
            e["ndtw"] = m.ndtw;
            e["sdtw"] = m.sdtw;
            per.push_back(std::move(e));
        }
        j["episodes_detail"] = std::move(per);
        std::ofstream os(a.out, std::ios::trunc);
        if (!os) throw Error::data("cannot write " + a.out);
        os << j.dump(2) << '\n';
    }
    return 0;
}

struct SpeakArgs {
    CommonOpts common;
    std::string world_dir;
    std::string speaker_ckpt;
    std::string split = "train";
    std::string out;
    std::string mode = "greedy"; // greedy | sample
    double temperature = 1.0;
    uint64_t seed = 1;
};

void check_speaker_vocab(const ParamSet& speaker, const WorldData& world) {
    const SpeakerConfig scfg = speaker_config_from(speaker);
    if (scfg.vocab != world.vocab.size()) {
        throw Error::data("speaker checkpoint vocabulary (" + std::to_string(scfg.vocab) +
                          ") does not match the world vocabulary (" +
                          std::to_string(world.vocab.size()) + ")");
    }
}

int cmd_speak(const SpeakArgs& a) {
    const WorldData world = load_world_dir(a.world_dir);
    const ParamSet speaker = load_checkpoint(a.speaker_ckpt);
    check_speaker_vocab(speaker, world);
    SpeakerConfig scfg = speaker_config_from(speaker);
    scfg.bos_id = Vocabulary::bos_id;
    scfg.eos_id = Vocabulary::eos_id;
    const FlatConfig c = resolve_config(a.common);
    scfg.max_len = c.get_int("lang.max_instr_len", scfg.max_len);

    const bool sample = a.mode == "sample";
    if (!sample && a.mode != "greedy") throw Error::config("--mode must be greedy or sample");
    Rng rng(stream_seed(a.seed, "speak"));

    const Split split = split_from_name(a.split);
    const std::vector<RouteGroup> groups = unique_routes(world.dataset(split));
    std::ofstream os(a.out, std::ios::trunc);
    if (!os) throw Error::data("cannot write " + a.out);
    for (const RouteGroup& g : groups) {
        const EnvironmentGraph& env = world.env(g.first->env_id);
        const SpeakerSample s = speaker_generate(speaker, scfg, env, g.first->route, sample,
                                                 static_cast<float>(a.temperature),
                                                 sample ? &rng : nullptr);
        ordered_json j;
        j["env"] = g.first->env_id;
        ordered_json rj;
        rj["nodes"] = g.first->route.nodes;
        rj["actions"] = g.first->route.actions;
        rj["goal"] = g.first->route.goal;
        j["route"] = std::move(rj);
        const Instruction content = s.content();
        j["tokens"] = content;
        j["logp"] = s.total_logp;
        j["text"] = world.vocab.detokenize(content);
        os << j.dump() << '\n';
    }
    std::cout << "wrote " << groups.size() << " instructions to " << a.out << "\n";
    return 0;
}

struct CompareArgs {
    CommonOpts common;
    std::string world_dir;
    std::string speaker_ckpt;
    std::string hyp_file;
    std::string split = "train";
    std::string out;
    int bucket_width = 1;
    bool smooth = false;
};

int cmd_compare(const CompareArgs& a) {
    const WorldData world = load_world_dir(a.world_dir);
    const Split split = split_from_name(a.split);
    const std::vector<RouteGroup> groups = unique_routes(world.dataset(split));

    std::vector<Instruction> hyps;
    if (!a.hyp_file.empty()) {
        std::ifstream is(a.hyp_file);
        if (!is) throw Error::data("cannot read " + a.hyp_file);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            hyps.push_back(ordered_json::parse(line).at("tokens").get<std::vector<int>>());
        }
        if (hyps.size() != groups.size()) {
            throw Error::data("hypothesis file has " + std::to_string(hyps.size()) +
                              " lines for " + std::to_string(groups.size()) + " routes");
        }
    } else {
        if (a.speaker_ckpt.empty()) {
            throw Error::config("compare needs --speaker-ckpt or --hyp");
        }
        const ParamSet speaker = load_checkpoint(a.speaker_ckpt);
        check_speaker_vocab(speaker, world);
        SpeakerConfig scfg = speaker_config_from(speaker);
        scfg.bos_id = Vocabulary::bos_id;
        scfg.eos_id = Vocabulary::eos_id;
        for (const RouteGroup& g : groups) {
            const EnvironmentGraph& env = world.env(g.first->env_id);
            hyps.push_back(
                speaker_generate(speaker, scfg, env, g.first->route, false, 1.0f, nullptr)
                    .content());
        }
    }

    std::vector<std::vector<Instruction>> refs;
    std::vector<Instruction> first_refs;
    for (const RouteGroup& g : groups) {
        std::vector<Instruction> r;
        for (const DatasetRecord* rec : g.records) r.push_back(rec->tokens);
        refs.push_back(std::move(r));
        first_refs.push_back(g.first->tokens);
    }

    const double bleu = corpus_bleu(refs, hyps, a.smooth);
    const LengthHistogram hist = length_histogram(first_refs, hyps, a.bucket_width);

    std::cout << "split=" << a.split << " routes=" << groups.size() << " BLEU=" << bleu << "\n";
    std::cout << "length-difference histogram (reference - generated):\n";
    for (const auto& [bucket, count] : hist.buckets) {
        std::cout << "  " << bucket * hist.bucket_width << "\t" << count << "\n";
    }

    if (!a.out.empty()) {
        ordered_json j;
        j["split"] = a.split;
        j["routes"] = groups.size();
        j["bleu"] = bleu;
        j["bucket_width"] = hist.bucket_width;
        ordered_json buckets = ordered_json::array();
        for (const auto& [bucket, count] : hist.buckets) {
            buckets.push_back(ordered_json::array({bucket * hist.bucket_width, count}));
        }
        j["histogram"] = std::move(buckets);
        std::ofstream os(a.out, std::ios::trunc);
        if (!os) throw Error::data("cannot write " + a.out);
        os << j.dump(2) << '\n';
    }
    return 0;
}

struct AblateArgs {
    CommonOpts common;
    std::string world_dir;
    std::string out;
    int seeds = 5;
    uint64_t seed_base = 1;
};

int cmd_ablate(const AblateArgs& a) {
    const FlatConfig c = resolve_config(a.common);
    const WorldData world = load_world_dir(a.world_dir);
    fs::create_directories(a.out);

    struct Variant {
        const char* name;
        bool recon, bilevel;
    };
    const Variant variants[] = {
        {"full", true, true}, {"-recon", false, true}, {"-bilevel", true, false}};

    struct RunRow {
        std::string variant;
        uint64_t seed;
        double val_seen_sr, val_unseen_sr, mean_h, std_h;
    };
    std::vector<RunRow> rows;

    for (int s = 0; s < a.seeds; ++s) {
        const uint64_t seed = a.seed_base + static_cast<uint64_t>(s);
        FlatConfig cs = c;
        cs.set("train.seed", std::to_string(seed));
        const TrainConfig cfg = train_config_from(cs);

        std::cout << "[seed " << seed << "] pretraining...\n";
        const ParamSet follower0 = pretrain(world, cfg, /*follower_side=*/true).params;
        const ParamSet speaker0 = pretrain(world, cfg, /*follower_side=*/false).params;
        const fs::path seed_dir = fs::path(a.out) / ("seed_" + std::to_string(seed));
        fs::create_directories(seed_dir);
        save_checkpoint((seed_dir / "follower_pretrained.bin").string(), follower0);
        save_checkpoint((seed_dir / "speaker_pretrained.bin").string(), speaker0);

        for (const Variant& v : variants) {
            TrainConfig vcfg = cfg;
            vcfg.recon_loss = v.recon;
            vcfg.bilevel_loss = v.bilevel;
            const std::string run_dir = (seed_dir / v.name).string();
            write_manifest(run_dir, "ablate", std::string("foam ") + v.name, vcfg, a.world_dir);
            const TrainRunSummary sum = train_run(world, vcfg, TrainMode::foam, follower0,
                                                  speaker0, run_dir, /*resume=*/false);
            rows.push_back({v.name, seed, sum.final_val_seen.sr, sum.final_val_unseen.sr,
                            sum.mean_h, sum.std_h});
            std::cout << "[seed " << seed << "] " << v.name << ": val_seen_sr="
                      << sum.final_val_seen.sr << " val_unseen_sr=" << sum.final_val_unseen.sr
                      << " h=" << sum.mean_h << "+-" << sum.std_h << "\n";
        }
    }

    auto stats = [&](const char* variant, auto field) {
        double mean = 0.0, var = 0.0;
        int n = 0;
        for (const RunRow& r : rows) {
            if (r.variant == variant) {
                mean += field(r);
                ++n;
            }
        }
        mean /= std::max(1, n);
        for (const RunRow& r : rows) {
            if (r.variant == variant) var += (field(r) - mean) * (field(r) - mean);
        }
        var = n > 1 ? var / (n - 1) : 0.0;
        return std::pair{mean, std::sqrt(var)};
    };

    ordered_json summary;
    summary["seeds"] = a.seeds;
    summary["seed_base"] = a.seed_base;
    ordered_json grid = ordered_json::array();
    std::cout << "\nvariant     val_seen_sr        val_unseen_sr      mean_h\n";
    for (const Variant& v : variants) {
        const auto [vs_m, vs_s] = stats(v.name, [](const RunRow& r) { return r.val_seen_sr; });
        const auto [vu_m, vu_s] = stats(v.name, [](const RunRow& r) { return r.val_unseen_sr; });
        const auto [h_m, h_s] = stats(v.name, [](const RunRow& r) { return r.mean_h; });
        std::printf("%-10s  %6.1f +- %-6.1f  %6.1f +- %-6.1f  %+.4f\n", v.name, vs_m, vs_s, vu_m,
                    vu_s, h_m);
        ordered_json row;
        row["variant"] = v.name;
        row["val_seen_sr_mean"] = vs_m;
        row["val_seen_sr_std"] = vs_s;
        row["val_unseen_sr_mean"] = vu_m;
        row["val_unseen_sr_std"] = vu_s;
        row["mean_h"] = h_m;
        ordered_json runs = ordered_json::array();
        for (const RunRow& r : rows) {
            if (r.variant != v.name) continue;
            ordered_json rj;
            rj["seed"] = r.seed;
            rj["val_seen_sr"] = r.val_seen_sr;
            rj["val_unseen_sr"] = r.val_unseen_sr;
            rj["mean_h"] = r.mean_h;
            rj["std_h"] = r.std_h;
            runs.push_back(std::move(rj));
        }
        row["runs"] = std::move(runs);
        grid.push_back(std::move(row));
    }
    summary["grid"] = std::move(grid);
    std::ofstream os(fs::path(a.out) / "ablation_summary.json", std::ios::trunc);
    os << summary.dump(2) << '\n';
    std::cout << "wrote " << (fs::path(a.out) / "ablation_summary.json").string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(kVersionString) +
                 " - follower-aware speaker training on toy navigation worlds"};
    app.require_subcommand(1);

    GenWorldArgs gw;
    CLI::App* gen = app.add_subcommand("gen-world", "generate environments and oracle datasets");
    gen->add_option("--out", gw.out, "output directory")->required();
    gen->add_option("--seed", gw.seed, "world seed");
    gen->add_option("--train", gw.n_train, "train environment count");
    gen->add_option("--val-seen", gw.n_val_seen, "val-seen environment count");
    gen->add_option("--val-unseen", gw.n_val_unseen, "val-unseen environment count");
    gen->add_option("--grid", gw.grid, "grid side length");
    gen->add_option("--feature-dim", gw.feature_dim, "observation feature dimension");
    gen->add_option("--tags", gw.num_tags, "landmark tag vocabulary size");
    gen->add_option("--routes-per-env", gw.routes_per_env, "gold routes per environment");
    gen->add_option("--min-nodes", gw.min_nodes, "minimum route node count");
    gen->add_option("--max-nodes", gw.max_nodes, "maximum route node count");
    gen->add_option("--jobs", gw.jobs, "parallel environment construction");
    gen->add_flag("--force", gw.force, "overwrite a non-empty output directory");
    add_common(gen, gw.common);

    PretrainArgs pt;
    CLI::App* pre = app.add_subcommand("pretrain", "supervised pretraining of one model");
    pre->add_option("--world", pt.world_dir, "world directory")->required();
    pre->add_option("--which", pt.which, "follower | speaker")->required();
    pre->add_option("--out", pt.out, "checkpoint output path")->required();
    pre->add_option("--seed", pt.seed, "training seed");
    pre->add_option("--steps", pt.steps, "pretraining steps");
    add_common(pre, pt.common);

    TrainArgs tr;
    CLI::App* train = app.add_subcommand("train", "back-translation / bi-level training");
    train->add_option("--world", tr.world_dir, "world directory")->required();
    train->add_option("--mode", tr.mode, "foam | envdrop-baseline | supervised-only");
    train->add_option("--out", tr.out, "run directory")->required();
    train->add_option("--follower-ckpt", tr.follower_ckpt, "pretrained follower checkpoint");
    train->add_option("--speaker-ckpt", tr.speaker_ckpt, "pretrained speaker checkpoint");
    train->add_option("--seed", tr.seed, "training seed");
    train->add_option("--steps", tr.total_steps, "total steps (incl. pretraining budget)");
    train->add_option("--pretrain-steps", tr.pretrain_steps, "pretraining step budget");
    train->add_flag("--no-recon", tr.no_recon, "disable the reconstruction loss");
    train->add_flag("--no-bilevel", tr.no_bilevel, "disable the bi-level loss");
    train->add_flag("--resume", tr.resume, "continue a previous run in --out");
    add_common(train, tr.common);

    EvaluateArgs ev;
    CLI::App* eval = app.add_subcommand("evaluate", "greedy or beam evaluation of a checkpoint");
    eval->add_option("--world", ev.world_dir, "world directory")->required();
    eval->add_option("--follower-ckpt", ev.follower_ckpt, "follower checkpoint")->required();
    eval->add_option("--speaker-ckpt", ev.speaker_ckpt, "speaker checkpoint (beam rescoring)");
    eval->add_option("--split", ev.split, "train | val_seen | val_unseen");
    eval->add_option("--beam", ev.beam, "beam width (1 = greedy)");
    eval->add_option("--max-steps", ev.max_steps, "rollout step limit");
    eval->add_option("--d-th", ev.d_th, "success distance threshold in hops");
    eval->add_option("--jobs", ev.jobs, "parallel evaluation rollouts");
    eval->add_option("--max-episodes", ev.max_episodes, "cap on evaluated episodes");
    eval->add_option("--out", ev.out, "write a JSON report here");
    add_common(eval, ev.common);

    SpeakArgs sp;
    CLI::App* speak = app.add_subcommand("speak", "generate instructions for a split's routes");
    speak->add_option("--world", sp.world_dir, "world directory")->required();
    speak->add_option("--speaker-ckpt", sp.speaker_ckpt, "speaker checkpoint")->required();
    speak->add_option("--split", sp.split, "train | val_seen | val_unseen");
    speak->add_option("--out", sp.out, "output JSONL dump")->required();
    speak->add_option("--mode", sp.mode, "greedy | sample");
    speak->add_option("--temperature", sp.temperature, "sampling temperature");
    speak->add_option("--seed", sp.seed, "sampling seed");
    add_common(speak, sp.common);

    CompareArgs cp;
    CLI::App* compare =
        app.add_subcommand("compare", "BLEU and length histogram against oracle references");
    compare->add_option("--world", cp.world_dir, "world directory")->required();
    compare->add_option("--speaker-ckpt", cp.speaker_ckpt, "speaker checkpoint");
    compare->add_option("--hyp", cp.hyp_file, "hypothesis JSONL (from speak)");
    compare->add_option("--split", cp.split, "train | val_seen | val_unseen");
    compare->add_option("--bucket-width", cp.bucket_width, "histogram bucket width");
    compare->add_flag("--smooth", cp.smooth, "add-one smoothing of higher-order n-grams");
    compare->add_option("--out", cp.out, "write a JSON report here");
    add_common(compare, cp.common);

    AblateArgs ab;
    CLI::App* ablate = app.add_subcommand("ablate", "objective ablation grid over seeds");
    ablate->add_option("--world", ab.world_dir, "world directory")->required();
    ablate->add_option("--out", ab.out, "output directory")->required();
    ablate->add_option("--seeds", ab.seeds, "number of seeds");
    ablate->add_option("--seed-base", ab.seed_base, "first seed");
    add_common(ablate, ab.common);

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_world(gw);
        if (pre->parsed()) return cmd_pretrain(pt);
        if (train->parsed()) return cmd_train(tr);
        if (eval->parsed()) return cmd_evaluate(ev);
        if (speak->parsed()) return cmd_speak(sp);
        if (compare->parsed()) return cmd_compare(cp);
        if (ablate->parsed()) return cmd_ablate(ab);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

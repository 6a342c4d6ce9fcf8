#include "foam/dataset.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "foam/error.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace foam {

const std::vector<DatasetRecord>& WorldData::dataset(Split s) const {
    switch (s) {
        case Split::train: return train;
        case Split::val_seen: return val_seen;
        case Split::val_unseen: return val_unseen;
    }
    throw Error::internal("bad split");
}

int WorldData::env_index(const std::string& env_id) const {
    for (size_t i = 0; i < envs.size(); ++i) {
        if (envs[i].env_id == env_id) return static_cast<int>(i);
    }
    return -1;
}

const EnvironmentGraph& WorldData::env(const std::string& env_id) const {
    const int i = env_index(env_id);
    if (i < 0) throw Error::data("unknown environment id: " + env_id);
    return envs[static_cast<size_t>(i)];
}

std::vector<const EnvironmentGraph*> WorldData::envs_of(Split s) const {
    std::vector<const EnvironmentGraph*> out;
    for (const EnvironmentGraph& e : envs) {
        if (e.split == s) out.push_back(&e);
    }
    return out;
}

WorldData build_world(const GenWorldOptions& opt, int jobs) {
    WorldData world;
    world.options = opt;
    world.envs = generate_world(opt.seed, opt.n_train, opt.n_val_seen, opt.n_val_unseen,
                                opt.grid, opt.feature_dim, opt.num_tags, jobs);
    world.vocab = Vocabulary(opt.num_tags);

    for (const EnvironmentGraph& env : world.envs) {
        Rng rng(stream_seed(opt.seed, "routes/" + env.env_id));
        std::vector<DatasetRecord>& dst = env.split == Split::train      ? world.train
                                          : env.split == Split::val_seen ? world.val_seen
                                                                         : world.val_unseen;
        for (int i = 0; i < opt.routes_per_env; ++i) {
            Route route = sample_route(env, rng, opt.route_min_nodes, opt.route_max_nodes);
            for (int style = 0; style < kStyleCount; ++style) {
                DatasetRecord rec;
                rec.env_id = env.env_id;
                rec.route = route;
                rec.style = style;
                rec.tokens = annotate(route, env, world.vocab, static_cast<uint64_t>(style));
                dst.push_back(std::move(rec));
            }
        }
    }
    return world;
}

namespace {

ordered_json route_to_json(const Route& r) {
    ordered_json j;
    j["nodes"] = r.nodes;
    j["actions"] = r.actions;
    j["goal"] = r.goal;
    return j;
}

Route route_from_json(const ordered_json& j, std::string env_id) {
    Route r;
    r.env_id = std::move(env_id);
    r.nodes = j.at("nodes").get<std::vector<int>>();
    r.actions = j.at("actions").get<std::vector<int>>();
    r.goal = j.at("goal").get<int>();
    return r;
}

void write_lines(const fs::path& path, const std::vector<ordered_json>& lines) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error::data("cannot write " + path.string());
    for (const ordered_json& j : lines) os << j.dump() << '\n';
}

std::vector<ordered_json> read_lines(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw Error::data("cannot read " + path.string());
    std::vector<ordered_json> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(ordered_json::parse(line));
    }
    return out;
}

const char* dataset_file(Split s) {
    switch (s) {
        case Split::train: return "dataset_train.jsonl";
        case Split::val_seen: return "dataset_val_seen.jsonl";
        case Split::val_unseen: return "dataset_val_unseen.jsonl";
    }
    return "";
}

const char* routes_file(Split s) {
    switch (s) {
        case Split::train: return "routes_train.jsonl";
        case Split::val_seen: return "routes_val_seen.jsonl";
        case Split::val_unseen: return "routes_val_unseen.jsonl";
    }
    return "";
}

} // namespace

uint64_t file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error::data("cannot hash missing file " + path);
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[4096];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (!is) break;
    }
    return h;
}

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void save_world_dir(const std::string& dir, const WorldData& world, bool force) {
    const fs::path root(dir);
    if (fs::exists(root) && !fs::is_empty(root) && !force) {
        throw Error::data("output directory " + dir + " is not empty (use --force)");
    }
    fs::create_directories(root);

    std::vector<ordered_json> env_lines;
    for (const EnvironmentGraph& env : world.envs) {
        ordered_json j;
        j["id"] = env.env_id;
        j["split"] = split_name(env.split);
        j["grid"] = env.grid;
        j["feature_dim"] = env.feature_dim;
        ordered_json nodes = ordered_json::array();
        for (const WorldNode& n : env.nodes) {
            ordered_json nj;
            nj["id"] = n.id;
            nj["x"] = n.x;
            nj["y"] = n.y;
            nj["tag"] = n.tag;
            nj["feat"] = n.feat;
            nodes.push_back(std::move(nj));
        }
        j["nodes"] = std::move(nodes);
        ordered_json edges = ordered_json::array();
        for (int a = 0; a < env.node_count(); ++a) {
            for (int b : env.adj[static_cast<size_t>(a)]) {
                if (a < b) edges.push_back(ordered_json::array({a, b}));
            }
        }
        j["edges"] = std::move(edges);
        env_lines.push_back(std::move(j));
    }
    write_lines(root / "world.jsonl", env_lines);

    ordered_json vj;
    vj["tokens"] = world.vocab.tokens();
    vj["num_tags"] = world.vocab.num_tags();
    {
        std::ofstream os(root / "vocab.json", std::ios::trunc);
        os << vj.dump(2) << '\n';
    }

    for (Split s : {Split::train, Split::val_seen, Split::val_unseen}) {
        std::vector<ordered_json> ds_lines, rt_lines;
        const Route* last_route = nullptr;
        for (const DatasetRecord& rec : world.dataset(s)) {
            ordered_json j;
            j["env"] = rec.env_id;
            j["route"] = route_to_json(rec.route);
            j["tokens"] = rec.tokens;
            j["style"] = rec.style;
            j["text"] = world.vocab.detokenize(rec.tokens);
            ds_lines.push_back(std::move(j));
            if (last_route == nullptr || !(*last_route == rec.route)) {
                ordered_json rj;
                rj["env"] = rec.env_id;
                rj["route"] = route_to_json(rec.route);
                rt_lines.push_back(std::move(rj));
                last_route = &rec.route;
            }
        }
        write_lines(root / dataset_file(s), ds_lines);
        write_lines(root / routes_file(s), rt_lines);
    }

    ordered_json meta;
    meta["format"] = 1;
    meta["seed"] = world.options.seed;
    ordered_json cfg;
    cfg["n_train"] = world.options.n_train;
    cfg["n_val_seen"] = world.options.n_val_seen;
    cfg["n_val_unseen"] = world.options.n_val_unseen;
    cfg["grid"] = world.options.grid;
    cfg["feature_dim"] = world.options.feature_dim;
    cfg["num_tags"] = world.options.num_tags;
    cfg["routes_per_env"] = world.options.routes_per_env;
    cfg["route_min_nodes"] = world.options.route_min_nodes;
    cfg["route_max_nodes"] = world.options.route_max_nodes;
    meta["options"] = std::move(cfg);
    ordered_json hashes;
    for (const char* name : {"world.jsonl", "vocab.json", "dataset_train.jsonl",
                             "dataset_val_seen.jsonl", "dataset_val_unseen.jsonl",
                             "routes_train.jsonl", "routes_val_seen.jsonl",
                             "routes_val_unseen.jsonl"}) {
        hashes[name] = hash_hex(file_hash((root / name).string()));
    }
    meta["files"] = std::move(hashes);
    {
        std::ofstream os(root / "meta.json", std::ios::trunc);
        os << meta.dump(2) << '\n';
    }
}

WorldData load_world_dir(const std::string& dir, bool verify_hashes) {
    const fs::path root(dir);
    if (!fs::exists(root / "meta.json")) {
        throw Error::data("world directory " + dir + " has no meta.json");
    }
    ordered_json meta;
    {
        std::ifstream is(root / "meta.json");
        is >> meta;
    }
    WorldData world;
    world.options.seed = meta.at("seed").get<uint64_t>();
    const ordered_json& cfg = meta.at("options");
    world.options.n_train = cfg.at("n_train").get<int>();
    world.options.n_val_seen = cfg.at("n_val_seen").get<int>();
    world.options.n_val_unseen = cfg.at("n_val_unseen").get<int>();
    world.options.grid = cfg.at("grid").get<int>();
    world.options.feature_dim = cfg.at("feature_dim").get<int>();
    world.options.num_tags = cfg.at("num_tags").get<int>();
    world.options.routes_per_env = cfg.at("routes_per_env").get<int>();
    world.options.route_min_nodes = cfg.at("route_min_nodes").get<int>();
    world.options.route_max_nodes = cfg.at("route_max_nodes").get<int>();

    for (const auto& [name, hex] : meta.at("files").items()) {
        const uint64_t stored = std::stoull(hex.get<std::string>(), nullptr, 16);
        world.file_hashes[name] = stored;
        if (verify_hashes) {
            const uint64_t actual = file_hash((root / name).string());
            if (actual != stored) {
                throw Error::data("world file " + name + " does not match its recorded hash");
            }
        }
    }

    ordered_json vj;
    {
        std::ifstream is(root / "vocab.json");
        if (!is) throw Error::data("missing vocab.json in " + dir);
        is >> vj;
    }
    world.vocab = Vocabulary::from_tokens(vj.at("tokens").get<std::vector<std::string>>(),
                                          vj.at("num_tags").get<int>());

    for (const ordered_json& j : read_lines(root / "world.jsonl")) {
        EnvironmentGraph env;
        env.env_id = j.at("id").get<std::string>();
        env.split = split_from_name(j.at("split").get<std::string>());
        env.grid = j.at("grid").get<int>();
        env.feature_dim = j.at("feature_dim").get<int>();
        for (const ordered_json& nj : j.at("nodes")) {
            WorldNode n;
            n.id = nj.at("id").get<int>();
            n.x = nj.at("x").get<int>();
            n.y = nj.at("y").get<int>();
            n.tag = nj.at("tag").get<int>();
            n.feat = nj.at("feat").get<std::vector<float>>();
            env.nodes.push_back(std::move(n));
        }
        env.adj.assign(env.nodes.size(), {});
        for (const ordered_json& ej : j.at("edges")) {
            const int a = ej.at(0).get<int>(), b = ej.at(1).get<int>();
            env.adj[static_cast<size_t>(a)].push_back(b);
            env.adj[static_cast<size_t>(b)].push_back(a);
        }
        for (auto& list : env.adj) std::sort(list.begin(), list.end());
        env.build_distances();
        world.envs.push_back(std::move(env));
    }

    for (Split s : {Split::train, Split::val_seen, Split::val_unseen}) {
        std::vector<DatasetRecord>& dst = s == Split::train      ? world.train
                                          : s == Split::val_seen ? world.val_seen
                                                                 : world.val_unseen;
        for (const ordered_json& j : read_lines(root / dataset_file(s))) {
            DatasetRecord rec;
            rec.env_id = j.at("env").get<std::string>();
            rec.route = route_from_json(j.at("route"), rec.env_id);
            rec.tokens = j.at("tokens").get<std::vector<int>>();
            rec.style = j.at("style").get<int>();
            dst.push_back(std::move(rec));
        }
    }
    return world;
}

} // namespace foam

#pragma once

#include <map>
#include <string>
#include <vector>

#include "foam/lang.hpp"
#include "foam/world.hpp"

namespace foam {

// One labeled (route, instruction) pair. gen-world emits three styles per
// gold route, mirroring multiple annotations per path.
struct DatasetRecord {
    std::string env_id;
    Route route;
    Instruction tokens;
    int style = 0;
};

struct GenWorldOptions {
    uint64_t seed = 1;
    int n_train = 3;
    int n_val_seen = 2;
    int n_val_unseen = 3;
    int grid = 5;
    int feature_dim = 16;
    int num_tags = 12;
    int routes_per_env = 25;
    int route_min_nodes = 3;
    int route_max_nodes = 8;
};

// In-memory world bundle: environments, vocabulary, and the labeled datasets.
struct WorldData {
    std::vector<EnvironmentGraph> envs;
    Vocabulary vocab{12};
    std::vector<DatasetRecord> train;
    std::vector<DatasetRecord> val_seen;
    std::vector<DatasetRecord> val_unseen;
    GenWorldOptions options;
    std::map<std::string, uint64_t> file_hashes; // set when loaded from disk

    const std::vector<DatasetRecord>& dataset(Split s) const;
    int env_index(const std::string& env_id) const;
    const EnvironmentGraph& env(const std::string& env_id) const;
    std::vector<const EnvironmentGraph*> envs_of(Split s) const;
};

WorldData build_world(const GenWorldOptions& opt, int jobs = 1);

// World directory layout: world.jsonl, vocab.json, dataset_<split>.jsonl,
// routes_<split>.jsonl, meta.json (seed, options, file hashes).
void save_world_dir(const std::string& dir, const WorldData& world, bool force);
WorldData load_world_dir(const std::string& dir, bool verify_hashes = true);

uint64_t file_hash(const std::string& path);
std::string hash_hex(uint64_t h);

} // namespace foam

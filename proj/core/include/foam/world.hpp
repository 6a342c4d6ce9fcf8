#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "foam/rng.hpp"

namespace foam {

enum class Split { train, val_seen, val_unseen };
const char* split_name(Split s);
Split split_from_name(std::string_view name);

// Agent actions and compass headings. Forward moves one grid edge along the
// current heading; turns rotate in place; stop ends the episode.
enum Action : int { act_forward = 0, act_left = 1, act_right = 2, act_stop = 3 };
inline constexpr int kActionCount = 4;
inline constexpr int kHeadingCount = 4; // N, E, S, W
inline constexpr int kStartHeading = 0; // routes are described from a north-facing start

int heading_dx(int heading);
int heading_dy(int heading);
int apply_turn(int heading, int action);

struct WorldNode {
    int id = 0;
    int x = 0, y = 0;
    int tag = 0;
    std::vector<float> feat;
};

struct EnvironmentGraph {
    std::string env_id;
    Split split = Split::train;
    int grid = 0;
    int feature_dim = 0;
    std::vector<WorldNode> nodes;
    std::vector<std::vector<int>> adj; // sorted neighbor lists
    std::vector<int> dist;             // dense all-pairs BFS distances

    int node_count() const { return static_cast<int>(nodes.size()); }
    bool has_edge(int a, int b) const;
    int degree(int node) const { return static_cast<int>(adj[static_cast<size_t>(node)].size()); }
    // Neighbor reached by a forward move under `heading`, or -1.
    int neighbor_towards(int node, int heading) const;
    void check_node(int node, const char* who) const;
    void build_distances(); // call after edges are final
};

struct Route {
    std::string env_id;
    std::vector<int> nodes;
    std::vector<int> actions; // ends with act_stop
    int goal = -1;

    int hops() const { return static_cast<int>(nodes.size()) - 1; }
    bool operator==(const Route& o) const {
        return env_id == o.env_id && nodes == o.nodes && actions == o.actions && goal == o.goal;
    }
};

// Episode-consistent feature dropout over the F feature dimensions.
// project() only zeroes dropped dims (idempotent); the inverted-dropout
// 1/keep_prob rescale of the kept dims happens in observe().
struct DropoutMask {
    std::vector<uint8_t> keep;
    float keep_prob = 1.0f;

    void project(std::span<float> feat) const;
    bool all_kept() const;
};

DropoutMask full_keep_mask(int feature_dim);
DropoutMask sample_dropout_mask(int feature_dim, float keep_prob, Rng& rng);

std::vector<EnvironmentGraph> generate_world(uint64_t seed, int n_train, int n_val_seen,
                                             int n_val_unseen, int grid, int feature_dim,
                                             int num_tags, int jobs = 1);

// Landmark tags allowed in a split. Val-unseen draws from a tag range
// disjoint from train/val-seen so unseen environments are truly novel.
std::pair<int, int> split_tag_range(Split split, int num_tags);

// Shortest route between two uniformly sampled distinct nodes whose node
// count lies in [min_nodes, max_nodes]; the action sequence starts from a
// north-facing agent. Throws after too many rejected draws.
Route sample_route(const EnvironmentGraph& env, Rng& rng, int min_nodes, int max_nodes);

// Node feature vector masked/rescaled per the dropout mask, with the heading
// one-hot appended. Size feature_dim + 4.
std::vector<float> observe(const EnvironmentGraph& env, int node, int heading,
                           const DropoutMask* mask);

int shortest_distance(const EnvironmentGraph& env, int a, int b);

// Free-running replay: invalid forward moves are no-ops. Returns the visited
// node sequence (start node included).
std::vector<int> replay_actions(const EnvironmentGraph& env, int start, int heading,
                                std::span<const int> actions);

// Strict replay used for validation: false if any forward move is invalid.
bool replay_matches(const EnvironmentGraph& env, const Route& route);

// Action sequence (turns + forwards + stop) that traverses `nodes` starting
// from a north-facing agent.
std::vector<int> actions_from_nodes(const EnvironmentGraph& env, std::span<const int> nodes);

} // namespace foam

#include "foam/world.hpp"

#include <algorithm>
#include <atomic>
#include <deque>
#include <thread>

#include "foam/error.hpp"

namespace foam {

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val_seen: return "val_seen";
        case Split::val_unseen: return "val_unseen";
    }
    return "?";
}

Split split_from_name(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val_seen") return Split::val_seen;
    if (name == "val_unseen") return Split::val_unseen;
    throw Error::data("unknown split: " + std::string(name));
}

namespace {
constexpr int kDx[kHeadingCount] = {0, 1, 0, -1};
constexpr int kDy[kHeadingCount] = {1, 0, -1, 0};
} // namespace

int heading_dx(int heading) { return kDx[heading & 3]; }
int heading_dy(int heading) { return kDy[heading & 3]; }

int apply_turn(int heading, int action) {
    if (action == act_left) return (heading + 3) & 3;
    if (action == act_right) return (heading + 1) & 3;
    return heading;
}

bool EnvironmentGraph::has_edge(int a, int b) const {
    const auto& n = adj[static_cast<size_t>(a)];
    return std::binary_search(n.begin(), n.end(), b);
}

int EnvironmentGraph::neighbor_towards(int node, int heading) const {
    const WorldNode& n = nodes[static_cast<size_t>(node)];
    const int tx = n.x + heading_dx(heading);
    const int ty = n.y + heading_dy(heading);
    if (tx < 0 || tx >= grid || ty < 0 || ty >= grid) return -1;
    const int target = ty * grid + tx;
    return has_edge(node, target) ? target : -1;
}

void EnvironmentGraph::check_node(int node, const char* who) const {
    if (node < 0 || node >= node_count()) {
        throw Error::data(std::string(who) + ": invalid node " + std::to_string(node) + " in " +
                          env_id);
    }
}

void EnvironmentGraph::build_distances() {
    const int n = node_count();
    dist.assign(static_cast<size_t>(n) * n, -1);
    std::deque<int> queue;
    for (int s = 0; s < n; ++s) {
        int* d = &dist[static_cast<size_t>(s) * n];
        d[s] = 0;
        queue.clear();
        queue.push_back(s);
        while (!queue.empty()) {
            const int u = queue.front();
            queue.pop_front();
            for (int v : adj[static_cast<size_t>(u)]) {
                if (d[v] < 0) {
                    d[v] = d[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
}

void DropoutMask::project(std::span<float> feat) const {
    for (size_t i = 0; i < keep.size() && i < feat.size(); ++i) {
        if (!keep[i]) feat[i] = 0.0f;
    }
}

bool DropoutMask::all_kept() const {
    return std::all_of(keep.begin(), keep.end(), [](uint8_t k) { return k != 0; });
}

DropoutMask full_keep_mask(int feature_dim) {
    DropoutMask m;
    m.keep.assign(static_cast<size_t>(feature_dim), 1);
    m.keep_prob = 1.0f;
    return m;
}

DropoutMask sample_dropout_mask(int feature_dim, float keep_prob, Rng& rng) {
    DropoutMask m;
    m.keep_prob = keep_prob;
    m.keep.resize(static_cast<size_t>(feature_dim));
    for (auto& k : m.keep) k = rng.uniform() < keep_prob ? 1 : 0;
    return m;
}

std::pair<int, int> split_tag_range(Split split, int num_tags) {
    const int cut = std::max(1, (2 * num_tags) / 3);
    if (split == Split::val_unseen) return {cut, num_tags};
    return {0, cut};
}

namespace {

// Random connected grid subgraph: a randomized spanning tree plus a fraction
// of the remaining grid edges.
void build_edges(EnvironmentGraph& env, Rng& rng) {
    const int g = env.grid;
    const int n = g * g;
    std::vector<uint8_t> visited(static_cast<size_t>(n), 0);
    std::vector<std::pair<int, int>> edges;
    std::vector<int> stack;
    const int start = rng.uniform_int(n);
    stack.push_back(start);
    visited[static_cast<size_t>(start)] = 1;
    while (!stack.empty()) {
        const int u = stack.back();
        int candidates[kHeadingCount];
        int count = 0;
        const int ux = u % g, uy = u / g;
        for (int h = 0; h < kHeadingCount; ++h) {
            const int vx = ux + heading_dx(h), vy = uy + heading_dy(h);
            if (vx < 0 || vx >= g || vy < 0 || vy >= g) continue;
            const int v = vy * g + vx;
            if (!visited[static_cast<size_t>(v)]) candidates[count++] = v;
        }
        if (count == 0) {
            stack.pop_back();
            continue;
        }
        const int v = candidates[rng.uniform_int(count)];
        visited[static_cast<size_t>(v)] = 1;
        edges.emplace_back(u, v);
        stack.push_back(v);
    }
    // extra grid edges
    for (int y = 0; y < g; ++y) {
        for (int x = 0; x < g; ++x) {
            const int u = y * g + x;
            const int right = u + 1, up = u + g;
            if (x + 1 < g) {
                const bool have = std::find(edges.begin(), edges.end(), std::pair{u, right}) !=
                                      edges.end() ||
                                  std::find(edges.begin(), edges.end(), std::pair{right, u}) !=
                                      edges.end();
                if (!have && rng.uniform() < 0.45) edges.emplace_back(u, right);
            }
            if (y + 1 < g) {
                const bool have =
                    std::find(edges.begin(), edges.end(), std::pair{u, up}) != edges.end() ||
                    std::find(edges.begin(), edges.end(), std::pair{up, u}) != edges.end();
                if (!have && rng.uniform() < 0.45) edges.emplace_back(u, up);
            }
        }
    }
    env.adj.assign(static_cast<size_t>(n), {});
    for (auto [u, v] : edges) {
        env.adj[static_cast<size_t>(u)].push_back(v);
        env.adj[static_cast<size_t>(v)].push_back(u);
    }
    for (auto& list : env.adj) std::sort(list.begin(), list.end());
}

} // namespace

std::vector<EnvironmentGraph> generate_world(uint64_t seed, int n_train, int n_val_seen,
                                             int n_val_unseen, int grid, int feature_dim,
                                             int num_tags, int jobs) {
    if (n_train < 1 || n_val_seen < 1 || n_val_unseen < 1) {
        throw Error::config("generate_world: every split needs at least one environment");
    }
    if (grid < 3) throw Error::config("generate_world: grid must be at least 3x3");
    if (feature_dim < 1 || num_tags < 1) {
        throw Error::config("generate_world: feature_dim and num_tags must be positive");
    }
    const auto [unseen_lo, unseen_hi] = split_tag_range(Split::val_unseen, num_tags);
    if (unseen_lo >= unseen_hi) {
        throw Error::config("generate_world: tag set of size " + std::to_string(num_tags) +
                            " cannot be split into disjoint train/unseen subsets");
    }

    // Shared per-world tag/degree feature bases, so tag identity is stable
    // across environments.
    Rng basis_rng(stream_seed(seed, "feature-basis"));
    std::vector<std::vector<float>> tag_basis(static_cast<size_t>(num_tags));
    for (auto& b : tag_basis) {
        b.resize(static_cast<size_t>(feature_dim));
        for (auto& v : b) v = basis_rng.uniform_float(-1.0f, 1.0f);
    }
    std::vector<std::vector<float>> deg_basis(kHeadingCount + 1);
    for (auto& b : deg_basis) {
        b.resize(static_cast<size_t>(feature_dim));
        for (auto& v : b) v = basis_rng.uniform_float(-1.0f, 1.0f);
    }

    std::vector<std::pair<Split, int>> plan;
    for (int i = 0; i < n_train; ++i) plan.emplace_back(Split::train, i);
    for (int i = 0; i < n_val_unseen; ++i) plan.emplace_back(Split::val_unseen, i);

    std::vector<EnvironmentGraph> envs(plan.size());
    auto build_one = [&](size_t slot) {
        const auto [split, index] = plan[slot];
        const auto [tag_lo, tag_hi] = split_tag_range(split, num_tags);
        EnvironmentGraph env;
        env.split = split;
        env.env_id = std::string(split_name(split)) + "_" + std::to_string(index);
        env.grid = grid;
        env.feature_dim = feature_dim;
        Rng rng(stream_seed(seed, "env/" + env.env_id));
        build_edges(env, rng);
        env.nodes.resize(static_cast<size_t>(grid) * grid);
        for (int y = 0; y < grid; ++y) {
            for (int x = 0; x < grid; ++x) {
                WorldNode& node = env.nodes[static_cast<size_t>(y) * grid + x];
                node.id = y * grid + x;
                node.x = x;
                node.y = y;
                node.tag = tag_lo + rng.uniform_int(tag_hi - tag_lo);
            }
        }
        for (WorldNode& node : env.nodes) {
            node.feat.resize(static_cast<size_t>(feature_dim));
            const auto& tb = tag_basis[static_cast<size_t>(node.tag)];
            const auto& db = deg_basis[static_cast<size_t>(env.degree(node.id))];
            for (int f = 0; f < feature_dim; ++f) {
                node.feat[static_cast<size_t>(f)] =
                    tb[static_cast<size_t>(f)] + 0.3f * db[static_cast<size_t>(f)] +
                    0.15f * rng.uniform_float(-1.0f, 1.0f);
            }
        }
        env.build_distances();
        envs[slot] = std::move(env);
    };

    if (jobs <= 1 || plan.size() < 2) {
        for (size_t i = 0; i < plan.size(); ++i) build_one(i);
    } else {
        std::vector<std::thread> threads;
        std::atomic<size_t> next{0};
        for (int j = 0; j < jobs; ++j) {
            threads.emplace_back([&]() {
                for (size_t i = next.fetch_add(1); i < plan.size(); i = next.fetch_add(1)) {
                    build_one(i);
                }
            });
        }
        for (std::thread& th : threads) th.join();
    }

    // Val-seen holds fresh routes through environments seen during training:
    // each val-seen entry clones a train environment under a new id, and its
    // evaluation routes are sampled independently later.
    std::vector<EnvironmentGraph> ordered;
    ordered.reserve(static_cast<size_t>(n_train + n_val_seen + n_val_unseen));
    for (int i = 0; i < n_train; ++i) ordered.push_back(std::move(envs[static_cast<size_t>(i)]));
    for (int i = 0; i < n_val_seen; ++i) {
        EnvironmentGraph clone = ordered[static_cast<size_t>(i % n_train)];
        clone.split = Split::val_seen;
        clone.env_id = std::string(split_name(Split::val_seen)) + "_" + std::to_string(i);
        ordered.push_back(std::move(clone));
    }
    for (int i = 0; i < n_val_unseen; ++i) {
        ordered.push_back(std::move(envs[static_cast<size_t>(n_train + i)]));
    }
    return ordered;
}

Route sample_route(const EnvironmentGraph& env, Rng& rng, int min_nodes, int max_nodes) {
    if (min_nodes < 2 || max_nodes < min_nodes) {
        throw Error::config("sample_route: bad length bounds [" + std::to_string(min_nodes) +
                            "," + std::to_string(max_nodes) + "]");
    }
    const int n = env.node_count();
    constexpr int kMaxAttempts = 500;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const int a = rng.uniform_int(n);
        const int b = rng.uniform_int(n);
        if (a == b) continue;
        const int d = env.dist[static_cast<size_t>(a) * n + b];
        if (d < min_nodes - 1 || d > max_nodes - 1) continue;

        // Deterministic BFS shortest path: neighbors visited in sorted order.
        std::vector<int> parent(static_cast<size_t>(n), -2);
        std::deque<int> queue{a};
        parent[static_cast<size_t>(a)] = -1;
        while (!queue.empty() && parent[static_cast<size_t>(b)] == -2) {
            const int u = queue.front();
            queue.pop_front();
            for (int v : env.adj[static_cast<size_t>(u)]) {
                if (parent[static_cast<size_t>(v)] == -2) {
                    parent[static_cast<size_t>(v)] = u;
                    queue.push_back(v);
                }
            }
        }
        Route route;
        route.env_id = env.env_id;
        for (int v = b; v != -1; v = parent[static_cast<size_t>(v)]) route.nodes.push_back(v);
        std::reverse(route.nodes.begin(), route.nodes.end());
        route.goal = b;
        route.actions = actions_from_nodes(env, route.nodes);
        return route;
    }
    throw Error::data("sample_route: no node pair within bounds after " +
                      std::to_string(kMaxAttempts) + " attempts in " + env.env_id);
}

std::vector<float> observe(const EnvironmentGraph& env, int node, int heading,
                           const DropoutMask* mask) {
    env.check_node(node, "observe");
    const WorldNode& n = env.nodes[static_cast<size_t>(node)];
    std::vector<float> out(n.feat.begin(), n.feat.end());
    if (mask != nullptr) {
        mask->project(out);
        if (mask->keep_prob > 0.0f && mask->keep_prob < 1.0f) {
            const float inv = 1.0f / mask->keep_prob;
            for (size_t i = 0; i < mask->keep.size() && i < out.size(); ++i) {
                if (mask->keep[i]) out[i] *= inv;
            }
        }
    }
    out.resize(out.size() + kHeadingCount, 0.0f);
    out[out.size() - kHeadingCount + (heading & 3)] = 1.0f;
    return out;
}

int shortest_distance(const EnvironmentGraph& env, int a, int b) {
    env.check_node(a, "shortest_distance");
    env.check_node(b, "shortest_distance");
    const int d = env.dist[static_cast<size_t>(a) * env.node_count() + b];
    if (d < 0) throw Error::data("shortest_distance: disconnected nodes in " + env.env_id);
    return d;
}

std::vector<int> replay_actions(const EnvironmentGraph& env, int start, int heading,
                                std::span<const int> actions) {
    env.check_node(start, "replay_actions");
    std::vector<int> nodes{start};
    int node = start;
    for (int action : actions) {
        if (action == act_stop) break;
        if (action == act_forward) {
            const int next = env.neighbor_towards(node, heading);
            if (next >= 0) {
                node = next;
                nodes.push_back(node);
            }
        } else {
            heading = apply_turn(heading, action);
        }
    }
    return nodes;
}

bool replay_matches(const EnvironmentGraph& env, const Route& route) {
    if (route.nodes.empty() || route.actions.empty()) return false;
    if (route.actions.back() != act_stop) return false;
    if (route.goal != route.nodes.back()) return false;
    int node = route.nodes.front();
    int heading = kStartHeading;
    size_t pos = 1;
    for (size_t i = 0; i + 1 < route.actions.size(); ++i) {
        const int action = route.actions[i];
        if (action == act_stop) return false;
        if (action == act_forward) {
            const int next = env.neighbor_towards(node, heading);
            if (next < 0) return false;
            if (pos >= route.nodes.size() || route.nodes[pos] != next) return false;
            node = next;
            ++pos;
        } else {
            heading = apply_turn(heading, action);
        }
    }
    return pos == route.nodes.size();
}

std::vector<int> actions_from_nodes(const EnvironmentGraph& env, std::span<const int> nodes) {
    std::vector<int> actions;
    int heading = kStartHeading;
    for (size_t i = 0; i + 1 < nodes.size(); ++i) {
        const WorldNode& cur = env.nodes[static_cast<size_t>(nodes[i])];
        const WorldNode& nxt = env.nodes[static_cast<size_t>(nodes[i + 1])];
        if (!env.has_edge(nodes[i], nodes[i + 1])) {
            throw Error::data("actions_from_nodes: nodes " + std::to_string(nodes[i]) + "," +
                              std::to_string(nodes[i + 1]) + " not adjacent in " + env.env_id);
        }
        const int dx = nxt.x - cur.x, dy = nxt.y - cur.y;
        int target = -1;
        for (int h = 0; h < kHeadingCount; ++h) {
            if (heading_dx(h) == dx && heading_dy(h) == dy) target = h;
        }
        const int delta = (target - heading + kHeadingCount) & 3;
        if (delta == 1) {
            actions.push_back(act_right);
        } else if (delta == 3) {
            actions.push_back(act_left);
        } else if (delta == 2) {
            actions.push_back(act_right);
            actions.push_back(act_right);
        }
        heading = target;
        actions.push_back(act_forward);
    }
    actions.push_back(act_stop);
    return actions;
}

} // namespace foam

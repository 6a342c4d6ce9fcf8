#include "foam/lang.hpp"

#include <array>

#include "foam/error.hpp"

namespace foam {

namespace {

// 24 grammar/filler words; with 4 reserved ids and the default 12 tags the
// vocabulary lands on exactly 40 tokens.
const std::array<const char*, 24> kWords = {
    "go",   "walk", "move",     "turn", "rotate", "veer", "forward", "ahead",
    "straight", "left", "right", "past", "by",   "near", "the",     "at",
    "stop", "halt", "wait",     "a",    "head",   "reach", "then",   "and",
};

const std::array<const char*, 12> kTagNames = {
    "red",  "blue", "green", "door", "lamp", "desk",
    "tree", "rock", "gate",  "well", "arch", "sign",
};

// Paraphrase templates, one row per style. Forward/turn starters are chosen
// so every phrase type has a disjoint starter set, which keeps the grammar
// invertible without lookahead beyond one token.
const char* kForward[kStyleCount][2] = {{"go", "forward"}, {"walk", "ahead"}, {"move", "straight"}};
const char* kTurn[kStyleCount] = {"turn", "rotate", "veer"};
const char* kRef[kStyleCount][2] = {{"past", "the"}, {"by", "the"}, {"near", "the"}};
const char* kStop[kStyleCount][3] = {
    {"stop", "at", "the"}, {"halt", "at", "the"}, {"wait", "near", "the"}};

} // namespace

Vocabulary::Vocabulary(int num_tags) {
    if (num_tags < 1) throw Error::config("vocabulary: num_tags must be positive");
    tokens_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
    for (const char* w : kWords) tokens_.emplace_back(w);
    first_tag_id_ = static_cast<int>(tokens_.size());
    num_tags_ = num_tags;
    for (int t = 0; t < num_tags; ++t) {
        if (t < static_cast<int>(kTagNames.size())) {
            tokens_.emplace_back(kTagNames[static_cast<size_t>(t)]);
        } else {
            tokens_.emplace_back("mark" + std::to_string(t));
        }
    }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, int num_tags) {
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    v.num_tags_ = num_tags;
    v.first_tag_id_ = static_cast<int>(v.tokens_.size()) - num_tags;
    if (v.first_tag_id_ < 4) throw Error::data("vocabulary: token list too short");
    return v;
}

int Vocabulary::id(std::string_view token) const {
    for (size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i] == token) return static_cast<int>(i);
    }
    return unk_id;
}

const std::string& Vocabulary::token(int tid) const {
    if (tid < 0 || tid >= size()) throw Error::data("vocabulary: id out of range");
    return tokens_[static_cast<size_t>(tid)];
}

int Vocabulary::tag_token_id(int tag) const {
    if (tag < 0 || tag >= num_tags_) throw Error::data("vocabulary: tag out of range");
    return first_tag_id_ + tag;
}

int Vocabulary::tag_of_token(int tid) const {
    if (tid < first_tag_id_ || tid >= first_tag_id_ + num_tags_) return -1;
    return tid - first_tag_id_;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
    std::string out;
    for (int tid : ids) {
        if (!out.empty()) out += ' ';
        out += token(tid);
    }
    return out;
}

Instruction Vocabulary::tokenize(std::string_view text) const {
    Instruction out;
    size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && text[pos] == ' ') ++pos;
        size_t end = pos;
        while (end < text.size() && text[end] != ' ') ++end;
        if (end > pos) out.push_back(id(text.substr(pos, end - pos)));
        pos = end;
    }
    return out;
}

Instruction annotate(const Route& route, const EnvironmentGraph& env, const Vocabulary& vocab,
                     uint64_t style_seed) {
    if (route.nodes.size() < 2 || !replay_matches(env, route)) {
        throw Error::data("annotate: route does not replay in " + env.env_id);
    }
    const int style = static_cast<int>(style_seed % kStyleCount);
    Instruction out;
    auto emit = [&](const char* word) { out.push_back(vocab.id(word)); };

    size_t node_pos = 0;
    for (size_t i = 0; i < route.actions.size(); ++i) {
        const int action = route.actions[i];
        if (action == act_forward) {
            emit(kForward[style][0]);
            emit(kForward[style][1]);
            ++node_pos;
            // landmark reference at intermediate nodes; the goal is covered
            // by the stop phrase
            if (node_pos + 1 < route.nodes.size()) {
                const int tag = env.nodes[static_cast<size_t>(route.nodes[node_pos])].tag;
                emit(kRef[style][0]);
                emit(kRef[style][1]);
                out.push_back(vocab.tag_token_id(tag));
            }
        } else if (action == act_left || action == act_right) {
            emit(kTurn[style]);
            emit(action == act_left ? "left" : "right");
        } else { // stop
            const int tag = env.nodes[static_cast<size_t>(route.goal)].tag;
            emit(kStop[style][0]);
            emit(kStop[style][1]);
            emit(kStop[style][2]);
            out.push_back(vocab.tag_token_id(tag));
        }
    }
    return out;
}

namespace {

struct TokenCursor {
    std::span<const int> tokens;
    const Vocabulary& vocab;
    size_t pos = 0;

    bool done() const { return pos >= tokens.size(); }
    int peek() const { return done() ? -1 : tokens[pos]; }
    const std::string& peek_word() const {
        static const std::string kNone = "";
        return done() ? kNone : vocab.token(tokens[pos]);
    }
    int take() {
        if (done()) throw Error::data("oracle_parse: unexpected end of instruction");
        return tokens[pos++];
    }
    void expect(const char* word) {
        const int tid = take();
        if (vocab.token(tid) != word) {
            throw Error::data("oracle_parse: expected '" + std::string(word) + "', got '" +
                              vocab.token(tid) + "'");
        }
    }
};

bool is_one_of(const std::string& w, std::initializer_list<const char*> set) {
    for (const char* s : set) {
        if (w == s) return true;
    }
    return false;
}

int which_style(const std::string& w, const char* s0, const char* s1, const char* s2) {
    if (w == s0) return 0;
    if (w == s1) return 1;
    if (w == s2) return 2;
    return -1;
}

} // namespace

Route oracle_parse(std::span<const int> tokens, const EnvironmentGraph& env,
                   const Vocabulary& vocab, int start, int heading) {
    if (tokens.empty()) throw Error::data("oracle_parse: empty instruction");
    for (int tid : tokens) {
        if (tid < 0 || tid >= vocab.size() || tid == Vocabulary::unk_id) {
            throw Error::data("oracle_parse: unknown token id " + std::to_string(tid));
        }
    }
    env.check_node(start, "oracle_parse");

    Route route;
    route.env_id = env.env_id;
    route.nodes.push_back(start);
    int node = start;
    bool stopped = false;
    TokenCursor cur{tokens, vocab};

    while (!cur.done()) {
        const std::string word = vocab.token(cur.take());
        int style;
        if ((style = which_style(word, kForward[0][0], kForward[1][0], kForward[2][0])) >= 0) {
            cur.expect(kForward[style][1]);
            const int next = env.neighbor_towards(node, heading);
            if (next < 0) {
                throw Error::data("oracle_parse: forward move has no edge at node " +
                                  std::to_string(node) + " in " + env.env_id);
            }
            node = next;
            route.nodes.push_back(node);
            route.actions.push_back(act_forward);
            // optional landmark reference
            if (!cur.done() && is_one_of(cur.peek_word(), {kRef[0][0], kRef[1][0], kRef[2][0]})) {
                const int rstyle =
                    which_style(cur.peek_word(), kRef[0][0], kRef[1][0], kRef[2][0]);
                cur.take();
                cur.expect(kRef[rstyle][1]);
                const int tag = vocab.tag_of_token(cur.take());
                if (tag < 0) throw Error::data("oracle_parse: expected a landmark tag");
                if (tag != env.nodes[static_cast<size_t>(node)].tag) {
                    throw Error::data("oracle_parse: landmark mismatch at node " +
                                      std::to_string(node));
                }
            }
        } else if ((style = which_style(word, kTurn[0], kTurn[1], kTurn[2])) >= 0) {
            const std::string dir = vocab.token(cur.take());
            int action;
            if (dir == "left") {
                action = act_left;
            } else if (dir == "right") {
                action = act_right;
            } else {
                throw Error::data("oracle_parse: expected a direction, got '" + dir + "'");
            }
            heading = apply_turn(heading, action);
            route.actions.push_back(action);
        } else if ((style = which_style(word, kStop[0][0], kStop[1][0], kStop[2][0])) >= 0) {
            cur.expect(kStop[style][1]);
            cur.expect(kStop[style][2]);
            const int tag = vocab.tag_of_token(cur.take());
            if (tag < 0) throw Error::data("oracle_parse: expected the goal tag");
            if (tag != env.nodes[static_cast<size_t>(node)].tag) {
                throw Error::data("oracle_parse: goal tag mismatch at node " +
                                  std::to_string(node));
            }
            route.actions.push_back(act_stop);
            stopped = true;
            if (!cur.done()) throw Error::data("oracle_parse: trailing tokens after stop phrase");
        } else {
            throw Error::data("oracle_parse: unexpected token '" + word + "'");
        }
    }
    if (!stopped) throw Error::data("oracle_parse: instruction has no stop phrase");
    route.goal = node;
    return route;
}

} // namespace foam

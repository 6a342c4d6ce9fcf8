#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "foam/world.hpp"

namespace foam {

// Token-id sequence over the fixed vocabulary. Content tokens only in
// dataset records; generated sequences additionally end with EOS when the
// decoder terminated on its own.
using Instruction = std::vector<int>;

// Fixed word inventory plus landmark tag names. Reserved ids occupy 0..3 and
// the mapping is frozen at world-generation time.
class Vocabulary {
public:
    static constexpr int pad_id = 0;
    static constexpr int bos_id = 1;
    static constexpr int eos_id = 2;
    static constexpr int unk_id = 3;

    explicit Vocabulary(int num_tags);
    static Vocabulary from_tokens(std::vector<std::string> tokens, int num_tags);

    int size() const { return static_cast<int>(tokens_.size()); }
    int num_tags() const { return num_tags_; }
    int id(std::string_view token) const; // unk_id if absent
    const std::string& token(int id) const;
    int tag_token_id(int tag) const;
    int tag_of_token(int id) const; // -1 if not a tag token
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::string detokenize(std::span<const int> ids) const;
    Instruction tokenize(std::string_view text) const;

private:
    Vocabulary() = default;
    std::vector<std::string> tokens_;
    int num_tags_ = 0;
    int first_tag_id_ = 0;
};

// Deterministic grammar output for a route: per action a movement phrase, a
// landmark reference when arriving at an intermediate node, and a final stop
// phrase naming the goal tag. The style seed selects one of three fixed
// paraphrase templates per phrase type.
inline constexpr int kStyleCount = 3;

Instruction annotate(const Route& route, const EnvironmentGraph& env, const Vocabulary& vocab,
                     uint64_t style_seed);

// Inverts the grammar: reconstructs the route by parsing movement phrases and
// verifying landmark references against the environment. Throws on anything
// the grammar cannot have produced.
Route oracle_parse(std::span<const int> tokens, const EnvironmentGraph& env,
                   const Vocabulary& vocab, int start, int heading);

} // namespace foam

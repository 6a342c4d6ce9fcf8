#pragma once

#include <map>
#include <string>

namespace foam {

// Flat dotted-key configuration ("train.eta_s = 0.05"). Precedence is
// resolved by the caller: command-line flag > config-file key > default.
class FlatConfig {
public:
    static FlatConfig from_file(const std::string& path);

    void set(const std::string& key, std::string value) { kv_[key] = std::move(value); }
    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& dflt) const;
    int get_int(const std::string& key, int dflt) const;
    double get_double(const std::string& key, double dflt) const;
    bool get_bool(const std::string& key, bool dflt) const;
    uint64_t get_u64(const std::string& key, uint64_t dflt) const;

    const std::map<std::string, std::string>& entries() const { return kv_; }
    void merge_over(const FlatConfig& weaker); // keep own keys, adopt the rest

private:
    std::map<std::string, std::string> kv_;
};

} // namespace foam

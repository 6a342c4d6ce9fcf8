#include "foam/config.hpp"

#include <fstream>

#include "foam/error.hpp"

namespace foam {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

} // namespace

FlatConfig FlatConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error::config("cannot open config file " + path);
    FlatConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        const size_t eq = trimmed.find('=');
        if (eq == std::string::npos) {
            throw Error::config(path + ":" + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(trimmed.substr(0, eq));
        const std::string value = trim(trimmed.substr(eq + 1));
        if (key.empty()) {
            throw Error::config(path + ":" + std::to_string(lineno) + ": empty key");
        }
        cfg.kv_[key] = value;
    }
    return cfg;
}

std::string FlatConfig::get_str(const std::string& key, const std::string& dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
}

int FlatConfig::get_int(const std::string& key, int dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
        return std::stoi(it->second);
    } catch (const std::exception&) {
        throw Error::config("config key " + key + ": expected an integer, got '" + it->second +
                            "'");
    }
}

double FlatConfig::get_double(const std::string& key, double dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw Error::config("config key " + key + ": expected a number, got '" + it->second + "'");
    }
}

bool FlatConfig::get_bool(const std::string& key, bool dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw Error::config("config key " + key + ": expected a boolean, got '" + v + "'");
}

uint64_t FlatConfig::get_u64(const std::string& key, uint64_t dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw Error::config("config key " + key + ": expected an unsigned integer, got '" +
                            it->second + "'");
    }
}

void FlatConfig::merge_over(const FlatConfig& weaker) {
    for (const auto& [k, v] : weaker.kv_) {
        kv_.emplace(k, v); // existing keys win
    }
}

} // namespace foam

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "mtps/errors.hpp"

namespace mtps {

// Plain-text `key = value` files with # comments. Typed getters track which
// keys were consumed so unknown keys can be rejected.
class KeyValueConfig {
public:
    KeyValueConfig() = default;
    static KeyValueConfig load(const std::filesystem::path& path);
    static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long get_long(const std::string& key, long fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Every key must have been consumed by a getter; otherwise lists offenders.
    void reject_unknown() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> consumed_;
    std::string origin_;
};

}  // namespace mtps

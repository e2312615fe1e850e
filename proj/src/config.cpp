#include "mtps/config.hpp"

#include <fstream>
#include <sstream>

namespace mtps {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key = trim(t.substr(0, eq));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        cfg.values_[key] = trim(t.substr(eq + 1));
    }
    return cfg;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse '" + it->second +
                          "' as a number");
    }
}

long KeyValueConfig::get_long(const std::string& key, long fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stol(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse '" + it->second +
                          "' as an integer");
    }
}

uint64_t KeyValueConfig::get_u64(const std::string& key, uint64_t fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse '" + it->second +
                          "' as an integer");
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw ConfigError("config key '" + key + "': cannot parse '" + it->second + "' as a boolean");
}

void KeyValueConfig::reject_unknown() const {
    std::string offenders;
    for (const auto& [key, value] : values_)
        if (!consumed_.count(key)) offenders += (offenders.empty() ? "" : ", ") + key;
    if (!offenders.empty())
        throw ConfigError("unknown config keys in " + origin_ + ": " + offenders);
}

}  // namespace mtps

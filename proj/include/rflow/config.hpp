#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace rflow {

// UTF-8 key=value configuration with [section] headers. '#' and ';' start
// comments; blank lines are skipped; keys before any header land in the ""
// section. All lookups are string-based with typed accessors; malformed
// input and bad conversions throw ConfigError.
class Config {
public:
    Config() = default;

    static Config parse_file(const std::filesystem::path& path);
    static Config parse_string(const std::string& text);

    // "section.key=value" (key-only targets the "" section).
    void apply_override(const std::string& assignment);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& section, const std::string& key,
                         std::int64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

    void set(const std::string& section, const std::string& key, const std::string& value);

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

    // Canonical "[section]\nkey=value" dump with sorted sections and keys;
    // two configs with equal snapshots behave identically.
    std::string snapshot() const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace rflow

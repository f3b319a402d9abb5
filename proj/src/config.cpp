#include "rflow/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "rflow/errors.hpp"

namespace rflow {

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = 0, end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return s.substr(begin, end - begin);
}

}  // namespace

Config Config::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
}

Config Config::parse_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']' || t.size() < 3) {
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": malformed section header '" + t + "'");
            }
            section = trim(t.substr(1, t.size() - 2));
            cfg.sections_[section];  // a header with no keys is still valid
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key=value, got '" + t + "'");
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        }
        cfg.sections_[section][key] = value;
    }
    return cfg;
}

void Config::apply_override(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override must look like section.key=value, got '" + assignment + "'");
    }
    std::string target = trim(assignment.substr(0, eq));
    std::string value = trim(assignment.substr(eq + 1));
    if (target.empty()) throw ConfigError("override with empty key: '" + assignment + "'");
    auto dot = target.rfind('.');
    std::string section = (dot == std::string::npos) ? "" : target.substr(0, dot);
    std::string key = (dot == std::string::npos) ? target : target.substr(dot + 1);
    if (key.empty()) throw ConfigError("override with empty key: '" + assignment + "'");
    sections_[section][key] = value;
}

bool Config::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string Config::get(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s != sections_.end()) {
        auto k = s->second.find(key);
        if (k != s->second.end()) return k->second;
    }
    throw ConfigError("missing config key [" + section + "] " + key);
}

std::string Config::get_or(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
    return has(section, key) ? get(section, key) : fallback;
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& raw = get(section, key);
    try {
        std::size_t used = 0;
        double v = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key [" + section + "] " + key + " is not a number: '" + raw +
                          "'");
    }
}

std::int64_t Config::get_int(const std::string& section, const std::string& key,
                             std::int64_t fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& raw = get(section, key);
    try {
        std::size_t used = 0;
        long long v = std::stoll(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key [" + section + "] " + key + " is not an integer: '" + raw +
                          "'");
    }
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& raw = get(section, key);
    if (raw == "1" || raw == "true" || raw == "on" || raw == "yes") return true;
    if (raw == "0" || raw == "false" || raw == "off" || raw == "no") return false;
    throw ConfigError("config key [" + section + "] " + key + " is not a boolean: '" + raw + "'");
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
    sections_[section][key] = value;
}

std::string Config::snapshot() const {
    std::string out;
    for (const auto& [section, keys] : sections_) {
        if (keys.empty()) continue;
        out += "[" + section + "]\n";
        for (const auto& [key, value] : keys) {
            out += key + "=" + value + "\n";
        }
    }
    return out;
}

}  // namespace rflow

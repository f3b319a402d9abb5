#include "rflow/manifest.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "rflow/errors.hpp"
#include "rflow/sha256.hpp"

namespace rflow {

std::string RunManifest::derive_run_id(const std::string& version, std::uint64_t master_seed,
                                       const std::string& config_snapshot) {
    std::string material = version + "\n" + std::to_string(master_seed) + "\n" + config_snapshot;
    return sha256_hex(material).substr(0, 16);
}

void RunManifest::add_artifact(const std::string& name, const std::filesystem::path& path,
                               bool metrics) {
    std::string digest = sha256_file_hex(path);
    for (ArtifactEntry& entry : artifacts) {
        if (entry.name != name) continue;
        if (entry.sha256 != digest && !entry.metrics) {
            throw ContractError("artifact '" + name + "' changed content within a run");
        }
        entry.path = path.string();
        entry.sha256 = digest;
        return;
    }
    artifacts.push_back({name, path.string(), digest, metrics});
}

void RunManifest::add_timing(const std::string& stage, double seconds) {
    timings.push_back({stage, seconds});
}

const ArtifactEntry* RunManifest::find_artifact(const std::string& name) const {
    for (const ArtifactEntry& entry : artifacts) {
        if (entry.name == name) return &entry;
    }
    return nullptr;
}

std::string RunManifest::hash() const {
    // Deterministic material only: no paths, no timings.
    std::string material;
    material += "version=" + version + "\n";
    material += "master_seed=" + std::to_string(master_seed) + "\n";
    material += "run_id=" + run_id + "\n";
    material += "config:\n" + config_snapshot;
    std::vector<const ArtifactEntry*> sorted;
    for (const ArtifactEntry& entry : artifacts) {
        if (!entry.metrics) sorted.push_back(&entry);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const ArtifactEntry* a, const ArtifactEntry* b) { return a->name < b->name; });
    for (const ArtifactEntry* entry : sorted) {
        material += "artifact:" + entry->name + "=" + entry->sha256 + "\n";
    }
    for (const auto& [key, value] : stats) {
        material += "stat:" + key + "=" + value + "\n";
    }
    return sha256_hex(material);
}

void RunManifest::save(const std::filesystem::path& path) const {
    nlohmann::ordered_json j;
    j["run_id"] = run_id;
    j["version"] = version;
    j["master_seed"] = master_seed;
    j["config_snapshot"] = config_snapshot;
    j["artifacts"] = nlohmann::ordered_json::array();
    for (const ArtifactEntry& entry : artifacts) {
        j["artifacts"].push_back({{"name", entry.name},
                                  {"path", entry.path},
                                  {"sha256", entry.sha256},
                                  {"metrics", entry.metrics}});
    }
    j["timings"] = nlohmann::ordered_json::array();
    for (const StageTiming& timing : timings) {
        j["timings"].push_back({{"stage", timing.stage}, {"seconds", timing.seconds}});
    }
    j["stats"] = stats;
    j["manifest_hash"] = hash();
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << "\n";
    if (!out) throw Error("short write to '" + path.string() + "'");
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed manifest '" + path.string() + "': " + e.what());
    }
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.config_snapshot = j.at("config_snapshot").get<std::string>();
    for (const auto& entry : j.at("artifacts")) {
        m.artifacts.push_back({entry.at("name").get<std::string>(),
                               entry.at("path").get<std::string>(),
                               entry.at("sha256").get<std::string>(),
                               entry.value("metrics", false)});
    }
    for (const auto& timing : j.at("timings")) {
        m.timings.push_back(
            {timing.at("stage").get<std::string>(), timing.at("seconds").get<double>()});
    }
    if (j.contains("stats")) {
        for (const auto& [key, value] : j.at("stats").items()) {
            m.stats[key] = value.get<std::string>();
        }
    }
    return m;
}

}  // namespace rflow

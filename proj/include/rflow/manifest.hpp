#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace rflow {

struct ArtifactEntry {
    std::string name;    // stable identifier (file name)
    std::string path;    // where it was written this run
    std::string sha256;  // content hash
    // Metrics files may embed wall-clock values, so they are recorded and
    // hashed here but excluded from the run-level manifest hash.
    bool metrics = false;
};

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

// Record of one pipeline/CLI run: what was configured, what was produced,
// and content hashes for everything. Entries are append-only within a run.
// The manifest hash covers only the deterministic parts (version, seed,
// config snapshot, artifact names + hashes, stats) — never timings or
// absolute paths — so reruns with the same seed hash identically.
struct RunManifest {
    std::string run_id;
    std::string version;
    std::uint64_t master_seed = 0;
    std::string config_snapshot;
    std::vector<ArtifactEntry> artifacts;
    std::vector<StageTiming> timings;
    std::map<std::string, std::string> stats;

    // Derived from version + seed + config (no timestamps), so the same
    // configuration always maps to the same id.
    static std::string derive_run_id(const std::string& version, std::uint64_t master_seed,
                                     const std::string& config_snapshot);

    // Hashes the file and appends (or confirms) the entry. Re-adding the
    // same name with differing content is an error (append-only contract);
    // metrics entries may change freely between reruns.
    void add_artifact(const std::string& name, const std::filesystem::path& path,
                      bool metrics = false);
    void add_timing(const std::string& stage, double seconds);

    const ArtifactEntry* find_artifact(const std::string& name) const;

    std::string hash() const;

    void save(const std::filesystem::path& path) const;
    static RunManifest load(const std::filesystem::path& path);
};

}  // namespace rflow

#pragma once

#include <cstdint>
#include <filesystem>

#include "rflow/anchored.hpp"
#include "rflow/config.hpp"
#include "rflow/manifest.hpp"
#include "rflow/training.hpp"

namespace rflow {

// Stage token used on the command line and in config section names
// ("distill" for Stage::Distilled; others match stage_name()).
std::string stage_token(Stage stage);

// Seed-stream indices (stage seed = mix_seed(master_seed, stream)). Fixed
// forever: single-stage CLI runs use the same derivation, so training the
// stages one by one reproduces the pipeline artifacts bit for bit.
std::uint64_t stage_seed_stream(Stage stage);
// Stream for coupling generation from a trained rf1/rf2 model.
std::uint64_t coupling_seed_stream(Stage source_stage);

// TrainConfig for one stage: stage defaults overridden by the
// [stage.<token>] config section, seeded as given.
TrainConfig stage_config(const Config& cfg, Stage stage, std::uint64_t seed);

// AnchoredOptions from the [anchored] section (omega/steps filled by the
// coupling-generation call site).
AnchoredOptions anchored_config(const Config& cfg);

// Coupling-generation settings from the [couplings] section.
struct CouplingGenConfig {
    std::size_t count = 16384;
    std::size_t steps = 100;
    double omega = 1.5;
    bool anchored = true;
};
CouplingGenConfig coupling_config(const Config& cfg);

// Open (or create) the manifest for this configuration in out_dir, creating
// the directory as needed. A directory already holding a different run's
// manifest is refused (ConfigError).
RunManifest open_run_manifest(const Config& cfg, const std::filesystem::path& out_dir,
                              std::uint64_t master_seed);

// One stage with full bookkeeping: when the stage's artifact is already
// recorded and its bytes still hash to the recorded value, it is loaded
// back instead of retrained; otherwise the stage trains, the checkpoint and
// loss CSV are written, and artifacts/stats/timing recorded. The manifest
// file in out_dir is rewritten afterwards. coupling_name is the artifact
// the couplings came from (recorded in the train config for rf2/distill).
VelocityField pipeline_train_stage(const Config& cfg, const std::filesystem::path& out_dir,
                                   RunManifest& manifest, std::uint64_t master_seed, Stage stage,
                                   const VelocityField* init, const CouplingSet* couplings,
                                   const std::string& coupling_name);

// Coupling generation under the same reuse/record contract. name is the
// artifact stem: "couplings_rf1" writes couplings_rf1.rfcpl.
CouplingSet pipeline_generate_couplings(const Config& cfg, const std::filesystem::path& out_dir,
                                        RunManifest& manifest, std::uint64_t master_seed,
                                        const std::string& name, const VelocityField& model);

// Full training chain: fm -> rf1 (init from fm) -> anchored couplings ->
// rf2 (init from rf1) -> anchored couplings -> distill (init from rf2).
// Artifacts land in out_dir named by stage; the manifest is rewritten after
// every stage with entries only appended. A rerun over the same out_dir
// resumes: stages whose artifacts are already recorded (hash-verified) are
// loaded instead of retrained. The directory must not hold a different
// run's manifest.
RunManifest run_pipeline(const Config& cfg, const std::filesystem::path& out_dir,
                         std::uint64_t master_seed);

}  // namespace rflow

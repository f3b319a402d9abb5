#include "rflow/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <optional>

#include "rflow/checkpoint.hpp"
#include "rflow/errors.hpp"
#include "rflow/sha256.hpp"
#include "rflow/version.hpp"

namespace rflow {

namespace {

// Stage seed streams derived from the master seed; constants are arbitrary
// but fixed forever (changing them changes every reproduced run).
constexpr std::uint64_t kSeedFm = 1;
constexpr std::uint64_t kSeedRf1 = 2;
constexpr std::uint64_t kSeedCouplingsRf1 = 3;
constexpr std::uint64_t kSeedRf2 = 4;
constexpr std::uint64_t kSeedCouplingsRf2 = 5;
constexpr std::uint64_t kSeedDistill = 6;

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double now_seconds(const std::chrono::steady_clock::time_point& start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string stage_token(Stage stage) {
    return stage == Stage::Distilled ? "distill" : stage_name(stage);
}

std::uint64_t stage_seed_stream(Stage stage) {
    switch (stage) {
        case Stage::Fm: return kSeedFm;
        case Stage::Rf1: return kSeedRf1;
        case Stage::Rf2: return kSeedRf2;
        case Stage::Distilled: return kSeedDistill;
    }
    throw ValueError("unknown stage");
}

std::uint64_t coupling_seed_stream(Stage source_stage) {
    if (source_stage == Stage::Rf1) return kSeedCouplingsRf1;
    if (source_stage == Stage::Rf2) return kSeedCouplingsRf2;
    throw ValueError("couplings are generated from rf1 or rf2 models, not " +
                     stage_name(source_stage));
}

TrainConfig stage_config(const Config& cfg, Stage stage, std::uint64_t seed) {
    TrainConfig tc = default_train_config(stage);
    const std::string sec = "stage." + stage_token(stage);
    tc.seed = seed;
    tc.iters = static_cast<std::size_t>(cfg.get_int(sec, "iters", tc.iters));
    tc.batch = static_cast<std::size_t>(cfg.get_int(sec, "batch", tc.batch));
    tc.immiscible = cfg.get_bool(sec, "immiscible", tc.immiscible);
    tc.cond_drop = cfg.get_double(sec, "cond_drop", tc.cond_drop);
    tc.adam.lr = cfg.get_double(sec, "lr", tc.adam.lr);
    tc.adam.weight_decay = cfg.get_double(sec, "weight_decay", tc.adam.weight_decay);
    std::string sampler = cfg.get_or(sec, "time_sampler", tc.time_sampler.name());
    double mu = cfg.get_double(sec, "mu", tc.time_sampler.mu);
    double sigma = cfg.get_double(sec, "sigma", tc.time_sampler.sigma);
    double a = cfg.get_double(sec, "a", tc.time_sampler.a);
    tc.time_sampler = TimeSampler::from_name(sampler, mu, sigma, a);
    return tc;
}

AnchoredOptions anchored_config(const Config& cfg) {
    AnchoredOptions opts;
    opts.inner_iters = static_cast<std::size_t>(cfg.get_int("anchored", "inner_iters", 10));
    opts.eps = cfg.get_double("anchored", "eps", 1e-6);
    opts.lr_embed = cfg.get_double("anchored", "lr_embed", 1.0);
    std::string mode = cfg.get_or("anchored", "mode", "linesearch");
    if (mode == "linesearch") {
        opts.mode = InnerMode::LineSearch;
    } else if (mode == "plain") {
        opts.mode = InnerMode::Plain;
    } else {
        throw ConfigError("unknown anchored mode '" + mode + "'");
    }
    return opts;
}

CouplingGenConfig coupling_config(const Config& cfg) {
    CouplingGenConfig out;
    out.count = static_cast<std::size_t>(cfg.get_int("couplings", "count", out.count));
    out.steps = static_cast<std::size_t>(cfg.get_int("couplings", "steps", out.steps));
    out.omega = cfg.get_double("couplings", "omega", out.omega);
    out.anchored = cfg.get_bool("couplings", "anchored", out.anchored);
    return out;
}

namespace {

// A stage is reusable when its artifact is recorded and the bytes on disk
// still hash to the recorded value.
bool reusable_artifact(const RunManifest& manifest, const std::string& name,
                       const std::filesystem::path& path) {
    const ArtifactEntry* entry = manifest.find_artifact(name);
    if (!entry || !std::filesystem::exists(path)) return false;
    return sha256_file_hex(path) == entry->sha256;
}

}  // namespace

RunManifest open_run_manifest(const Config& cfg, const std::filesystem::path& out_dir,
                              std::uint64_t master_seed) {
    std::filesystem::create_directories(out_dir);
    const std::string snapshot = cfg.snapshot();
    const std::string run_id =
        RunManifest::derive_run_id(kToolkitVersion, master_seed, snapshot);
    const std::filesystem::path manifest_path = out_dir / "manifest.json";

    RunManifest manifest;
    if (std::filesystem::exists(manifest_path)) {
        manifest = RunManifest::load(manifest_path);
        if (manifest.run_id != run_id) {
            throw ConfigError("output directory holds run " + manifest.run_id +
                              ", which differs from this configuration (" + run_id +
                              "); use a clean directory");
        }
    } else {
        manifest.run_id = run_id;
        manifest.version = kToolkitVersion;
        manifest.master_seed = master_seed;
        manifest.config_snapshot = snapshot;
    }
    return manifest;
}

VelocityField pipeline_train_stage(const Config& cfg, const std::filesystem::path& out_dir,
                                   RunManifest& manifest, std::uint64_t master_seed, Stage stage,
                                   const VelocityField* init, const CouplingSet* couplings,
                                   const std::string& coupling_name) {
    const std::string token = stage_token(stage);
    const std::string ckpt_name = token + ".rflow";
    const std::filesystem::path ckpt_path = out_dir / ckpt_name;
    if (reusable_artifact(manifest, ckpt_name, ckpt_path)) {
        return load_checkpoint(ckpt_path);
    }
    TrainConfig tc = stage_config(cfg, stage, mix_seed(master_seed, stage_seed_stream(stage)));
    tc.coupling_file = coupling_name;
    // Stages that consume fixed couplings never touch the data distribution.
    std::optional<ToyTask> task;
    if (!couplings) task = ToyTask::create(cfg.get_or("pipeline", "task", "gauss8"));
    const auto start = std::chrono::steady_clock::now();
    TrainResult result = train_stage(tc, task ? &*task : nullptr, init, couplings);
    manifest.add_timing(token, now_seconds(start));
    save_checkpoint(result.field, ckpt_path);
    const std::filesystem::path loss_path = out_dir / (token + "_loss.csv");
    write_loss_csv(result.losses, loss_path);
    manifest.add_artifact(ckpt_name, ckpt_path);
    manifest.add_artifact(token + "_loss.csv", loss_path, /*metrics=*/true);
    manifest.stats[token + ".final_loss"] = format_double(result.stats.final_loss);
    manifest.stats[token + ".final_ema"] = format_double(result.stats.final_ema);
    if (tc.immiscible && result.stats.total_batches > 0) {
        double rate = static_cast<double>(result.stats.immiscible_wins) /
                      static_cast<double>(result.stats.total_batches);
        manifest.stats[token + ".immiscible_win_rate"] = format_double(rate);
    }
    manifest.save(out_dir / "manifest.json");
    return result.field;
}

CouplingSet pipeline_generate_couplings(const Config& cfg, const std::filesystem::path& out_dir,
                                        RunManifest& manifest, std::uint64_t master_seed,
                                        const std::string& name, const VelocityField& model) {
    const std::string file_name = name + ".rfcpl";
    const std::filesystem::path path = out_dir / file_name;
    if (reusable_artifact(manifest, file_name, path)) {
        return load_couplings(path);
    }
    const CouplingGenConfig gen = coupling_config(cfg);
    const AnchoredOptions inner = anchored_config(cfg);
    Rng rng(mix_seed(master_seed, coupling_seed_stream(model.stage)));
    const auto start = std::chrono::steady_clock::now();
    CouplingSet set =
        generate_couplings(model, gen.count, gen.steps, gen.omega, gen.anchored, rng, &inner);
    manifest.add_timing(name, now_seconds(start));
    save_couplings(set, path);
    manifest.add_artifact(file_name, path);
    manifest.save(out_dir / "manifest.json");
    return set;
}

RunManifest run_pipeline(const Config& cfg, const std::filesystem::path& out_dir,
                         std::uint64_t master_seed) {
    RunManifest manifest = open_run_manifest(cfg, out_dir, master_seed);
    const bool rf1_init_from_fm = cfg.get_bool("stage.rf1", "init_from_fm", true);

    VelocityField fm =
        pipeline_train_stage(cfg, out_dir, manifest, master_seed, Stage::Fm, nullptr, nullptr, "");
    VelocityField rf1 = pipeline_train_stage(cfg, out_dir, manifest, master_seed, Stage::Rf1,
                                             rf1_init_from_fm ? &fm : nullptr, nullptr, "");
    CouplingSet c1 =
        pipeline_generate_couplings(cfg, out_dir, manifest, master_seed, "couplings_rf1", rf1);
    VelocityField rf2 = pipeline_train_stage(cfg, out_dir, manifest, master_seed, Stage::Rf2, &rf1,
                                             &c1, "couplings_rf1.rfcpl");
    CouplingSet c2 =
        pipeline_generate_couplings(cfg, out_dir, manifest, master_seed, "couplings_rf2", rf2);
    pipeline_train_stage(cfg, out_dir, manifest, master_seed, Stage::Distilled, &rf2, &c2,
                         "couplings_rf2.rfcpl");

    manifest.save(out_dir / "manifest.json");
    return manifest;
}

}  // namespace rflow

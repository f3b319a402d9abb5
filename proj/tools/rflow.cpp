// rflow command-line front end.
//
//   rflow train <fm|rf1|rf2|distill|couplings|pipeline> --out DIR [...]
//   rflow sample       --model CKPT --out CSV [...]
//   rflow eval         --model CKPT --out DIR [...]
//   rflow straightness --model CKPT [...]
//   rflow inspect FILE
//
// Exit codes: 0 success (including --help), 1 runtime failure,
// 2 bad usage or configuration.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "rflow/anchored.hpp"
#include "rflow/checkpoint.hpp"
#include "rflow/config.hpp"
#include "rflow/coupling.hpp"
#include "rflow/errors.hpp"
#include "rflow/evalharness.hpp"
#include "rflow/manifest.hpp"
#include "rflow/pipeline.hpp"
#include "rflow/sha256.hpp"
#include "rflow/solver.hpp"
#include "rflow/toydata.hpp"
#include "rflow/training.hpp"
#include "rflow/version.hpp"

namespace {

using namespace rflow;

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
    Config cfg = path.empty() ? Config() : Config::parse_file(path);
    for (const std::string& assignment : overrides) {
        cfg.apply_override(assignment);
    }
    return cfg;
}

struct TrainArgs {
    std::string stage;
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::string init_path;
    std::string couplings_path;
    std::string model_path;
    std::string name;
    std::int64_t iters = -1;  // -1: leave the config value alone
};

void reject_option(bool given, const std::string& option, const std::string& stage) {
    if (given) {
        throw ConfigError(option + " does not apply to 'train " + stage + "'");
    }
}

int cmd_train(const TrainArgs& args) {
    Config cfg = load_config(args.config_path, args.overrides);

    // --iters is shorthand for the stage.<name>.iters config key (every
    // stage when training the pipeline).
    if (args.iters >= 0) {
        if (args.stage == "couplings") {
            throw ConfigError("--iters does not apply to 'train couplings'");
        }
        const std::string value = std::to_string(args.iters);
        if (args.stage == "pipeline") {
            for (const char* token : {"fm", "rf1", "rf2", "distill"}) {
                cfg.set(std::string("stage.") + token, "iters", value);
            }
        } else {
            cfg.set("stage." + args.stage, "iters", value);
        }
    }

    if (args.stage == "pipeline") {
        reject_option(!args.init_path.empty(), "--init", args.stage);
        reject_option(!args.couplings_path.empty(), "--couplings", args.stage);
        reject_option(!args.model_path.empty(), "--model", args.stage);
        reject_option(!args.name.empty(), "--name", args.stage);
        RunManifest manifest = run_pipeline(cfg, args.out_dir, args.seed);
        std::printf("run %s: %zu artifacts in %s\n", manifest.run_id.c_str(),
                    manifest.artifacts.size(), args.out_dir.c_str());
        std::printf("manifest hash %s\n", manifest.hash().c_str());
        return 0;
    }

    if (args.stage == "couplings") {
        reject_option(!args.init_path.empty(), "--init", args.stage);
        reject_option(!args.couplings_path.empty(), "--couplings", args.stage);
        if (args.model_path.empty()) {
            throw ConfigError("'train couplings' needs --model (an rf1/rf2 checkpoint)");
        }
        const VelocityField model = load_checkpoint(args.model_path);
        RunManifest manifest = open_run_manifest(cfg, args.out_dir, args.seed);
        const std::string name =
            args.name.empty() ? "couplings_" + stage_token(model.stage) : args.name;
        CouplingSet set =
            pipeline_generate_couplings(cfg, args.out_dir, manifest, args.seed, name, model);
        std::printf("%s.rfcpl: %zu pairs from %s model\n", name.c_str(), set.count(),
                    stage_name(model.stage).c_str());
        return 0;
    }

    Stage stage;
    if (args.stage == "distill") {
        stage = Stage::Distilled;
    } else if (args.stage == "fm" || args.stage == "rf1" || args.stage == "rf2") {
        stage = stage_from_name(args.stage);
    } else {
        throw ConfigError("unknown stage '" + args.stage +
                          "' (expected fm, rf1, rf2, distill, couplings, or pipeline)");
    }
    reject_option(!args.model_path.empty(), "--model", args.stage);
    reject_option(!args.name.empty(), "--name", args.stage);
    const bool needs_couplings = stage == Stage::Rf2 || stage == Stage::Distilled;
    if (needs_couplings && args.couplings_path.empty()) {
        throw ConfigError("'train " + args.stage + "' needs --couplings");
    }
    if (!needs_couplings && !args.couplings_path.empty()) {
        throw ConfigError("'train " + args.stage + "' samples fresh data; --couplings does not apply");
    }
    if (stage == Stage::Fm && !args.init_path.empty()) {
        throw ConfigError("'train fm' always starts from a fresh network; --init does not apply");
    }

    std::optional<VelocityField> init;
    if (!args.init_path.empty()) init = load_checkpoint(args.init_path);
    std::optional<CouplingSet> couplings;
    std::string coupling_name;
    if (!args.couplings_path.empty()) {
        couplings = load_couplings(args.couplings_path);
        coupling_name = std::filesystem::path(args.couplings_path).filename().string();
    }

    RunManifest manifest = open_run_manifest(cfg, args.out_dir, args.seed);
    pipeline_train_stage(cfg, args.out_dir, manifest, args.seed, stage,
                         init ? &*init : nullptr, couplings ? &*couplings : nullptr,
                         coupling_name);
    const std::string token = stage_token(stage);
    std::printf("%s.rflow written to %s", token.c_str(), args.out_dir.c_str());
    auto loss = manifest.stats.find(token + ".final_loss");
    if (loss != manifest.stats.end()) {
        std::printf(" (final loss %s)", loss->second.c_str());
    }
    std::printf("\n");
    return 0;
}

struct SampleArgs {
    std::string model_path;
    std::string out_csv;
    std::size_t n = 512;
    std::size_t steps = 100;
    double omega = 1.0;
    bool anchored = false;
    int label = 0;
    bool label_given = false;
    std::uint64_t seed = 0;
    std::string traj_dir;
    std::size_t traj_count = 0;
};

void write_sample_csv(const std::filesystem::path& path, const Tensor& z,
                      std::span<const int> labels) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << "label";
    const std::size_t dim = z.ndim() == 2 ? z.cols() : 0;
    for (std::size_t d = 0; d < dim; ++d) out << ",z" << d;
    out << "\n";
    char buf[32];
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out << labels[i];
        for (double v : z.row_span(i)) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << "," << buf;
        }
        out << "\n";
    }
    if (!out) throw Error("short write to '" + path.string() + "'");
}

// Re-simulate one batch row with its optimized per-step embeddings so the
// trajectory can be dumped (the batched anchored pass keeps only endpoints).
Trajectory anchored_row_trajectory(const VelocityField& field, const AnchoredResult& result,
                                   const Tensor& z0, int label, std::size_t row,
                                   double omega, std::size_t steps) {
    GuidanceSpec spec;
    spec.omega = omega;
    spec.step_null.reserve(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        auto src = result.embeddings[k].row_span(row);
        spec.step_null.push_back(
            Tensor::from_data({src.size()}, std::vector<double>(src.begin(), src.end())));
    }
    Tensor start = Tensor::from_data({1, z0.cols()},
                                     std::vector<double>(z0.row_span(row).begin(),
                                                         z0.row_span(row).end()));
    const std::array<int, 1> lab = {label};
    return euler_simulate(field, spec, start, lab, steps);
}

int cmd_sample(const SampleArgs& args) {
    const VelocityField field = load_checkpoint(args.model_path);
    std::size_t steps = args.steps;
    if (steps == 0) throw ConfigError("--steps must be at least 1");
    if (field.stage == Stage::Distilled && steps > 1) {
        std::fprintf(stderr,
                     "rflow: distilled model is a one-step sampler; using --steps 1 "
                     "instead of %zu\n",
                     steps);
        steps = 1;
    }

    Rng rng(args.seed);
    const std::size_t n = args.n;
    Tensor z0 = sample_noise(rng, n, field.dim);
    std::vector<int> labels(n);
    if (args.label_given) {
        if (args.label < kNullLabel || args.label >= static_cast<int>(field.cond_count())) {
            throw ConfigError("--label " + std::to_string(args.label) + " outside [-1, " +
                              std::to_string(field.cond_count()) + ")");
        }
        std::fill(labels.begin(), labels.end(), args.label);
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = static_cast<int>(rng.uniform_index(field.cond_count()));
        }
    }

    std::size_t traj_count = std::min(args.traj_count, n);
    if (!args.traj_dir.empty() && traj_count == 0) traj_count = std::min<std::size_t>(1, n);

    Tensor final_state;
    std::optional<AnchoredResult> anchored;
    std::optional<Trajectory> traj;
    if (n > 0) {
        if (args.anchored) {
            AnchoredOptions opts;
            opts.omega = args.omega;
            opts.steps = steps;
            anchored = anchored_generate(field, z0, labels, opts);
            final_state = anchored->final_state;
        } else {
            GuidanceSpec spec;
            spec.omega = args.omega;
            traj = euler_simulate(field, spec, z0, labels, steps);
            final_state = traj->final_state();
        }
    } else {
        final_state = Tensor::zeros({0, field.dim});
    }

    write_sample_csv(args.out_csv, final_state, labels);
    std::printf("%zu samples -> %s (T=%zu, omega=%g%s)\n", n, args.out_csv.c_str(), steps,
                args.omega, args.anchored ? ", anchored" : "");

    if (traj_count > 0) {
        const std::filesystem::path dir(args.traj_dir);
        std::filesystem::create_directories(dir);
        for (std::size_t r = 0; r < traj_count; ++r) {
            const std::filesystem::path path = dir / ("traj_" + std::to_string(r) + ".csv");
            if (anchored && args.omega != 1.0) {
                Trajectory t = anchored_row_trajectory(field, *anchored, z0, labels[r], r,
                                                       args.omega, steps);
                dump_trajectory_csv(t, 0, path);
            } else if (traj) {
                dump_trajectory_csv(*traj, r, path);
            } else {
                // anchored at omega = 1 keeps no trajectory; rebuild the pivot.
                GuidanceSpec spec;
                Trajectory t = euler_simulate(field, spec, z0, labels, steps);
                dump_trajectory_csv(t, r, path);
                traj = std::move(t);
            }
        }
        std::printf("%zu trajectories -> %s\n", traj_count, args.traj_dir.c_str());
    }
    return 0;
}

struct EvalArgs {
    std::string model_path;
    std::string out_dir;
    std::string task;
    std::size_t samples = 512;
    std::size_t reps = 10;
    std::vector<std::size_t> steps;
    std::vector<double> omegas;
    std::size_t cfg_steps = 16;
    std::size_t straight_steps = 100;
    std::size_t straight_count = 512;
    bool no_straightness = false;
    std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& args) {
    const VelocityField field = load_checkpoint(args.model_path);
    std::string task_name = args.task;
    if (task_name.empty()) {
        auto it = field.metadata.find("task");
        task_name = it != field.metadata.end() ? it->second : "gauss8";
    }
    const ToyTask task = ToyTask::create(task_name);

    std::vector<std::size_t> steps =
        args.steps.empty() ? std::vector<std::size_t>{1, 2, 4, 8, 16} : args.steps;
    if (field.stage == Stage::Distilled) {
        const bool trimmed = std::any_of(steps.begin(), steps.end(),
                                         [](std::size_t s) { return s != 1; });
        if (trimmed) {
            std::fprintf(stderr,
                         "rflow: distilled model is a one-step sampler; evaluating T=1 only\n");
        }
        steps = {1};
    }

    EvalReport report;
    report.model_id = stage_token(field.stage) + "-" + sha256_file_hex(args.model_path).substr(0, 8);
    report.seed = args.seed;
    report.samples = args.samples;
    report.repetitions = args.reps;

    Rng rng(args.seed);
    Rng few_rng = rng.split(1);
    report.rows = few_step_sweep(field, task, steps, args.samples, args.reps, few_rng);
    if (!args.omegas.empty()) {
        std::size_t cfg_steps = args.cfg_steps;
        if (field.stage == Stage::Distilled && cfg_steps > 1) cfg_steps = 1;
        Rng cfg_rng = rng.split(2);
        std::vector<SweepRow> cfg_rows =
            cfg_sweep(field, task, args.omegas, cfg_steps, args.samples, args.reps, cfg_rng);
        report.rows.insert(report.rows.end(), cfg_rows.begin(), cfg_rows.end());
    }
    if (!args.no_straightness) {
        Rng s_rng = rng.split(3);
        report.straightness =
            straightness_eval(field, args.straight_steps, args.straight_count, s_rng);
        report.has_straightness = true;
    }

    std::filesystem::create_directories(args.out_dir);
    const std::filesystem::path json_path =
        std::filesystem::path(args.out_dir) / ("eval_" + report.model_id + ".json");
    const std::filesystem::path csv_path =
        std::filesystem::path(args.out_dir) / ("eval_" + report.model_id + ".csv");
    write_eval_json(report, json_path);
    write_eval_csv(report, csv_path);

    std::printf("model %s on %s (n=%zu, reps=%zu)\n", report.model_id.c_str(), task_name.c_str(),
                args.samples, args.reps);
    for (const SweepGroup& g : group_rows(report.rows)) {
        std::printf("  T=%-3zu omega=%-4g %-8s w2 %.6g +/- %.2g   energy %.6g +/- %.2g\n",
                    g.steps, g.omega, g.anchored ? "anchored" : "plain", g.w2_mean, g.w2_stderr,
                    g.energy_mean, g.energy_stderr);
    }
    if (report.has_straightness) {
        std::printf("  straightness %.6g +/- %.2g (log %.4g, %zu trajectories)\n",
                    report.straightness.mean, report.straightness.stderr_,
                    report.straightness.log_mean, report.straightness.count);
    }
    std::printf("wrote %s\n", json_path.string().c_str());
    return 0;
}

struct StraightnessArgs {
    std::string model_path;
    std::size_t steps = 100;
    std::size_t count = 512;
    std::uint64_t seed = 0;
};

int cmd_straightness(const StraightnessArgs& args) {
    const VelocityField field = load_checkpoint(args.model_path);
    Rng rng(args.seed);
    StraightnessEstimate est = straightness_eval(field, args.steps, args.count, rng);
    std::printf("straightness %.17g +/- %.17g (log %.17g, %zu trajectories, T=%zu)\n", est.mean,
                est.stderr_, est.log_mean, est.count, args.steps);
    return 0;
}

void print_metadata(const std::map<std::string, std::string>& metadata) {
    if (metadata.empty()) return;
    std::printf("metadata:\n");
    for (const auto& [key, value] : metadata) {
        std::printf("  %s: %s\n", key.c_str(), value.c_str());
    }
}

int cmd_inspect(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    char magic[5] = {};
    in.read(magic, 5);
    if (in.gcount() != 5) throw Error("'" + path + "' is too short to identify");
    const std::string tag(magic, 5);

    std::printf("file: %s\n", path.c_str());
    std::printf("sha256: %s\n", sha256_file_hex(path).c_str());
    if (tag == "RFLOW") {
        const VelocityField field = load_checkpoint(path);
        std::printf("kind: checkpoint\n");
        std::printf("stage: %s\n", stage_name(field.stage).c_str());
        std::printf("dim: %zu\n", field.dim);
        std::printf("conditions: %zu\n", field.cond_count());
        std::printf("embed_width: %zu\n", field.embed_width());
        std::printf("time_embed_width: %zu\n", field.time_embed_width);
        std::printf("activation: %s\n", activation_name(field.net.activation).c_str());
        std::printf("widths:");
        for (std::size_t w : field.net.widths) std::printf(" %zu", w);
        std::printf("\n");
        std::printf("parameters: %zu\n",
                    field.net.parameter_count() +
                        field.cond.table.size() + field.cond.null_row.size());
        print_metadata(field.metadata);
    } else if (tag == "RFCPL") {
        const CouplingSet set = load_couplings(path);
        std::printf("kind: couplings\n");
        std::printf("dim: %zu\n", set.dim);
        std::printf("records: %zu\n", set.count());
        std::printf("conditions: %zu\n", set.cond_count);
        print_metadata(set.metadata);
    } else {
        throw Error("'" + path + "' carries no known magic (expected RFLOW or RFCPL)");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // Training allocates short-lived buffers just past glibc's default mmap
    // threshold; without this, every batch round-trips through the kernel.
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
#endif
    CLI::App app{"rectified-flow toolkit: train, sample, and evaluate 2-D toy models"};
    app.set_version_flag("--version", std::string(kToolkitName) + " " + kToolkitVersion);
    app.require_subcommand(1);

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand(
        "train", "Train a stage, generate couplings, or run the full pipeline");
    train->add_option("stage", train_args.stage,
                      "fm | rf1 | rf2 | distill | couplings | pipeline")
        ->required();
    train->add_option("--config", train_args.config_path, "configuration file")
        ->check(CLI::ExistingFile);
    train->add_option("--set", train_args.overrides,
                      "override a config value: section.key=value (repeatable)");
    train->add_option("--seed", train_args.seed, "master seed (default 0)");
    train->add_option("--out", train_args.out_dir, "output directory (artifacts + manifest.json)")
        ->required();
    train->add_option("--init", train_args.init_path,
                      "warm-start checkpoint (rf1, rf2, distill)")
        ->check(CLI::ExistingFile);
    train->add_option("--couplings", train_args.couplings_path,
                      "coupling file consumed by rf2/distill")
        ->check(CLI::ExistingFile);
    train->add_option("--model", train_args.model_path,
                      "source checkpoint for 'train couplings'")
        ->check(CLI::ExistingFile);
    train->add_option("--name", train_args.name,
                      "artifact stem for 'train couplings' (default couplings_<stage>)");
    train->add_option("--iters", train_args.iters,
                      "shorthand for --set stage.<name>.iters=N (all stages under 'pipeline')")
        ->check(CLI::NonNegativeNumber);

    SampleArgs sample_args;
    CLI::App* sample = app.add_subcommand("sample", "Generate samples from a checkpoint");
    sample->add_option("--model", sample_args.model_path, "checkpoint to sample")
        ->required()
        ->check(CLI::ExistingFile);
    sample->add_option("--out", sample_args.out_csv, "output CSV (label + coordinates)")
        ->required();
    sample->add_option("--n", sample_args.n, "sample count (default 512)");
    sample->add_option("--steps", sample_args.steps, "Euler steps (default 100)");
    sample->add_option("--omega", sample_args.omega, "guidance strength (default 1)");
    sample->add_flag("--anchored", sample_args.anchored,
                     "use anchored guidance (per-step null embeddings)");
    CLI::Option* label_opt = sample->add_option(
        "--label", sample_args.label, "fixed label, -1 = unconditional (default: uniform mix)");
    sample->add_option("--seed", sample_args.seed, "noise seed (default 0)");
    sample->add_option("--traj-dir", sample_args.traj_dir,
                       "also dump per-sample trajectory CSVs into this directory");
    sample->add_option("--traj-count", sample_args.traj_count,
                       "how many trajectories to dump (default 1 when --traj-dir is set)");

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "Few-step sweep + metrics for a checkpoint");
    eval->add_option("--model", eval_args.model_path, "checkpoint to evaluate")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--out", eval_args.out_dir, "output directory for the eval report")
        ->required();
    eval->add_option("--task", eval_args.task,
                     "reference task (default: checkpoint metadata, else gauss8)");
    eval->add_option("--samples", eval_args.samples, "samples per measurement (default 512)");
    eval->add_option("--reps", eval_args.reps, "repetitions per cell (default 10)");
    eval->add_option("--steps", eval_args.steps, "step counts, comma separated (default 1,2,4,8,16)")
        ->delimiter(',');
    eval->add_option("--omegas", eval_args.omegas,
                     "guidance sweep values, comma separated (default: none)")
        ->delimiter(',');
    eval->add_option("--cfg-steps", eval_args.cfg_steps,
                     "Euler steps for the guidance sweep (default 16)");
    eval->add_option("--straightness-steps", eval_args.straight_steps,
                     "Euler steps for the straightness estimate (default 100)");
    eval->add_option("--straightness-count", eval_args.straight_count,
                     "trajectories for the straightness estimate (default 512)");
    eval->add_flag("--no-straightness", eval_args.no_straightness,
                   "skip the straightness estimate");
    eval->add_option("--seed", eval_args.seed, "evaluation seed (default 0)");

    StraightnessArgs straight_args;
    CLI::App* straight = app.add_subcommand("straightness", "Trajectory straightness of a model");
    straight->add_option("--model", straight_args.model_path, "checkpoint to measure")
        ->required()
        ->check(CLI::ExistingFile);
    straight->add_option("--steps", straight_args.steps, "Euler steps (default 100)");
    straight->add_option("--count", straight_args.count, "trajectories (default 512)");
    straight->add_option("--seed", straight_args.seed, "noise seed (default 0)");

    std::string inspect_path;
    CLI::App* inspect = app.add_subcommand("inspect", "Describe a checkpoint or coupling file");
    inspect->add_option("file", inspect_path, "file to describe")
        ->required()
        ->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    sample_args.label_given = label_opt->count() > 0;

    try {
        if (*train) return cmd_train(train_args);
        if (*sample) return cmd_sample(sample_args);
        if (*eval) return cmd_eval(eval_args);
        if (*straight) return cmd_straightness(straight_args);
        if (*inspect) return cmd_inspect(inspect_path);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "rflow: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "rflow: %s\n", e.what());
        return 1;
    }
    return 0;
}

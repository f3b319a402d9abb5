#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rflow/rng.hpp"
#include "rflow/solver.hpp"
#include "rflow/tensor.hpp"
#include "rflow/toydata.hpp"
#include "rflow/velocityfield.hpp"

namespace rflow {

// Exact empirical 2-Wasserstein distance between equal-size sample sets:
// sqrt of the minimum mean squared pairing cost over permutations (optimal
// assignment, not a bound).
double wasserstein2(const Tensor& a, const Tensor& b);

// Energy distance 2 E||A-B|| - E||A-A'|| - E||B-B'|| with all pair means
// taken over the full index grid (V-statistic), so identical sample sets
// give exactly zero. Needs at least 2 samples per side.
double energy_distance(const Tensor& a, const Tensor& b);

// Per-label W2 averaged over labels; both sides must carry the same label
// multiset (guidance changes conditional sharpness, so matching per label
// is what the toy metric should see).
double class_conditional_w2(const Tensor& gen, std::span<const int> gen_labels, const Tensor& ref,
                            std::span<const int> ref_labels, std::size_t cond_count);

// One measurement: W2/energy of n generated samples vs n fresh reference
// samples, at a given step count / guidance setting / repetition.
struct SweepRow {
    std::size_t steps = 0;
    double omega = 1.0;
    bool anchored = false;
    std::size_t rep = 0;
    double w2 = 0.0;
    double energy = 0.0;
};

// Aggregate over repetitions of one (steps, omega, anchored) cell.
struct SweepGroup {
    std::size_t steps = 0;
    double omega = 1.0;
    bool anchored = false;
    std::size_t reps = 0;
    double w2_mean = 0.0;
    double w2_stderr = 0.0;
    double energy_mean = 0.0;
    double energy_stderr = 0.0;
};

std::vector<SweepGroup> group_rows(std::span<const SweepRow> rows);

// For each T in step_list: integrate n noise draws over T Euler steps and
// compare against reference samples with identical labels. Noise/reference
// draws are shared across the step list within a repetition (paired
// comparison), and repetitions use disjoint seed streams.
std::vector<SweepRow> few_step_sweep(const VelocityField& field, const ToyTask& task,
                                     std::span<const std::size_t> step_list, std::size_t n,
                                     std::size_t reps, Rng& rng);

// Guided generation quality per omega, both plain CFG and anchored, same
// pairing scheme as few_step_sweep. At omega = 1 the two variants coincide.
std::vector<SweepRow> cfg_sweep(const VelocityField& field, const ToyTask& task,
                                std::span<const double> omegas, std::size_t steps, std::size_t n,
                                std::size_t reps, Rng& rng);

// Mean straightness over `count` trajectories simulated in one batch.
StraightnessEstimate straightness_eval(const VelocityField& field, std::size_t steps,
                                       std::size_t count, Rng& rng);

struct EvalReport {
    std::string model_id;
    std::uint64_t seed = 0;
    std::size_t samples = 0;
    std::size_t repetitions = 0;
    std::vector<SweepRow> rows;
    bool has_straightness = false;
    StraightnessEstimate straightness;
};

void write_eval_json(const EvalReport& report, const std::filesystem::path& path);
// Tidy CSV: one row per (model, steps, omega, anchored, repetition).
void write_eval_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace rflow

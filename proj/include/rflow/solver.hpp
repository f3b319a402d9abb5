#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "rflow/tensor.hpp"
#include "rflow/velocityfield.hpp"

namespace rflow {

// Velocity callback for the solver: batch state [n, dim] at time t (step
// index provided for per-step guidance embeddings) -> batch velocity.
using StepField = std::function<Tensor(const Tensor& z, double t, std::size_t step)>;

// Record of one batched Euler integration. All rows advance together:
// states holds T+1 batch tensors, velocities the T evaluations between
// them, and states[k+1] == states[k] + dt * velocities[k] exactly as
// computed in f64.
struct Trajectory {
    std::vector<Tensor> states;
    std::vector<Tensor> velocities;
    std::vector<double> timesteps;  // t_k = k / T

    std::size_t step_count() const { return velocities.size(); }
    std::size_t batch() const { return states.empty() ? 0 : states.front().rows(); }
    const Tensor& final_state() const { return states.back(); }
};

// Euler integration z_{k+1} = z_k + dt * v(z_k, k/T) with dt = 1/T.
// Throws DivergenceError naming the step when a state goes non-finite.
Trajectory euler_simulate(const StepField& field, const Tensor& z0, std::size_t steps);

// Convenience: integrate a checkpointed field (CFG composition per spec).
Trajectory euler_simulate(const VelocityField& field, const GuidanceSpec& spec, const Tensor& z0,
                          std::span<const int> labels, std::size_t steps);

// Straightness S = (1/T) sum_k ||(z1 - z0) - v_k||^2, one value per batch
// row. Throws ContractError on an empty trajectory.
std::vector<double> straightness_rows(const Trajectory& traj);
// Mean of straightness_rows (the single-trajectory value when batch = 1).
double straightness(const Trajectory& traj);

// Batch Monte-Carlo estimate of E[S] with its standard error.
struct StraightnessEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    double log_mean = 0.0;  // log of mean
    std::size_t count = 0;
};
StraightnessEstimate straightness_estimate(std::span<const double> values);

// CSV dump of one row of a trajectory: step, t, z..., v... (final row has
// no velocity; its cells are left empty).
void dump_trajectory_csv(const Trajectory& traj, std::size_t row,
                         const std::filesystem::path& path);

}  // namespace rflow

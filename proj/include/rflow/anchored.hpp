#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rflow/tensor.hpp"
#include "rflow/velocityfield.hpp"

namespace rflow {

// Inner optimizer for the per-step null embedding.
//   LineSearch  steepest descent direction with an exact line search on the
//               linearized residual (directional derivative by forward
//               difference); lr_embed scales the accepted step. Converges in
//               a handful of iterations, the default.
//   Plain       fixed-rate gradient descent, lr_embed as the rate. Kept for
//               comparison; needs far more iterations for the same residual
//               because each guided step moves the state by only dt * v.
enum class InnerMode { LineSearch, Plain };

struct AnchoredOptions {
    double omega = 1.0;
    std::size_t steps = 100;
    std::size_t inner_iters = 10;
    double eps = 1e-6;      // early-stop threshold per dimension
    double lr_embed = 1.0;  // LineSearch: step scale; Plain: descent rate
    InnerMode mode = InnerMode::LineSearch;
};

// Output of one batched anchored generation. Residuals are per step and per
// batch row; within each step the recorded residual is the best value seen
// by the inner loop (never above the initial one).
struct AnchoredResult {
    std::vector<Tensor> embeddings;  // steps entries, each [n, E]
    Tensor final_state;              // [n, dim], guided trajectory endpoint
    Tensor pivot_final;              // [n, dim], omega = 1 pivot endpoint
    std::vector<std::vector<double>> initial_residuals;  // steps x n
    std::vector<std::vector<double>> residuals;          // steps x n
    std::vector<std::size_t> inner_iterations;           // per step

    double mean_final_residual() const;
};

// Guided generation that keeps the trajectory pinned to the omega = 1 pivot:
// (1) simulate the pivot from z0 with the plain conditional field; (2) walk
// the guided field from the same z0, optimizing a per-step null embedding so
// each guided Euler step lands on the pivot state, warm-starting every step
// from the previous optimum (step 0: the global null embedding). Model
// parameters and condition embeddings stay frozen. At omega = 1 the guided
// pass is skipped entirely: the result is the pivot itself (bitwise), zero
// residuals, zero inner iterations.
AnchoredResult anchored_generate(const VelocityField& field, const Tensor& z0,
                                 std::span<const int> labels, const AnchoredOptions& opts);

// Single-trajectory convenience overload (batch of one).
AnchoredResult anchored_generate(const VelocityField& field, const Tensor& z0, int label,
                                 std::size_t steps, double omega, std::size_t inner_iters,
                                 double eps, double lr_embed);

}  // namespace rflow

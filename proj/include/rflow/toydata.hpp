#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "rflow/rng.hpp"
#include "rflow/tensor.hpp"

namespace rflow {

// 2-D synthetic conditional data distributions. Each sample carries a
// discrete label in [0, K); the label is the "condition".
//
//   gauss8        8 modes evenly spaced on a circle of radius 4,
//                 per-mode std 0.15, label = mode index (K=8)
//   checkerboard  4x4 grid of unit cells over [-2,2]^2, the 8 cells with
//                 even (col+row) are populated, label = cell index (K=8)
//   moons2        two interleaved half moons with Gaussian noise 0.1,
//                 label = moon index (K=2)
struct ToyTask {
    std::string name;
    std::size_t dim = 2;
    std::size_t num_conditions = 0;
    std::vector<std::array<double, 2>> centers;  // mode / cell centers (empty for moons2)
    double scale = 0.0;  // gauss8: mode std; checkerboard: cell side; moons2: noise std

    static ToyTask create(const std::string& name);

    // gauss8 only: log of the analytic mixture density at a point.
    double log_density(double x, double y) const;
};

struct LabelledBatch {
    Tensor points;            // [n, dim]
    std::vector<int> labels;  // n entries in [0, K)
};

// Mixture draw: label uniform over K, point from that label's component.
LabelledBatch sample_data(const ToyTask& task, Rng& rng, std::size_t n);

// Draw n points from one fixed label's component.
Tensor sample_conditional(const ToyTask& task, Rng& rng, int label, std::size_t n);

// z0 source: i.i.d. standard normal entries. dim = 0 gives an empty tensor.
Tensor sample_noise(Rng& rng, std::size_t n, std::size_t dim);

// Learnable per-label embeddings plus a separately stored null vector used
// for unconditional evaluation and condition dropout.
struct ConditionEmbedding {
    Tensor table;     // [K, E]
    Tensor null_row;  // [E]

    static ConditionEmbedding create(std::size_t num_conditions, std::size_t width, Rng& rng);

    std::size_t num_conditions() const { return table.rows(); }
    std::size_t width() const { return table.cols(); }

    // Rows for a label batch; label -1 selects the null vector.
    Tensor lookup(std::span<const int> labels) const;
};

}  // namespace rflow

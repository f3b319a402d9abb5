#include "rflow/toydata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "rflow/errors.hpp"

namespace rflow {

namespace {

constexpr double kPi = std::numbers::pi;

void check_label(const ToyTask& task, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= task.num_conditions) {
        throw ValueError("label " + std::to_string(label) + " out of range for task " + task.name);
    }
}

// One point from component `label`. gauss8/checkerboard place points around
// the stored center; moons2 is parametric.
void draw_point(const ToyTask& task, Rng& rng, int label, double* out) {
    if (task.name == "gauss8") {
        const auto& c = task.centers[static_cast<std::size_t>(label)];
        out[0] = c[0] + task.scale * rng.normal();
        out[1] = c[1] + task.scale * rng.normal();
    } else if (task.name == "checkerboard") {
        const auto& c = task.centers[static_cast<std::size_t>(label)];
        out[0] = c[0] + task.scale * (rng.uniform() - 0.5);
        out[1] = c[1] + task.scale * (rng.uniform() - 0.5);
    } else if (task.name == "moons2") {
        double theta = kPi * rng.uniform();
        double px, py;
        if (label == 0) {
            px = std::cos(theta);
            py = std::sin(theta);
        } else {
            px = 1.0 - std::cos(theta);
            py = 0.5 - std::sin(theta);
        }
        out[0] = px + task.scale * rng.normal();
        out[1] = py + task.scale * rng.normal();
    } else {
        throw ValueError("unknown task '" + task.name + "'");
    }
}

}  // namespace

ToyTask ToyTask::create(const std::string& name) {
    ToyTask task;
    task.name = name;
    task.dim = 2;
    if (name == "gauss8") {
        task.num_conditions = 8;
        task.scale = 0.15;
        for (int k = 0; k < 8; ++k) {
            double angle = 2.0 * kPi * k / 8.0;
            task.centers.push_back({4.0 * std::cos(angle), 4.0 * std::sin(angle)});
        }
    } else if (name == "checkerboard") {
        task.num_conditions = 8;
        task.scale = 1.0;
        // Cells with even (col + row) over the 4x4 grid, row-major.
        for (int row = 0; row < 4; ++row) {
            for (int col = 0; col < 4; ++col) {
                if ((col + row) % 2 != 0) continue;
                task.centers.push_back({-2.0 + col + 0.5, -2.0 + row + 0.5});
            }
        }
    } else if (name == "moons2") {
        task.num_conditions = 2;
        task.scale = 0.1;
    } else {
        throw ValueError("unknown task '" + name + "'");
    }
    return task;
}

double ToyTask::log_density(double x, double y) const {
    if (name != "gauss8") {
        throw ValueError("log_density is only available for gauss8");
    }
    // Equal-weight isotropic Gaussian mixture; log-sum-exp over modes.
    double var = scale * scale;
    double max_term = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(centers.size());
    for (std::size_t k = 0; k < centers.size(); ++k) {
        double dx = x - centers[k][0];
        double dy = y - centers[k][1];
        terms[k] = -(dx * dx + dy * dy) / (2.0 * var);
        max_term = std::max(max_term, terms[k]);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - max_term);
    return max_term + std::log(acc) - std::log(static_cast<double>(centers.size())) -
           std::log(2.0 * kPi * var);
}

LabelledBatch sample_data(const ToyTask& task, Rng& rng, std::size_t n) {
    if (n < 1) throw ValueError("sample_data needs n >= 1");
    LabelledBatch batch;
    batch.points = Tensor::zeros({n, task.dim});
    batch.labels.resize(n);
    std::span<double> data = batch.points.data_mut();
    for (std::size_t i = 0; i < n; ++i) {
        int label = static_cast<int>(rng.uniform_index(task.num_conditions));
        batch.labels[i] = label;
        draw_point(task, rng, label, &data[i * task.dim]);
    }
    return batch;
}

Tensor sample_conditional(const ToyTask& task, Rng& rng, int label, std::size_t n) {
    check_label(task, label);
    Tensor points = Tensor::zeros({n, task.dim});
    std::span<double> data = points.data_mut();
    for (std::size_t i = 0; i < n; ++i) {
        draw_point(task, rng, label, &data[i * task.dim]);
    }
    return points;
}

Tensor sample_noise(Rng& rng, std::size_t n, std::size_t dim) {
    Tensor out = Tensor::zeros({n, dim});
    rng.fill_normal(out.data_mut());
    return out;
}

ConditionEmbedding ConditionEmbedding::create(std::size_t num_conditions, std::size_t width,
                                              Rng& rng) {
    if (num_conditions == 0 || width == 0) {
        throw ValueError("ConditionEmbedding needs positive K and width");
    }
    ConditionEmbedding emb;
    double bound = 1.0 / std::sqrt(static_cast<double>(width));
    std::vector<double> table(num_conditions * width);
    for (double& x : table) x = (2.0 * rng.uniform() - 1.0) * bound;
    std::vector<double> null_row(width);
    for (double& x : null_row) x = (2.0 * rng.uniform() - 1.0) * bound;
    emb.table = Tensor::from_data({num_conditions, width}, std::move(table));
    emb.null_row = Tensor::from_data({width}, std::move(null_row));
    emb.table.set_requires_grad(true);
    emb.null_row.set_requires_grad(true);
    return emb;
}

Tensor ConditionEmbedding::lookup(std::span<const int> labels) const {
    return gather_embed(table, null_row, labels);
}

}  // namespace rflow

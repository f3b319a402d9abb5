#include "rflow/solver.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "rflow/errors.hpp"

namespace rflow {

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

Trajectory euler_simulate(const StepField& field, const Tensor& z0, std::size_t steps) {
    if (steps < 1) throw ValueError("euler_simulate needs steps >= 1");
    if (z0.ndim() != 2) throw ShapeError("euler_simulate: z0 must be [n, dim]");
    if (!z0.all_finite()) throw ValueError("euler_simulate: non-finite initial state");
    NoGradGuard guard;
    const double dt = 1.0 / static_cast<double>(steps);
    Trajectory traj;
    traj.states.reserve(steps + 1);
    traj.velocities.reserve(steps);
    traj.timesteps.reserve(steps);
    traj.states.push_back(z0);
    for (std::size_t k = 0; k < steps; ++k) {
        // Divide rather than accumulate dt so t_k is exactly k / T.
        double t = static_cast<double>(k) / static_cast<double>(steps);
        traj.timesteps.push_back(t);
        Tensor v = field(traj.states.back(), t, k);
        if (v.shape() != z0.shape()) {
            throw ShapeError("euler_simulate: field returned a mismatched shape");
        }
        Tensor next = Tensor::zeros(z0.shape());
        std::span<double> dst = next.data_mut();
        std::span<const double> zs = traj.states.back().data();
        std::span<const double> vs = v.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = zs[i] + dt * vs[i];
        if (!next.all_finite()) throw DivergenceError("state went non-finite at step", k);
        traj.velocities.push_back(std::move(v));
        traj.states.push_back(std::move(next));
    }
    return traj;
}

Trajectory euler_simulate(const VelocityField& field, const GuidanceSpec& spec, const Tensor& z0,
                          std::span<const int> labels, std::size_t steps) {
    if (spec.has_step_embeddings() && spec.step_null.size() != steps) {
        throw ContractError("per-step null embeddings must match the step count");
    }
    std::vector<int> label_copy(labels.begin(), labels.end());
    StepField f = [&field, &spec, label_copy](const Tensor& z, double t, std::size_t step) {
        return eval_cfg_batch(field, spec, z, t, label_copy, step);
    };
    return euler_simulate(f, z0, steps);
}

std::vector<double> straightness_rows(const Trajectory& traj) {
    if (traj.velocities.empty()) throw ContractError("straightness of an empty trajectory");
    const std::size_t steps = traj.velocities.size();
    const std::size_t n = traj.states.front().rows();
    const std::size_t d = traj.states.front().cols();
    std::span<const double> z0 = traj.states.front().data();
    std::span<const double> z1 = traj.states.back().data();
    std::vector<double> out(n, 0.0);
    for (std::size_t k = 0; k < steps; ++k) {
        std::span<const double> v = traj.velocities[k].data();
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                double diff = (z1[i * d + c] - z0[i * d + c]) - v[i * d + c];
                acc += diff * diff;
            }
            out[i] += acc;
        }
    }
    for (double& s : out) s /= static_cast<double>(steps);
    return out;
}

double straightness(const Trajectory& traj) {
    std::vector<double> rows = straightness_rows(traj);
    double acc = 0.0;
    for (double s : rows) acc += s;
    return acc / static_cast<double>(rows.size());
}

StraightnessEstimate straightness_estimate(std::span<const double> values) {
    if (values.empty()) throw ValueError("straightness_estimate needs at least one value");
    StraightnessEstimate est;
    est.count = values.size();
    double acc = 0.0;
    for (double v : values) acc += v;
    est.mean = acc / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - est.mean) * (v - est.mean);
    if (values.size() > 1) {
        var /= static_cast<double>(values.size() - 1);
        est.stderr_ = std::sqrt(var / static_cast<double>(values.size()));
    }
    est.log_mean = std::log(est.mean);
    return est;
}

void dump_trajectory_csv(const Trajectory& traj, std::size_t row,
                         const std::filesystem::path& path) {
    if (traj.states.empty()) throw ContractError("cannot dump an empty trajectory");
    const std::size_t d = traj.states.front().cols();
    if (row >= traj.states.front().rows()) throw ValueError("trajectory row out of range");
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << "step,t";
    for (std::size_t c = 0; c < d; ++c) out << ",z" << c;
    for (std::size_t c = 0; c < d; ++c) out << ",v" << c;
    out << "\n";
    const std::size_t steps = traj.velocities.size();
    const double dt = steps ? 1.0 / static_cast<double>(steps) : 0.0;
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        double t = (k < steps) ? traj.timesteps[k] : steps * dt;
        out << k << "," << format_double(t);
        std::span<const double> z = traj.states[k].row_span(row);
        for (std::size_t c = 0; c < d; ++c) out << "," << format_double(z[c]);
        if (k < steps) {
            std::span<const double> v = traj.velocities[k].row_span(row);
            for (std::size_t c = 0; c < d; ++c) out << "," << format_double(v[c]);
        } else {
            for (std::size_t c = 0; c < d; ++c) out << ",";
        }
        out << "\n";
    }
    if (!out) throw Error("short write to '" + path.string() + "'");
}

}  // namespace rflow

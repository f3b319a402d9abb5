#include <algorithm>
#include <cmath>
#include <cstdio>

#include "rflow/anchored.hpp"
#include "rflow/coupling.hpp"
#include "rflow/errors.hpp"
#include "rflow/parallel.hpp"
#include "rflow/solver.hpp"
#include "rflow/toydata.hpp"
#include "rflow/velocityfield.hpp"

namespace rflow {

namespace {

// Records are generated in independent fixed-size shards so the output is
// the same no matter how many workers run them.
constexpr std::size_t kCouplingShard = 256;

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Simulate one shard's records. Called again record-by-record on divergence
// to name the exact failing record.
Tensor run_shard(const VelocityField& model, const Tensor& z0, std::span<const int> labels,
                 std::size_t steps, double omega, bool anchored,
                 const AnchoredOptions* inner) {
    if (anchored) {
        AnchoredOptions opts = inner ? *inner : AnchoredOptions{};
        opts.omega = omega;
        opts.steps = steps;
        return anchored_generate(model, z0, labels, opts).final_state;
    }
    GuidanceSpec spec;
    spec.omega = omega;
    return euler_simulate(model, spec, z0, labels, steps).final_state();
}

}  // namespace

CouplingSet generate_couplings(const VelocityField& model, std::size_t n, std::size_t steps,
                               double omega, bool anchored, Rng& rng,
                               const AnchoredOptions* inner) {
    if (steps < 1) throw ValueError("generate_couplings needs steps >= 1");
    if (n < 1) throw ValueError("generate_couplings needs n >= 1");
    if (!(omega >= 1.0)) throw ValueError("generate_couplings needs omega >= 1");
    model.validate();

    CouplingSet set;
    set.dim = model.dim;
    set.cond_count = model.cond_count();
    set.z0 = Tensor::zeros({n, model.dim});
    set.z1 = Tensor::zeros({n, model.dim});
    set.labels.assign(n, 0);
    set.metadata["stage"] = stage_name(model.stage);
    set.metadata["omega"] = format_double(omega);
    set.metadata["steps"] = std::to_string(steps);
    set.metadata["anchored"] = anchored ? "1" : "0";
    set.metadata["seed"] = std::to_string(rng.origin_seed());
    set.metadata["count"] = std::to_string(n);

    const std::size_t shard_count = (n + kCouplingShard - 1) / kCouplingShard;
    parallel_for(0, shard_count, [&](std::size_t shard_begin, std::size_t shard_end) {
        for (std::size_t s = shard_begin; s < shard_end; ++s) {
            const std::size_t base = s * kCouplingShard;
            const std::size_t m = std::min(kCouplingShard, n - base);
            Rng shard_rng = rng.split(s);
            Tensor z0 = sample_noise(shard_rng, m, model.dim);
            std::vector<int> labels(m);
            for (auto& l : labels) {
                l = static_cast<int>(shard_rng.uniform_index(model.cond_count()));
            }
            Tensor z1;
            try {
                z1 = run_shard(model, z0, labels, steps, omega, anchored, inner);
            } catch (const DivergenceError&) {
                // Replay one record at a time to report which one failed.
                for (std::size_t i = 0; i < m; ++i) {
                    Tensor row = Tensor::from_data(
                        {1, model.dim},
                        std::vector<double>(z0.row_span(i).begin(), z0.row_span(i).end()));
                    const int label[1] = {labels[i]};
                    try {
                        run_shard(model, row, label, steps, omega, anchored, inner);
                    } catch (const DivergenceError& failure) {
                        throw Error("coupling generation diverged at record " +
                                    std::to_string(base + i) + " (" + failure.what() + ")");
                    }
                }
                throw;  // divergence vanished on replay; surface the original
            }
            std::span<const double> src0 = z0.data();
            std::span<const double> src1 = z1.data();
            std::copy_n(src0.data(), m * model.dim, set.z0.data_mut().data() + base * model.dim);
            std::copy_n(src1.data(), m * model.dim, set.z1.data_mut().data() + base * model.dim);
            std::copy_n(labels.data(), m, set.labels.data() + base);
        }
    });
    return set;
}

}  // namespace rflow

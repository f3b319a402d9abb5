#include "rflow/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "rflow/errors.hpp"

namespace rflow {

namespace {

constexpr double kEmaFactor = 0.99;

Tensor mse_kernel(const VelocityField& field, const Tensor& z0, const Tensor& z1,
                  std::span<const double> t, std::span<const int> labels) {
    if (z0.shape() != z1.shape() || z0.ndim() != 2) {
        throw ShapeError("loss: z0/z1 must be matching [n, dim] batches");
    }
    std::size_t n = z0.rows();
    if (t.size() != n || labels.size() != n) {
        throw ShapeError("loss: need one t and one label per row");
    }
    Tensor zt = interpolate(z0, z1, t);
    Tensor v = field.forward(zt, t, labels);
    Tensor direction = sub(z1, z0);
    Tensor diff = sub(direction, v);
    return scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(n));
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void TrainConfig::validate() const {
    if (iters < 1) throw ConfigError("iters must be >= 1");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (cond_drop < 0.0 || cond_drop > 1.0) throw ConfigError("cond_drop must lie in [0, 1]");
    if (stage == Stage::Rf2 || stage == Stage::Distilled) {
        if (coupling_file.empty()) {
            throw ConfigError(stage_name(stage) + " training needs a coupling file");
        }
    }
    if (!(omega >= 1.0)) throw ConfigError("omega must be >= 1");
}

TrainConfig default_train_config(Stage stage) {
    TrainConfig cfg;
    cfg.stage = stage;
    switch (stage) {
        case Stage::Fm:
            cfg.iters = 20000;
            cfg.time_sampler = TimeSampler::uniform();
            cfg.immiscible = false;
            cfg.cond_drop = 0.1;
            break;
        case Stage::Rf1:
            cfg.iters = 20000;
            cfg.time_sampler = TimeSampler::logit_normal(0.0, 1.0);
            cfg.immiscible = true;
            cfg.cond_drop = 0.1;
            break;
        case Stage::Rf2:
            cfg.iters = 10000;
            cfg.time_sampler = TimeSampler::mix_exp(4.0);
            cfg.immiscible = false;  // pairs are fixed; re-assignment is opt-in
            cfg.cond_drop = 0.1;
            break;
        case Stage::Distilled:
            cfg.iters = 10000;
            cfg.time_sampler = TimeSampler::uniform();  // unused; t is pinned to 0
            cfg.immiscible = false;
            cfg.cond_drop = 0.0;
            break;
    }
    return cfg;
}

Tensor rf_loss(const VelocityField& field, const Tensor& z0, const Tensor& z1,
               std::span<const double> t, std::span<const int> labels) {
    return mse_kernel(field, z0, z1, t, labels);
}

Tensor reflow_loss(const VelocityField& field, const Tensor& z0, const Tensor& z1,
                   std::span<const double> t, std::span<const int> labels) {
    return mse_kernel(field, z0, z1, t, labels);
}

Tensor distill_loss(const VelocityField& field, const Tensor& z0, const Tensor& z1,
                    std::span<const int> labels) {
    std::vector<double> zeros(z0.rows(), 0.0);
    return mse_kernel(field, z0, z1, zeros, labels);
}

TrainResult train_stage(const TrainConfig& cfg, const ToyTask* task, const VelocityField* init,
                        const CouplingSet* couplings) {
    cfg.validate();
    const bool from_couplings = (cfg.stage == Stage::Rf2 || cfg.stage == Stage::Distilled);
    if (from_couplings) {
        if (!couplings) throw ConfigError(stage_name(cfg.stage) + " training needs couplings");
        couplings->validate();
        if (couplings->count() == 0) throw ConfigError("coupling set is empty");
    } else {
        if (!task) throw ConfigError(stage_name(cfg.stage) + " training needs a data task");
    }

    Rng master(cfg.seed);
    Rng rng_init = master.split(0);
    Rng rng_data = master.split(1);
    Rng rng_time = master.split(2);
    Rng rng_drop = master.split(3);
    Rng rng_pick = master.split(4);

    const std::size_t dim = from_couplings ? couplings->dim : task->dim;
    const std::size_t cond_count = from_couplings ? couplings->cond_count : task->num_conditions;

    TrainResult result;
    if (init) {
        if (init->dim != dim || init->cond_count() != cond_count) {
            throw ConfigError("init checkpoint does not match the training data shape");
        }
        result.field = init->clone(true);
        result.field.metadata["init"] = stage_name(init->stage);
    } else {
        result.field = VelocityField::create(dim, cond_count, cfg.embed_width,
                                             cfg.time_embed_width, cfg.hidden, cfg.activation,
                                             rng_init);
        result.field.metadata["init"] = "fresh";
    }
    result.field.stage = cfg.stage;
    result.field.metadata["seed"] = std::to_string(cfg.seed);
    result.field.metadata["iters"] = std::to_string(cfg.iters);
    result.field.metadata["time_sampler"] = cfg.time_sampler.name();
    result.field.metadata["immiscible"] = cfg.immiscible ? "1" : "0";
    if (task) result.field.metadata["task"] = task->name;

    AdamState opt(result.field.parameters(), cfg.adam);
    result.losses.reserve(cfg.iters);
    double ema = 0.0;
    const auto start = std::chrono::steady_clock::now();

    for (std::size_t it = 0; it < cfg.iters; ++it) {
        Tensor z0, z1;
        std::vector<int> labels;
        if (from_couplings) {
            const std::size_t total = couplings->count();
            z0 = Tensor::zeros({cfg.batch, dim});
            z1 = Tensor::zeros({cfg.batch, dim});
            labels.resize(cfg.batch);
            std::span<double> d0 = z0.data_mut();
            std::span<double> d1 = z1.data_mut();
            std::span<const double> s0 = couplings->z0.data();
            std::span<const double> s1 = couplings->z1.data();
            for (std::size_t i = 0; i < cfg.batch; ++i) {
                std::size_t pick = rng_pick.uniform_index(total);
                std::copy_n(&s0[pick * dim], dim, &d0[i * dim]);
                std::copy_n(&s1[pick * dim], dim, &d1[i * dim]);
                labels[i] = couplings->labels[pick];
            }
        } else {
            LabelledBatch batch = sample_data(*task, rng_data, cfg.batch);
            z1 = batch.points;
            labels = std::move(batch.labels);
            z0 = sample_noise(rng_data, cfg.batch, dim);
        }

        if (cfg.immiscible) {
            double before = identity_cost(z1, z0);
            Assignment assign = immiscible_assign(z1, z0);
            z0 = apply_assignment(z0, assign);
            result.stats.total_batches += 1;
            if (assign.total_cost < before) result.stats.immiscible_wins += 1;
        }

        if (cfg.cond_drop > 0.0) {
            for (int& label : labels) {
                if (rng_drop.uniform() < cfg.cond_drop) label = kNullLabel;
            }
        }

        Tensor loss_t;
        if (cfg.stage == Stage::Distilled) {
            loss_t = distill_loss(result.field, z0, z1, labels);
        } else {
            std::vector<double> t(cfg.batch);
            cfg.time_sampler.sample(rng_time, t);
            loss_t = mse_kernel(result.field, z0, z1, t, labels);
        }
        double loss = loss_t.value();
        if (!std::isfinite(loss)) {
            throw DivergenceError("training loss went non-finite at iteration", it);
        }

        opt.zero_grad();
        backward(loss_t);
        opt.step();

        ema = (it == 0) ? loss : kEmaFactor * ema + (1.0 - kEmaFactor) * loss;
        double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                             .count();
        result.losses.push_back({it, loss, ema, seconds});
    }

    if (!cfg.immiscible) result.stats.total_batches = cfg.iters;
    result.stats.final_loss = result.losses.back().loss;
    result.stats.final_ema = result.losses.back().ema;
    return result;
}

void write_loss_csv(std::span<const LossRow> rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << "iteration,loss,ema_loss,seconds\n";
    for (const LossRow& row : rows) {
        out << row.iteration << "," << format_double(row.loss) << "," << format_double(row.ema)
            << "," << format_double(row.seconds) << "\n";
    }
    if (!out) throw Error("short write to '" + path.string() + "'");
}

}  // namespace rflow

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rflow/adam.hpp"
#include "rflow/coupling.hpp"
#include "rflow/timesamplers.hpp"
#include "rflow/toydata.hpp"
#include "rflow/velocityfield.hpp"

namespace rflow {

// Per-stage training settings. Stage defaults (gauss8 scale) come from
// default_train_config(); config files override individual fields.
struct TrainConfig {
    Stage stage = Stage::Fm;
    std::size_t batch = 256;
    std::size_t iters = 1;
    TimeSampler time_sampler = TimeSampler::uniform();
    bool immiscible = false;
    AdamConfig adam;
    std::uint64_t seed = 0;
    double cond_drop = 0.1;       // probability a label is replaced by null
    std::string coupling_file;    // rf2/distill input pairs
    double omega = 1.5;           // coupling-generation guidance (pipeline)
    bool anchored = true;         // coupling-generation anchoring (pipeline)

    // network shape (fresh initialization only)
    std::size_t embed_width = 16;
    std::size_t time_embed_width = 16;
    std::vector<std::size_t> hidden = {128, 128, 128};
    Activation activation = Activation::Silu;

    void validate() const;
};

TrainConfig default_train_config(Stage stage);

struct LossRow {
    std::size_t iteration = 0;
    double loss = 0.0;
    double ema = 0.0;
    double seconds = 0.0;
};

struct TrainStats {
    std::size_t total_batches = 0;
    // Batches where the optimal assignment cost beat the as-drawn pairing.
    std::size_t immiscible_wins = 0;
    double final_loss = 0.0;
    double final_ema = 0.0;
};

struct TrainResult {
    VelocityField field;
    std::vector<LossRow> losses;
    TrainStats stats;
};

// Mean over the batch of ||(z1 - z0) - v(z_t, t, c)||^2 with
// z_t = (1-t) z0 + t z1 per row. Differentiable w.r.t. the field.
Tensor rf_loss(const VelocityField& field, const Tensor& z0, const Tensor& z1,
               std::span<const double> t, std::span<const int> labels);

// Identical kernel on fixed coupling pairs.
Tensor reflow_loss(const VelocityField& field, const Tensor& z0, const Tensor& z1,
                   std::span<const double> t, std::span<const int> labels);

// One-step objective: mean ||z1 - (z0 + v(z0, 0, c))||^2 (the model is
// trained and later invoked at t = 0 with an implicit full step).
Tensor distill_loss(const VelocityField& field, const Tensor& z0, const Tensor& z1,
                    std::span<const int> labels);

// One full stage. task is required for fm/rf1 (fresh data each batch) and
// unused otherwise; couplings are required for rf2/distill, which never
// sample fresh data. init, when given, seeds the parameters (cloned).
TrainResult train_stage(const TrainConfig& cfg, const ToyTask* task, const VelocityField* init,
                        const CouplingSet* couplings);

// Metrics stream: CSV rows (iteration, loss, ema_loss, seconds).
void write_loss_csv(std::span<const LossRow> rows, const std::filesystem::path& path);

}  // namespace rflow

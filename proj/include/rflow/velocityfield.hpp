#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "rflow/mlp.hpp"
#include "rflow/rng.hpp"
#include "rflow/tensor.hpp"
#include "rflow/toydata.hpp"

namespace rflow {

// Label value that selects the null (unconditional) embedding.
inline constexpr int kNullLabel = -1;

enum class Stage { Fm, Rf1, Rf2, Distilled };

Stage stage_from_name(const std::string& name);
std::string stage_name(Stage s);

// Sinusoidal features [sin(2^j pi t), cos(2^j pi t)], j = 0 .. width/2 - 1,
// one row per t. width must be even and positive.
Tensor time_embedding(std::span<const double> t, std::size_t width);

// Guidance settings for CFG evaluation. When step_null is non-empty it holds
// one optimized null embedding per solver step (anchored optimization
// output) and must match the solver's step count.
struct GuidanceSpec {
    double omega = 1.0;
    std::vector<Tensor> step_null;  // each [E]

    bool has_step_embeddings() const { return !step_null.empty(); }
};

// Conditional velocity network v(z, t, c): an MLP over
// [z | time features | condition embedding].
struct VelocityField {
    MlpNet net;
    ConditionEmbedding cond;
    std::size_t dim = 0;
    std::size_t time_embed_width = 0;
    Stage stage = Stage::Fm;
    std::map<std::string, std::string> metadata;

    static VelocityField create(std::size_t dim, std::size_t cond_count,
                                std::size_t embed_width, std::size_t time_embed_width,
                                std::vector<std::size_t> hidden, Activation act, Rng& rng);

    std::size_t cond_count() const { return cond.num_conditions(); }
    std::size_t embed_width() const { return cond.width(); }

    // Batched differentiable forward; labels use kNullLabel for the null
    // embedding. z [n, dim], one t and one label per row.
    Tensor forward(const Tensor& z, std::span<const double> t, std::span<const int> labels) const;

    // Same forward but with explicit embedding rows instead of a table
    // lookup; emb is [n, E] (per-row) or [E] (broadcast). Differentiable
    // w.r.t. emb — this is the anchored-optimization entry point.
    Tensor forward_with_embedding(const Tensor& z, std::span<const double> t,
                                  const Tensor& emb) const;

    // Net weights/biases, condition table, null embedding (in that order).
    std::vector<Tensor> parameters() const;

    // Deep copy with fresh parameter storage. trainable=false freezes the
    // copy (no gradient tracking) — used wherever a field is evaluated
    // concurrently or optimized against without touching the original.
    VelocityField clone(bool trainable) const;

    void validate() const;
};

// Single-point evaluation, differentiable: z is [1, dim] (or [dim]); returns
// [1, dim]. label kNullLabel selects the null embedding.
Tensor eval_velocity(const VelocityField& f, const Tensor& z, double t, int label);

// CFG-composed field: omega * v(z,t,c) + (1 - omega) * v(z,t,null). At
// omega = 1 this short-circuits to eval_velocity(label) so the result is
// bitwise identical to the conditional evaluation. The null input is
// spec.step_null[step_index] when present, else the global null embedding.
Tensor eval_cfg(const VelocityField& f, const GuidanceSpec& spec, const Tensor& z, double t,
                int label, std::size_t step_index);

// Batch variants used by the solver (no tape; evaluation only).
Tensor eval_batch(const VelocityField& f, const Tensor& z, double t, std::span<const int> labels);
Tensor eval_cfg_batch(const VelocityField& f, const GuidanceSpec& spec, const Tensor& z, double t,
                      std::span<const int> labels, std::size_t step_index);

}  // namespace rflow

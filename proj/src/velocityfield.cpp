#include "rflow/velocityfield.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "rflow/errors.hpp"

namespace rflow {

Stage stage_from_name(const std::string& name) {
    if (name == "fm") return Stage::Fm;
    if (name == "rf1") return Stage::Rf1;
    if (name == "rf2") return Stage::Rf2;
    if (name == "distilled") return Stage::Distilled;
    throw ValueError("unknown stage '" + name + "'");
}

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::Fm: return "fm";
        case Stage::Rf1: return "rf1";
        case Stage::Rf2: return "rf2";
        case Stage::Distilled: return "distilled";
    }
    throw ValueError("bad stage enum");
}

Tensor time_embedding(std::span<const double> t, std::size_t width) {
    if (width == 0 || width % 2 != 0) {
        throw ValueError("time embedding width must be a positive even number");
    }
    std::size_t n = t.size();
    std::size_t bands = width / 2;
    Tensor out = Tensor::zeros({n, width});
    std::span<double> data = out.data_mut();
    for (std::size_t i = 0; i < n; ++i) {
        double base = std::numbers::pi * t[i];
        double freq = 1.0;
        for (std::size_t j = 0; j < bands; ++j) {
            data[i * width + 2 * j] = std::sin(freq * base);
            data[i * width + 2 * j + 1] = std::cos(freq * base);
            freq *= 2.0;
        }
    }
    return out;
}

VelocityField VelocityField::create(std::size_t dim, std::size_t cond_count,
                                    std::size_t embed_width, std::size_t time_embed_width,
                                    std::vector<std::size_t> hidden, Activation act, Rng& rng) {
    if (dim == 0) throw ValueError("VelocityField needs dim >= 1");
    VelocityField f;
    f.dim = dim;
    f.time_embed_width = time_embed_width;
    f.cond = ConditionEmbedding::create(cond_count, embed_width, rng);
    std::vector<std::size_t> widths;
    widths.push_back(dim + time_embed_width + embed_width);
    for (std::size_t h : hidden) widths.push_back(h);
    widths.push_back(dim);
    f.net = MlpNet::create(std::move(widths), act, rng);
    f.validate();
    return f;
}

void VelocityField::validate() const {
    if (net.input_width() != dim + time_embed_width + cond.width()) {
        throw ContractError("VelocityField: net input width != dim + time width + embed width");
    }
    if (net.output_width() != dim) {
        throw ContractError("VelocityField: net output width != dim");
    }
}

Tensor VelocityField::forward(const Tensor& z, std::span<const double> t,
                              std::span<const int> labels) const {
    if (z.ndim() != 2 || z.cols() != dim) throw ShapeError("forward: z must be [n, dim]");
    if (t.size() != z.rows() || labels.size() != z.rows()) {
        throw ShapeError("forward: need one t and one label per row");
    }
    Tensor emb = cond.lookup(labels);
    Tensor time = time_embedding(t, time_embed_width);
    std::array<Tensor, 3> parts = {z, time, emb};
    return net.forward(concat_cols(parts));
}

Tensor VelocityField::forward_with_embedding(const Tensor& z, std::span<const double> t,
                                             const Tensor& emb) const {
    if (z.ndim() != 2 || z.cols() != dim) throw ShapeError("forward: z must be [n, dim]");
    if (t.size() != z.rows()) throw ShapeError("forward: need one t per row");
    Tensor rows = emb;
    if (emb.ndim() == 1) {
        // Broadcast a single embedding over the batch; gradients flow back
        // to the original vector through the tape.
        if (emb.size() != cond.width()) throw ShapeError("embedding width mismatch");
        rows = broadcast_rows(emb, z.rows());
    }
    if (rows.ndim() != 2 || rows.rows() != z.rows() || rows.cols() != cond.width()) {
        throw ShapeError("forward: embedding rows must be [n, E]");
    }
    Tensor time = time_embedding(t, time_embed_width);
    std::array<Tensor, 3> parts = {z, time, rows};
    return net.forward(concat_cols(parts));
}

std::vector<Tensor> VelocityField::parameters() const {
    std::vector<Tensor> out = net.parameters();
    out.push_back(cond.table);
    out.push_back(cond.null_row);
    return out;
}

namespace {

Tensor copy_tensor(const Tensor& t, bool trainable) {
    Tensor out = Tensor::from_data(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
    if (trainable) out.set_requires_grad(true);
    return out;
}

}  // namespace

VelocityField VelocityField::clone(bool trainable) const {
    VelocityField out;
    out.dim = dim;
    out.time_embed_width = time_embed_width;
    out.stage = stage;
    out.metadata = metadata;
    out.net.widths = net.widths;
    out.net.activation = net.activation;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        out.net.weights.push_back(copy_tensor(net.weights[l], trainable));
        out.net.biases.push_back(copy_tensor(net.biases[l], trainable));
    }
    out.cond.table = copy_tensor(cond.table, trainable);
    out.cond.null_row = copy_tensor(cond.null_row, trainable);
    return out;
}

Tensor eval_velocity(const VelocityField& f, const Tensor& z, double t, int label) {
    if (!(t >= 0.0 && t <= 1.0)) throw ValueError("eval_velocity: t must lie in [0, 1]");
    Tensor zin = z;
    if (z.ndim() == 1) {
        if (z.size() != f.dim) throw ShapeError("eval_velocity: z width mismatch");
        zin = reshape(z, {1, z.size()});
    }
    if (zin.rows() != 1) throw ShapeError("eval_velocity: expected a single row");
    if (label != kNullLabel && (label < 0 || static_cast<std::size_t>(label) >= f.cond_count())) {
        throw ValueError("eval_velocity: label out of range");
    }
    const double ts[1] = {t};
    const int ls[1] = {label};
    return f.forward(zin, ts, ls);
}

Tensor eval_cfg(const VelocityField& f, const GuidanceSpec& spec, const Tensor& z, double t,
                int label, std::size_t step_index) {
    if (spec.omega == 1.0) return eval_velocity(f, z, t, label);
    Tensor zin = z;
    if (z.ndim() == 1) zin = reshape(z, {1, z.size()});
    const double ts[1] = {t};
    Tensor v_cond = eval_velocity(f, zin, t, label);
    Tensor v_null;
    if (spec.has_step_embeddings()) {
        if (step_index >= spec.step_null.size()) {
            throw ContractError("eval_cfg: no null embedding for step " +
                                std::to_string(step_index));
        }
        v_null = f.forward_with_embedding(zin, ts, spec.step_null[step_index]);
    } else {
        const int null_label[1] = {kNullLabel};
        v_null = f.forward(zin, ts, null_label);
    }
    return add(scale(v_cond, spec.omega), scale(v_null, 1.0 - spec.omega));
}

Tensor eval_batch(const VelocityField& f, const Tensor& z, double t, std::span<const int> labels) {
    NoGradGuard guard;
    std::vector<double> ts(z.rows(), t);
    return f.forward(z, ts, labels);
}

Tensor eval_cfg_batch(const VelocityField& f, const GuidanceSpec& spec, const Tensor& z, double t,
                      std::span<const int> labels, std::size_t step_index) {
    NoGradGuard guard;
    if (spec.omega == 1.0) return eval_batch(f, z, t, labels);
    std::vector<double> ts(z.rows(), t);
    Tensor v_cond = f.forward(z, ts, labels);
    Tensor v_null;
    if (spec.has_step_embeddings()) {
        if (step_index >= spec.step_null.size()) {
            throw ContractError("eval_cfg: no null embedding for step " +
                                std::to_string(step_index));
        }
        v_null = f.forward_with_embedding(z, ts, spec.step_null[step_index]);
    } else {
        std::vector<int> nulls(z.rows(), kNullLabel);
        v_null = f.forward(z, ts, nulls);
    }
    return add(scale(v_cond, spec.omega), scale(v_null, 1.0 - spec.omega));
}

}  // namespace rflow

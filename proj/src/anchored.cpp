#include "rflow/anchored.hpp"

#include <algorithm>
#include <cmath>

#include "rflow/errors.hpp"
#include "rflow/solver.hpp"

namespace rflow {

namespace {

// Residual matrix R = base - coef * v(emb) and per-row squared norms, with
// base = z* - z - dt*omega*v_cond precomputed (constant within a step).
struct ResidualEval {
    Tensor matrix;              // [n, dim]
    std::vector<double> rows;   // ||R_i||^2
};

ResidualEval eval_residual(const VelocityField& frozen, const Tensor& z,
                           std::span<const double> ts, const Tensor& emb, const Tensor& base,
                           double coef) {
    NoGradGuard guard;
    Tensor v = frozen.forward_with_embedding(z, ts, emb);
    std::size_t n = z.rows(), d = z.cols();
    ResidualEval out;
    out.matrix = Tensor::zeros({n, d});
    out.rows.assign(n, 0.0);
    std::span<double> r = out.matrix.data_mut();
    std::span<const double> b = base.data();
    std::span<const double> vv = v.data();
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            double val = b[i * d + c] - coef * vv[i * d + c];
            r[i * d + c] = val;
            acc += val * val;
        }
        out.rows[i] = acc;
    }
    return out;
}

// Gradient of sum_i ||R_i||^2 w.r.t. the embedding rows, evaluated through
// the tape. Returns the per-row gradients as a plain buffer.
std::vector<double> embedding_gradient(const VelocityField& frozen, const Tensor& z,
                                       std::span<const double> ts, const Tensor& emb_point,
                                       const Tensor& base, double coef) {
    Tensor emb = Tensor::from_data(emb_point.shape(),
                                   std::vector<double>(emb_point.data().begin(),
                                                       emb_point.data().end()));
    emb.set_requires_grad(true);
    Tensor v = frozen.forward_with_embedding(z, ts, emb);
    Tensor r = sub(base, scale(v, coef));
    Tensor loss = sum(mul(r, r));
    backward(loss);
    std::span<const double> g = emb.grad();
    return std::vector<double>(g.begin(), g.end());
}

Tensor copy_data(const Tensor& t) {
    return Tensor::from_data(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
}

}  // namespace

double AnchoredResult::mean_final_residual() const {
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& step : residuals) {
        for (double r : step) acc += r;
        count += step.size();
    }
    return count ? acc / static_cast<double>(count) : 0.0;
}

AnchoredResult anchored_generate(const VelocityField& field, const Tensor& z0,
                                 std::span<const int> labels, const AnchoredOptions& opts) {
    if (!(opts.omega >= 1.0)) throw ValueError("anchored_generate needs omega >= 1");
    if (opts.steps < 1) throw ValueError("anchored_generate needs steps >= 1");
    if (z0.ndim() != 2 || z0.cols() != field.dim) {
        throw ShapeError("anchored_generate: z0 must be [n, dim]");
    }
    if (labels.size() != z0.rows()) throw ShapeError("anchored_generate: one label per row");

    const std::size_t n = z0.rows();
    const std::size_t d = field.dim;
    const std::size_t e = field.embed_width();
    const double dt = 1.0 / static_cast<double>(opts.steps);
    const double eps = opts.eps * static_cast<double>(d);

    VelocityField frozen = field.clone(false);
    GuidanceSpec pivot_spec;  // omega = 1
    Trajectory pivot = euler_simulate(frozen, pivot_spec, z0, labels, opts.steps);

    AnchoredResult res;
    res.pivot_final = pivot.final_state();
    res.embeddings.reserve(opts.steps);
    res.initial_residuals.reserve(opts.steps);
    res.residuals.reserve(opts.steps);
    res.inner_iterations.reserve(opts.steps);

    if (opts.omega == 1.0) {
        // Eq. 11 collapses: the guided trajectory is the pivot itself.
        for (std::size_t k = 0; k < opts.steps; ++k) {
            res.embeddings.push_back(broadcast_rows(copy_data(frozen.cond.null_row), n));
            res.initial_residuals.emplace_back(n, 0.0);
            res.residuals.emplace_back(n, 0.0);
            res.inner_iterations.push_back(0);
        }
        res.final_state = pivot.final_state();
        return res;
    }

    const double coef = dt * (1.0 - opts.omega);  // residual = base - coef * v_null
    Tensor z = copy_data(z0);
    Tensor emb_best = broadcast_rows(copy_data(frozen.cond.null_row), n);

    for (std::size_t k = 0; k < opts.steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        std::vector<double> ts(n, t);
        const Tensor& target = pivot.states[k + 1];
        Tensor v_cond = eval_batch(frozen, z, t, labels);

        // base = z* - z - dt*omega*v_cond, fixed for the whole inner loop.
        Tensor base = Tensor::zeros({n, d});
        {
            std::span<double> bb = base.data_mut();
            std::span<const double> tg = target.data();
            std::span<const double> zz = z.data();
            std::span<const double> vc = v_cond.data();
            for (std::size_t i = 0; i < bb.size(); ++i) {
                bb[i] = tg[i] - zz[i] - dt * opts.omega * vc[i];
            }
        }

        ResidualEval best = eval_residual(frozen, z, ts, emb_best, base, coef);
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(best.rows[i])) {
                throw DivergenceError("anchored residual went non-finite at step", k);
            }
        }
        res.initial_residuals.push_back(best.rows);

        std::vector<double> damp(n, 1.0);
        std::vector<bool> converged(n);
        auto all_converged = [&] {
            bool all = true;
            for (std::size_t i = 0; i < n; ++i) {
                converged[i] = best.rows[i] < eps;
                all = all && converged[i];
            }
            return all;
        };

        // Plain mode walks its own iterate; best-so-far is kept separately.
        Tensor emb_cur = copy_data(emb_best);
        std::size_t iters = 0;
        bool done = all_converged();
        while (!done && iters < opts.inner_iters) {
            ++iters;
            const Tensor& point = (opts.mode == InnerMode::Plain) ? emb_cur : emb_best;
            std::vector<double> grad = embedding_gradient(frozen, z, ts, point, base, coef);

            if (opts.mode == InnerMode::Plain) {
                std::span<double> cur = emb_cur.data_mut();
                for (std::size_t i = 0; i < n; ++i) {
                    if (converged[i]) continue;
                    for (std::size_t c = 0; c < e; ++c) {
                        cur[i * e + c] -= opts.lr_embed * grad[i * e + c];
                    }
                }
                ResidualEval trial = eval_residual(frozen, z, ts, emb_cur, base, coef);
                std::span<double> bestd = emb_best.data_mut();
                std::span<const double> curd = emb_cur.data();
                std::span<double> bm = best.matrix.data_mut();
                std::span<const double> tm = trial.matrix.data();
                for (std::size_t i = 0; i < n; ++i) {
                    if (converged[i] || !(trial.rows[i] < best.rows[i]) ||
                        !std::isfinite(trial.rows[i])) {
                        continue;
                    }
                    best.rows[i] = trial.rows[i];
                    std::copy_n(&curd[i * e], e, &bestd[i * e]);
                    std::copy_n(&tm[i * d], d, &bm[i * d]);
                }
            } else {
                // Forward-difference directional derivative along d = -grad,
                // then the exact minimizer of ||R + alpha * u||^2.
                std::vector<double> h(n, 0.0);
                Tensor emb_h = copy_data(emb_best);
                std::span<double> eh = emb_h.data_mut();
                for (std::size_t i = 0; i < n; ++i) {
                    if (converged[i]) continue;
                    double norm = 0.0;
                    for (std::size_t c = 0; c < e; ++c) {
                        norm += grad[i * e + c] * grad[i * e + c];
                    }
                    norm = std::sqrt(norm);
                    if (norm == 0.0) continue;
                    h[i] = 1e-6 / std::max(1.0, norm);
                    for (std::size_t c = 0; c < e; ++c) {
                        eh[i * e + c] -= h[i] * grad[i * e + c];
                    }
                }
                ResidualEval probe = eval_residual(frozen, z, ts, emb_h, base, coef);

                Tensor cand = copy_data(emb_best);
                std::span<double> cd = cand.data_mut();
                std::span<const double> bm = best.matrix.data();
                std::span<const double> pm = probe.matrix.data();
                std::vector<double> alpha(n, 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    if (converged[i] || h[i] == 0.0) continue;
                    double ru = 0.0, uu = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        double u = (pm[i * d + c] - bm[i * d + c]) / h[i];
                        ru += bm[i * d + c] * u;
                        uu += u * u;
                    }
                    if (!(uu > 0.0) || !std::isfinite(uu) || !std::isfinite(ru)) continue;
                    alpha[i] = -ru / uu;
                    double scale_i = damp[i] * opts.lr_embed * alpha[i];
                    for (std::size_t c = 0; c < e; ++c) {
                        cd[i * e + c] -= scale_i * grad[i * e + c];
                    }
                }
                ResidualEval trial = eval_residual(frozen, z, ts, cand, base, coef);
                std::span<double> bestd = emb_best.data_mut();
                std::span<double> bmm = best.matrix.data_mut();
                std::span<const double> tm = trial.matrix.data();
                for (std::size_t i = 0; i < n; ++i) {
                    if (converged[i]) continue;
                    if (std::isfinite(trial.rows[i]) && trial.rows[i] < best.rows[i]) {
                        best.rows[i] = trial.rows[i];
                        std::copy_n(&cd[i * e], e, &bestd[i * e]);
                        std::copy_n(&tm[i * d], d, &bmm[i * d]);
                        damp[i] = 1.0;
                    } else {
                        damp[i] *= 0.5;
                    }
                }
            }
            done = all_converged();
        }

        res.residuals.push_back(best.rows);
        res.inner_iterations.push_back(iters);
        res.embeddings.push_back(copy_data(emb_best));

        // Advance the guided state with the optimized embeddings.
        {
            NoGradGuard guard;
            Tensor v_null = frozen.forward_with_embedding(z, ts, emb_best);
            Tensor next = Tensor::zeros({n, d});
            std::span<double> nx = next.data_mut();
            std::span<const double> zz = z.data();
            std::span<const double> vc = v_cond.data();
            std::span<const double> vn = v_null.data();
            for (std::size_t i = 0; i < nx.size(); ++i) {
                nx[i] = zz[i] + dt * (opts.omega * vc[i] + (1.0 - opts.omega) * vn[i]);
            }
            if (!next.all_finite()) throw DivergenceError("guided state went non-finite at step", k);
            z = std::move(next);
        }
    }

    res.final_state = z;
    return res;
}

AnchoredResult anchored_generate(const VelocityField& field, const Tensor& z0, int label,
                                 std::size_t steps, double omega, std::size_t inner_iters,
                                 double eps, double lr_embed) {
    Tensor zin = z0;
    if (z0.ndim() == 1) zin = reshape(z0, {1, z0.size()});
    AnchoredOptions opts;
    opts.omega = omega;
    opts.steps = steps;
    opts.inner_iters = inner_iters;
    opts.eps = eps;
    opts.lr_embed = lr_embed;
    const int labels[1] = {label};
    return anchored_generate(field, zin, labels, opts);
}

}  // namespace rflow

#include "rflow/adam.hpp"

#include <cmath>

#include "rflow/errors.hpp"

namespace rflow {

AdamState::AdamState(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.lr < 0.0) throw ValueError("Adam lr must be >= 0");
    if (cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0) throw ValueError("Adam beta1 must be in [0,1)");
    if (cfg_.beta2 < 0.0 || cfg_.beta2 >= 1.0) throw ValueError("Adam beta2 must be in [0,1)");
    if (cfg_.eps <= 0.0) throw ValueError("Adam eps must be positive");
    if (cfg_.weight_decay < 0.0) throw ValueError("Adam weight_decay must be >= 0");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        if (!p.requires_grad()) throw ContractError("AdamState expects requires_grad parameters");
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void AdamState::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        std::span<double> data = p.data_mut();
        // A parameter that never entered the graph this step has no gradient;
        // treat it as zero (moments still decay, decoupled decay still applies).
        std::span<const double> g = p.has_grad() ? p.grad() : std::span<const double>{};
        if (!g.empty() && g.size() != data.size()) {
            throw ShapeError("Adam gradient size mismatch");
        }
        std::vector<double>& m = m_[i];
        std::vector<double>& v = v_[i];
        for (std::size_t k = 0; k < data.size(); ++k) {
            double gk = g.empty() ? 0.0 : g[k];
            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
            double mhat = m[k] / bc1;
            double vhat = v[k] / bc2;
            // Both terms read the pre-update value (decoupled decay).
            data[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps) +
                       cfg_.lr * cfg_.weight_decay * data[k];
        }
    }
}

void AdamState::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

}  // namespace rflow

#pragma once

#include <cstdint>
#include <vector>

#include "rflow/tensor.hpp"

namespace rflow {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;  // decoupled (AdamW style)
};

// Per-parameter first/second moment buffers plus a shared step counter.
class AdamState {
public:
    AdamState(std::vector<Tensor> params, AdamConfig cfg);

    // One update from the gradients currently stored on the parameters.
    // Parameters without an accumulated gradient are treated as grad = 0
    // (their moments still decay). Decoupled weight decay:
    //   p -= lr * mhat / (sqrt(vhat) + eps) + lr * wd * p
    void step();

    void zero_grad();

    const AdamConfig& config() const { return cfg_; }
    AdamConfig& config() { return cfg_; }
    std::uint64_t step_count() const { return t_; }
    const std::vector<Tensor>& params() const { return params_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    AdamConfig cfg_;
    std::uint64_t t_ = 0;
};

}  // namespace rflow

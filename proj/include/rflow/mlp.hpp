#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rflow/rng.hpp"
#include "rflow/tensor.hpp"

namespace rflow {

enum class Activation { Silu, Relu, Tanh };

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation a);

// Fully connected network: linear layers with the chosen nonlinearity on
// every hidden layer and a linear output. widths = [in, hidden..., out].
struct MlpNet {
    std::vector<std::size_t> widths;
    Activation activation = Activation::Silu;
    std::vector<Tensor> weights;  // per layer, [in_i, out_i] row-major
    std::vector<Tensor> biases;   // per layer, [out_i]

    // Uniform fan-in init: W, b ~ U(-1/sqrt(in_i), 1/sqrt(in_i)).
    static MlpNet create(std::vector<std::size_t> widths, Activation act, Rng& rng);

    std::size_t input_width() const { return widths.front(); }
    std::size_t output_width() const { return widths.back(); }
    std::size_t layer_count() const { return weights.size(); }
    std::size_t parameter_count() const;

    // input [n, input_width] -> [n, output_width]; tape recorded when any
    // participating tensor requires grad.
    Tensor forward(const Tensor& input) const;

    std::vector<Tensor> parameters() const;
};

}  // namespace rflow

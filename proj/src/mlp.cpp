#include "rflow/mlp.hpp"

#include <cmath>

#include "rflow/errors.hpp"

namespace rflow {

Activation activation_from_name(const std::string& name) {
    if (name == "silu") return Activation::Silu;
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    throw ValueError("unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Silu: return "silu";
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
    }
    throw ValueError("bad activation enum");
}

MlpNet MlpNet::create(std::vector<std::size_t> widths, Activation act, Rng& rng) {
    if (widths.size() < 2) throw ValueError("MlpNet needs at least [in, out] widths");
    for (std::size_t w : widths) {
        if (w == 0) throw ValueError("MlpNet widths must be positive");
    }
    MlpNet net;
    net.widths = std::move(widths);
    net.activation = act;
    for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
        std::size_t in = net.widths[l];
        std::size_t out = net.widths[l + 1];
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::vector<double> w(in * out);
        for (double& x : w) x = (2.0 * rng.uniform() - 1.0) * bound;
        std::vector<double> b(out);
        for (double& x : b) x = (2.0 * rng.uniform() - 1.0) * bound;
        Tensor wt = Tensor::from_data({in, out}, std::move(w));
        Tensor bt = Tensor::from_data({out}, std::move(b));
        wt.set_requires_grad(true);
        bt.set_requires_grad(true);
        net.weights.push_back(wt);
        net.biases.push_back(bt);
    }
    return net;
}

std::size_t MlpNet::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor& t : weights) n += t.size();
    for (const Tensor& t : biases) n += t.size();
    return n;
}

Tensor MlpNet::forward(const Tensor& input) const {
    if (input.ndim() != 2 || input.cols() != input_width()) {
        throw ShapeError("MlpNet::forward expects [n, " + std::to_string(input_width()) + "] input");
    }
    Tensor h = input;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        h = add_bias(matmul(h, weights[l]), biases[l]);
        bool last = (l + 1 == weights.size());
        if (!last) {
            switch (activation) {
                case Activation::Silu: h = silu(h); break;
                case Activation::Relu: h = relu(h); break;
                case Activation::Tanh: h = tanh_op(h); break;
            }
        }
    }
    return h;
}

std::vector<Tensor> MlpNet::parameters() const {
    std::vector<Tensor> out;
    out.reserve(weights.size() * 2);
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back(weights[l]);
        out.push_back(biases[l]);
    }
    return out;
}

}  // namespace rflow

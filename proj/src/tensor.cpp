#include "rflow/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace rflow {

namespace {

thread_local bool g_grad_mode = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap map_of(const TensorImpl& t) {
    return ConstMap(t.data.data(), static_cast<Eigen::Index>(t.shape[0]),
                    static_cast<Eigen::Index>(t.shape[1]));
}

MutMap map_mut(AlignedVec& buf, std::size_t rows, std::size_t cols) {
    return MutMap(buf.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

void require_matrix(const Tensor& t, const char* op) {
    if (t.ndim() != 2) throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
}

}  // namespace

bool grad_mode_enabled() { return g_grad_mode; }

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

// --- construction ------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    return from_data(shape, std::vector<double>(shape_product(shape), 0.0), requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    return from_data(shape, std::vector<double>(shape_product(shape), value), requires_grad);
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> data,
                         bool requires_grad) {
    if (shape_product(shape) != data.size())
        throw ShapeError("from_data: " + std::to_string(data.size()) + " values for shape " +
                         shape_str(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data.assign(data.begin(), data.end());
    impl->requires_grad = requires_grad;
    impl->needs_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::row_vector(std::vector<double> data, bool requires_grad) {
    const std::size_t n = data.size();
    return from_data({n}, std::move(data), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                      bool requires_grad) {
    return from_data({rows, cols}, std::move(data), requires_grad);
}

std::size_t Tensor::rows() const {
    require_matrix(*this, "rows");
    return impl_->shape[0];
}

std::size_t Tensor::cols() const {
    require_matrix(*this, "cols");
    return impl_->shape[1];
}

std::span<const double> Tensor::row_span(std::size_t r) const {
    require_matrix(*this, "row_span");
    const std::size_t c = impl_->shape[1];
    return {impl_->data.data() + r * c, c};
}

std::span<double> Tensor::row_span_mut(std::size_t r) {
    require_matrix(*this, "row_span");
    const std::size_t c = impl_->shape[1];
    return {impl_->data.data() + r * c, c};
}

double Tensor::value() const {
    if (!is_scalar()) throw ContractError("value(): tensor is not scalar, shape " + shape_str(shape()));
    return impl_->data[0];
}

void Tensor::set_requires_grad(bool on) {
    if (on && impl_->backprop) throw ContractError("requires_grad can only be set on leaf tensors");
    impl_->requires_grad = on;
    impl_->needs_grad = on;
}

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw ContractError("grad(): no gradient populated");
    return impl_->grad;
}

std::span<double> Tensor::grad_mut() { return impl_->ensure_grad(); }

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : impl_->data)
        if (!std::isfinite(v)) return false;
    return true;
}

bool Tensor::same_bits(const Tensor& other) const {
    if (shape() != other.shape()) return false;
    return std::memcmp(impl_->data.data(), other.impl_->data.data(),
                       impl_->data.size() * sizeof(double)) == 0;
}

// --- op plumbing --------------------------------------------------------------

Tensor make_op_result(std::vector<std::size_t> shape, AlignedVec data,
                      std::vector<std::shared_ptr<TensorImpl>> parents,
                      std::function<void(TensorImpl&)> backprop) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    bool any = false;
    if (g_grad_mode) {
        for (const auto& p : parents)
            if (p && p->needs_grad) any = true;
    }
    if (any) {
        impl->needs_grad = true;
        impl->parents = std::move(parents);
        impl->backprop = std::move(backprop);
    }
    return Tensor(std::move(impl));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// --- ops ----------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    AlignedVec out(n * m);
    if (n == 1) {
        // Fixed-order scalar loop. Eigen's vector-matrix kernel splits its
        // reduction by operand alignment, so the same single-row product
        // can differ in the last ulp between calls; the batched GEMM packs
        // into aligned scratch and does not have this problem.
        const double* av = a.impl()->data.data();
        const double* bv = b.impl()->data.data();
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double s = av[kk];
            const double* brow = bv + kk * m;
            for (std::size_t j = 0; j < m; ++j) out[j] += s * brow[j];
        }
    } else {
        map_mut(out, n, m).noalias() = map_of(*a.impl()) * map_of(*b.impl());
    }

    auto ai = a.impl();
    auto bi = b.impl();
    return make_op_result(
        {n, m}, std::move(out), {ai, bi},
        [ai, bi, n, k, m](TensorImpl& self) {
            ConstMap dy(self.grad.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
            if (ai->needs_grad) {
                auto& g = ai->ensure_grad();
                map_mut(g, n, k).noalias() += dy * map_of(*bi).transpose();
            }
            if (bi->needs_grad) {
                auto& g = bi->ensure_grad();
                map_mut(g, k, m).noalias() += map_of(*ai).transpose() * dy;
            }
        });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_matrix(x, "add_bias");
    if (bias.ndim() != 1 || bias.size() != x.cols())
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " for input " +
                         shape_str(x.shape()));
    const std::size_t n = x.rows(), m = x.cols();
    AlignedVec out(x.data().begin(), x.data().end());
    const auto& bv = bias.impl()->data;
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) row[j] += bv[j];
    }
    auto xi = x.impl();
    auto bi = bias.impl();
    return make_op_result(
        {n, m}, std::move(out), {xi, bi},
        [xi, bi, n, m](TensorImpl& self) {
            if (xi->needs_grad) {
                auto& g = xi->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
            if (bi->needs_grad) {
                auto& g = bi->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) {
                    const double* row = self.grad.data() + i * m;
                    for (std::size_t j = 0; j < m; ++j) g[j] += row[j];
                }
            }
        });
}

namespace {

// fwd is a template parameter (not a function pointer) so the forward loop
// inlines and vectorizes.
template <typename Fwd>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd,
                          void (*bwd)(const TensorImpl&, TensorImpl&, TensorImpl&)) {
    require_same_shape(a, b, name);
    AlignedVec out(a.size());
    const auto& av = a.impl()->data;
    const auto& bv = b.impl()->data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
    auto ai = a.impl();
    auto bi = b.impl();
    return make_op_result(a.shape(), std::move(out), {ai, bi},
                          [ai, bi, bwd](TensorImpl& self) { bwd(self, *ai, *bi); });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        a, b, "add", [](double x, double y) { return x + y; },
        [](const TensorImpl& self, TensorImpl& ai, TensorImpl& bi) {
            if (ai.needs_grad) {
                auto& g = ai.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
            if (bi.needs_grad) {
                auto& g = bi.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](const TensorImpl& self, TensorImpl& ai, TensorImpl& bi) {
            if (ai.needs_grad) {
                auto& g = ai.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
            if (bi.needs_grad) {
                auto& g = bi.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
            }
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](const TensorImpl& self, TensorImpl& ai, TensorImpl& bi) {
            if (ai.needs_grad) {
                auto& g = ai.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bi.data[i];
            }
            if (bi.needs_grad) {
                auto& g = bi.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * ai.data[i];
            }
        });
}

Tensor scale(const Tensor& a, double c) {
    AlignedVec out(a.size());
    const auto& av = a.impl()->data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    auto ai = a.impl();
    return make_op_result(a.shape(), std::move(out), {ai}, [ai, c](TensorImpl& self) {
        if (!ai->needs_grad) return;
        auto& g = ai->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * c;
    });
}

Tensor silu(const Tensor& x) {
    // x / (1 + exp(-x)) is IEEE-safe at both tails (exp overflow gives inf,
    // x/inf gives the correct 0 limit) and vectorizes through Eigen.
    using Arr = Eigen::Map<Eigen::Array<double, Eigen::Dynamic, 1>>;
    using ConstArr = Eigen::Map<const Eigen::Array<double, Eigen::Dynamic, 1>>;
    AlignedVec out(x.size());
    const auto& xv = x.impl()->data;
    const auto len = static_cast<Eigen::Index>(out.size());
    ConstArr xm(xv.data(), len);
    Arr(out.data(), len) = xm / (1.0 + (-xm).exp());
    auto xi = x.impl();
    return make_op_result(x.shape(), std::move(out), {xi}, [xi, len](TensorImpl& self) {
        if (!xi->needs_grad) return;
        auto& g = xi->ensure_grad();
        ConstArr xm(xi->data.data(), len);
        ConstArr dy(self.grad.data(), len);
        auto s = 1.0 / (1.0 + (-xm).exp());
        Arr(g.data(), len) += dy * s * (1.0 + xm * (1.0 - s));
    });
}

Tensor relu(const Tensor& x) {
    AlignedVec out(x.size());
    const auto& xv = x.impl()->data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    auto xi = x.impl();
    return make_op_result(x.shape(), std::move(out), {xi}, [xi](TensorImpl& self) {
        if (!xi->needs_grad) return;
        auto& g = xi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xi->data[i] > 0.0) g[i] += self.grad[i];
    });
}

Tensor tanh_op(const Tensor& x) {
    AlignedVec out(x.size());
    const auto& xv = x.impl()->data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
    auto xi = x.impl();
    return make_op_result(x.shape(), std::move(out), {xi}, [xi](TensorImpl& self) {
        if (!xi->needs_grad) return;
        auto& g = xi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double th = std::tanh(xi->data[i]);
            g[i] += self.grad[i] * (1.0 - th * th);
        }
    });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const std::size_t n = parts[0].rows();
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        require_matrix(p, "concat_cols");
        if (p.rows() != n) throw ShapeError("concat_cols: row counts differ");
        total += p.cols();
    }
    AlignedVec out(n * total);
    std::size_t col_off = 0;
    for (const Tensor& p : parts) {
        const std::size_t m = p.cols();
        for (std::size_t i = 0; i < n; ++i)
            std::memcpy(out.data() + i * total + col_off, p.impl()->data.data() + i * m,
                        m * sizeof(double));
        col_off += m;
    }
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::vector<std::size_t> widths;
    for (const Tensor& p : parts) {
        parents.push_back(p.impl());
        widths.push_back(p.cols());
    }
    return make_op_result({n, total}, std::move(out), parents,
                          [parents, widths, n, total](TensorImpl& self) {
                              std::size_t off = 0;
                              for (std::size_t pi = 0; pi < parents.size(); ++pi) {
                                  const std::size_t m = widths[pi];
                                  if (parents[pi]->needs_grad) {
                                      auto& g = parents[pi]->ensure_grad();
                                      for (std::size_t i = 0; i < n; ++i) {
                                          const double* src = self.grad.data() + i * total + off;
                                          double* dst = g.data() + i * m;
                                          for (std::size_t j = 0; j < m; ++j) dst[j] += src[j];
                                      }
                                  }
                                  off += m;
                              }
                          });
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.impl()->data) acc += v;
    auto xi = x.impl();
    return make_op_result({1}, {acc}, {xi}, [xi](TensorImpl& self) {
        if (!xi->needs_grad) return;
        auto& g = xi->ensure_grad();
        const double dy = self.grad[0];
        for (double& v : g) v += dy;
    });
}

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
    if (shape_product(shape) != x.size()) {
        throw ShapeError("reshape: element count mismatch " + shape_str(x.shape()) + " -> " +
                         shape_str(shape));
    }
    auto xi = x.impl();
    AlignedVec out = xi->data;
    return make_op_result(std::move(shape), std::move(out), {xi}, [xi](TensorImpl& self) {
        if (!xi->needs_grad) return;
        auto& g = xi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor broadcast_rows(const Tensor& row, std::size_t n) {
    std::size_t d = row.size();
    if (row.ndim() > 2 || (row.ndim() == 2 && row.rows() != 1)) {
        throw ShapeError("broadcast_rows: expected a single row, got " + shape_str(row.shape()));
    }
    auto ri = row.impl();
    AlignedVec out(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(ri->data.data(), d, out.data() + i * d);
    }
    return make_op_result({n, d}, std::move(out), {ri}, [ri, n, d](TensorImpl& self) {
        if (!ri->needs_grad) return;
        auto& g = ri->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < d; ++k) g[k] += self.grad[i * d + k];
        }
    });
}

Tensor gather_embed(const Tensor& table, const Tensor& null_row, std::span<const int> labels) {
    require_matrix(table, "gather_embed");
    const std::size_t k = table.rows(), e = table.cols();
    if (null_row.size() != e)
        throw ShapeError("gather_embed: null row width " + std::to_string(null_row.size()) +
                         " vs table width " + std::to_string(e));
    const std::size_t n = labels.size();
    AlignedVec out(n * e);
    for (std::size_t i = 0; i < n; ++i) {
        const int lab = labels[i];
        const double* src;
        if (lab < 0) {
            src = null_row.impl()->data.data();
        } else {
            if (static_cast<std::size_t>(lab) >= k)
                throw ValueError("gather_embed: label " + std::to_string(lab) + " out of range [0," +
                                 std::to_string(k) + ")");
            src = table.impl()->data.data() + static_cast<std::size_t>(lab) * e;
        }
        std::memcpy(out.data() + i * e, src, e * sizeof(double));
    }
    auto ti = table.impl();
    auto ni = null_row.impl();
    std::vector<int> labs(labels.begin(), labels.end());
    return make_op_result({n, e}, std::move(out), {ti, ni},
                          [ti, ni, labs, e](TensorImpl& self) {
                              const std::size_t n2 = labs.size();
                              for (std::size_t i = 0; i < n2; ++i) {
                                  const double* dy = self.grad.data() + i * e;
                                  if (labs[i] < 0) {
                                      if (!ni->needs_grad) continue;
                                      auto& g = ni->ensure_grad();
                                      for (std::size_t j = 0; j < e; ++j) g[j] += dy[j];
                                  } else {
                                      if (!ti->needs_grad) continue;
                                      auto& g = ti->ensure_grad();
                                      double* dst = g.data() + static_cast<std::size_t>(labs[i]) * e;
                                      for (std::size_t j = 0; j < e; ++j) dst[j] += dy[j];
                                  }
                              }
                          });
}

// --- backward ------------------------------------------------------------------

void backward(Tensor& loss) {
    if (!loss.is_scalar())
        throw ContractError("backward: loss must be scalar, shape has " +
                            std::to_string(loss.size()) + " elements");
    TensorImpl* root = loss.impl().get();
    if (!root->backprop && !root->requires_grad)
        throw ContractError("backward: loss has no tape (no grad-requiring inputs)");

    // iterative DFS postorder
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorImpl* p = node->parents[next++].get();
            if (p && p->needs_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->backprop && node->grad.size() == node->data.size()) node->backprop(*node);
    }

    // release the tape; keep gradients only on requires_grad leaves
    for (TensorImpl* node : order) {
        node->parents.clear();
        node->backprop = nullptr;
        if (!node->requires_grad) {
            node->grad.clear();
            node->grad.shrink_to_fit();
            node->needs_grad = false;
        }
    }
}

}  // namespace rflow

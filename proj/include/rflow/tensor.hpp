#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "rflow/errors.hpp"

namespace rflow {

// 64-byte-aligned storage for all tensor buffers. SIMD kernels choose their
// scalar/packet split by operand address, so two allocations holding equal
// values can otherwise produce last-bit-different results; pinning every
// buffer to one alignment keeps evaluation bitwise reproducible within a
// process, not just across identical runs. 64 bytes covers the widest
// vector unit the build may target (AVX-512).
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::size_t kAlign = 64;

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(std::size_t n) {
        void* p = nullptr;
        if (n == 0) n = 1;
        if (posix_memalign(&p, kAlign, n * sizeof(T)) != 0) throw std::bad_alloc();
        return static_cast<T*>(p);
    }
    void deallocate(T* p, std::size_t) { std::free(p); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const {
        return true;
    }
};

using AlignedVec = std::vector<double, AlignedAllocator<double>>;

struct TensorImpl {
    std::vector<std::size_t> shape;
    AlignedVec data;
    AlignedVec grad;  // empty until first accumulation
    bool requires_grad = false;
    bool needs_grad = false;  // on the tape, either a leaf or derived from one

    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backprop;

    AlignedVec& ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

// Dense row-major f64 tensor with reverse-mode autodiff. Copies share the
// underlying node, so parameters handed to an optimizer alias the ones
// inside a network. Ops record the tape only while grad mode is on and at
// least one input participates.
class Tensor {
  public:
    Tensor() : impl_(std::make_shared<TensorImpl>()) {}

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
    static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor row_vector(std::vector<double> data, bool requires_grad = false);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                         bool requires_grad = false);

    const std::vector<std::size_t>& shape() const { return impl_->shape; }
    std::size_t ndim() const { return impl_->shape.size(); }
    std::size_t size() const { return impl_->data.size(); }
    bool is_scalar() const { return size() == 1; }

    // 2-D accessors; ShapeError when the tensor is not a matrix.
    std::size_t rows() const;
    std::size_t cols() const;
    std::span<const double> row_span(std::size_t r) const;
    std::span<double> row_span_mut(std::size_t r);

    std::span<const double> data() const { return impl_->data; }
    std::span<double> data_mut() { return impl_->data; }
    double value() const;  // scalar read
    double at(std::size_t i) const { return impl_->data.at(i); }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool on);
    bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
    std::span<const double> grad() const;
    std::span<double> grad_mut();
    void zero_grad();

    bool all_finite() const;
    bool same_bits(const Tensor& other) const;

    std::shared_ptr<TensorImpl>& impl() { return impl_; }
    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

  private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;

    friend Tensor make_op_result(std::vector<std::size_t> shape, AlignedVec data,
                                 std::vector<std::shared_ptr<TensorImpl>> parents,
                                 std::function<void(TensorImpl&)> backprop);
};

// Disables tape recording for its scope (evaluation-only paths).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};
bool grad_mode_enabled();

// --- differentiable ops -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);           // [n,k]x[k,m]
Tensor add_bias(const Tensor& x, const Tensor& bias);      // [n,m] + [m]
Tensor add(const Tensor& a, const Tensor& b);              // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);              // elementwise
Tensor scale(const Tensor& a, double c);
Tensor silu(const Tensor& x);                              // x * sigmoid(x)
Tensor relu(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor concat_cols(std::span<const Tensor> parts);         // [n,m_i] -> [n,sum m_i]
Tensor sum(const Tensor& x);                               // -> [1]
Tensor reshape(const Tensor& x, std::vector<std::size_t> shape);  // same element count
Tensor broadcast_rows(const Tensor& row, std::size_t n);   // [d] or [1,d] -> [n,d]

// Row lookup into an embedding table with an out-of-band null row; label -1
// (or use_null) selects the null row. Gradients scatter-add into both.
Tensor gather_embed(const Tensor& table, const Tensor& null_row,
                    std::span<const int> labels);

// Runs reverse-mode accumulation from a scalar loss, then releases the tape.
// Gradients accumulate (+=) on every requires_grad leaf reachable from loss;
// interior buffers are dropped.
void backward(Tensor& loss);

// --- non-differentiable helpers ----------------------------------------------

double stable_sigmoid(double x);

}  // namespace rflow

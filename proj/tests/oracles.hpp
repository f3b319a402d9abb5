// Independent reference implementations used by the test suites. Everything
// here is deliberately naive — plain loops, factorial search, adaptive
// quadrature — so the library is checked against arithmetic it does not
// share a single line with.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "rflow/tensor.hpp"

namespace oracle {

// C = A[rows x inner] * B[inner x cols], triple loop.
inline std::vector<double> matmul(const std::vector<double>& a, std::size_t rows,
                                  std::size_t inner, const std::vector<double>& b,
                                  std::size_t cols) {
    std::vector<double> c(rows * cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t k = 0; k < inner; ++k)
            for (std::size_t j = 0; j < cols; ++j) c[i * cols + j] += a[i * inner + k] * b[k * cols + j];
    return c;
}

// Central finite difference d f / d x at x.
template <typename F>
double central_diff(F&& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double sq_dist(std::span<const double> p, std::span<const double> q) {
    double s = 0.0;
    for (std::size_t d = 0; d < p.size(); ++d) {
        const double diff = p[d] - q[d];
        s += diff * diff;
    }
    return s;
}

struct BruteAssignment {
    std::vector<std::size_t> perm;  // perm[i] = column assigned to row i
    double cost = std::numeric_limits<double>::infinity();
};

// Exhaustive n! search for the minimum-cost perfect matching between rows
// of a and rows of b under squared Euclidean cost. Usable up to n ~ 8.
inline BruteAssignment brute_force_assign(const rflow::Tensor& a, const rflow::Tensor& b) {
    const std::size_t n = a.rows();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    BruteAssignment best;
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) cost += sq_dist(a.row_span(i), b.row_span(perm[i]));
        if (cost < best.cost) {
            best.cost = cost;
            best.perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Exact empirical 2-Wasserstein via the same factorial search.
inline double w2_brute(const rflow::Tensor& a, const rflow::Tensor& b) {
    const BruteAssignment best = brute_force_assign(a, b);
    return std::sqrt(best.cost / static_cast<double>(a.rows()));
}

// Energy distance 2 E||A-B|| - E||A-A'|| - E||B-B'||, full-grid V-statistic.
inline double energy_naive(const rflow::Tensor& a, const rflow::Tensor& b) {
    const std::size_t n = a.rows();
    const std::size_t m = b.rows();
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) ab += std::sqrt(sq_dist(a.row_span(i), b.row_span(j)));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) aa += std::sqrt(sq_dist(a.row_span(i), a.row_span(j)));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) bb += std::sqrt(sq_dist(b.row_span(i), b.row_span(j)));
    return 2.0 * ab / static_cast<double>(n * m) - aa / static_cast<double>(n * n) -
           bb / static_cast<double>(m * m);
}

namespace detail {
template <typename F>
double simpson(F&& f, double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <typename F>
double adaptive(F&& f, double a, double b, double fa, double fm, double fb, double whole,
                double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(f, a, m, fa, flm, fm);
    const double right = simpson(f, m, b, fm, frm, fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1) +
           adaptive(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1);
}
}  // namespace detail

// Adaptive Simpson quadrature of f over [a, b].
template <typename F>
double integrate(F&& f, double a, double b, double tol = 1e-10) {
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    return detail::adaptive(f, a, b, fa, fm, fb, detail::simpson(f, a, b, fa, fm, fb), tol, 48);
}

// One-sample Kolmogorov-Smirnov statistic: sup |F_n - F| over the sample.
template <typename Cdf>
double ks_statistic(std::vector<double> samples, Cdf&& cdf) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double c = cdf(samples[i]);
        d = std::max(d, std::abs(c - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - c));
    }
    return d;
}

// Sample mean / unbiased variance of a value list.
inline double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double variance_of(std::span<const double> v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

}  // namespace oracle

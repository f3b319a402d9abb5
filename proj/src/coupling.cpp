#include "rflow/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "rflow/bytes.hpp"
#include "rflow/errors.hpp"

namespace rflow {

namespace {

constexpr std::uint32_t kCouplingVersion = 1;
constexpr char kCouplingMagic[5] = {'R', 'F', 'C', 'P', 'L'};

void check_same_batch(const Tensor& z1, const Tensor& z0) {
    if (z1.ndim() != 2 || z0.ndim() != 2 || z1.rows() != z0.rows() || z1.cols() != z0.cols()) {
        throw ShapeError("expected matching [n, d] batches");
    }
}

std::string encode_metadata(const std::map<std::string, std::string>& metadata) {
    std::string out;
    for (const auto& [key, value] : metadata) {
        if (key.find('=') != std::string::npos || key.find('\n') != std::string::npos ||
            value.find('\n') != std::string::npos) {
            throw ValueError("metadata keys/values must not contain '=' or newlines");
        }
        out += key;
        out += '=';
        out += value;
        out += '\n';
    }
    return out;
}

std::map<std::string, std::string> decode_metadata(const std::string& block) {
    std::map<std::string, std::string> out;
    std::istringstream in(block);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("malformed metadata line '" + line + "'");
        out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

}  // namespace

Tensor pairwise_cost(const Tensor& z1, const Tensor& z0) {
    check_same_batch(z1, z0);
    std::size_t n = z1.rows();
    std::size_t d = z1.cols();
    Tensor cost = Tensor::zeros({n, n});
    std::span<double> c = cost.data_mut();
    std::span<const double> a = z1.data();
    std::span<const double> b = z0.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                double diff = a[i * d + k] - b[j * d + k];
                acc += diff * diff;
            }
            c[i * n + j] = acc;
        }
    }
    return cost;
}

double identity_cost(const Tensor& z1, const Tensor& z0) {
    check_same_batch(z1, z0);
    std::span<const double> a = z1.data();
    std::span<const double> b = z0.data();
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        double diff = a[k] - b[k];
        acc += diff * diff;
    }
    return acc;
}

Assignment immiscible_assign(const Tensor& z1, const Tensor& z0) {
    Tensor cost_t = pairwise_cost(z1, z0);
    std::span<const double> cost = cost_t.data();
    const std::size_t n = z1.rows();
    for (double c : cost) {
        if (!std::isfinite(c)) throw ValueError("immiscible_assign: non-finite cost entry");
    }

    // Shortest-augmenting-path assignment with potentials (exact optimum).
    // Index 0 is a virtual column; p[j] is the row matched to column j.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<bool> used(n + 1, false);
    auto a = [&](std::size_t i, std::size_t j) { return cost[(i - 1) * n + (j - 1)]; };
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), false);
        do {
            used[j0] = true;
            std::size_t i0 = p[j0], j1 = 0;
            double delta = inf;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = a(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    Assignment out;
    out.perm.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) out.perm[p[j] - 1] = j - 1;
    for (std::size_t i = 0; i < n; ++i) out.total_cost += cost[i * n + out.perm[i]];
    return out;
}

Tensor apply_assignment(const Tensor& z0, const Assignment& assignment) {
    if (z0.ndim() != 2 || assignment.perm.size() != z0.rows()) {
        throw ShapeError("apply_assignment: permutation length must match batch rows");
    }
    std::size_t n = z0.rows(), d = z0.cols();
    Tensor out = Tensor::zeros({n, d});
    std::span<double> dst = out.data_mut();
    std::span<const double> src = z0.data();
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = assignment.perm[i];
        if (j >= n) throw ValueError("apply_assignment: permutation index out of range");
        std::copy_n(&src[j * d], d, &dst[i * d]);
    }
    return out;
}

Tensor interpolate(const Tensor& z0, const Tensor& z1, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw ValueError("interpolate: t must lie in [0, 1]");
    if (z0.shape() != z1.shape()) throw ShapeError("interpolate: shape mismatch");
    Tensor out = Tensor::zeros(z0.shape());
    std::span<double> dst = out.data_mut();
    std::span<const double> a = z0.data();
    std::span<const double> b = z1.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = (1.0 - t) * a[k] + t * b[k];
    return out;
}

Tensor interpolate(const Tensor& z0, const Tensor& z1, std::span<const double> t) {
    if (z0.shape() != z1.shape()) throw ShapeError("interpolate: shape mismatch");
    if (z0.ndim() != 2 || t.size() != z0.rows()) {
        throw ShapeError("interpolate: need one t per batch row");
    }
    std::size_t n = z0.rows(), d = z0.cols();
    Tensor out = Tensor::zeros({n, d});
    std::span<double> dst = out.data_mut();
    std::span<const double> a = z0.data();
    std::span<const double> b = z1.data();
    for (std::size_t i = 0; i < n; ++i) {
        double ti = t[i];
        if (!(ti >= 0.0 && ti <= 1.0)) throw ValueError("interpolate: t must lie in [0, 1]");
        for (std::size_t k = 0; k < d; ++k) {
            dst[i * d + k] = (1.0 - ti) * a[i * d + k] + ti * b[i * d + k];
        }
    }
    return out;
}

void CouplingSet::validate() const {
    std::size_t n = labels.size();
    if (z0.ndim() != 2 || z1.ndim() != 2 || z0.rows() != n || z1.rows() != n ||
        z0.cols() != dim || z1.cols() != dim) {
        throw ShapeError("CouplingSet: z0/z1 must both be [count, dim]");
    }
    for (int label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= cond_count) {
            throw ValueError("CouplingSet: label out of range");
        }
    }
}

void save_couplings(const CouplingSet& set, const std::filesystem::path& path) {
    set.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out.write(kCouplingMagic, sizeof(kCouplingMagic));
    write_u32(out, kCouplingVersion);
    write_u32(out, static_cast<std::uint32_t>(set.dim));
    write_u64(out, set.count());
    write_u32(out, static_cast<std::uint32_t>(set.cond_count));
    write_block(out, encode_metadata(set.metadata));
    std::span<const double> a = set.z0.data();
    std::span<const double> b = set.z1.data();
    for (std::size_t i = 0; i < set.count(); ++i) {
        for (std::size_t k = 0; k < set.dim; ++k) write_f64(out, a[i * set.dim + k]);
        for (std::size_t k = 0; k < set.dim; ++k) write_f64(out, b[i * set.dim + k]);
        write_u32(out, static_cast<std::uint32_t>(set.labels[i]));
    }
    if (!out) throw Error("short write to '" + path.string() + "'");
}

CouplingSet load_couplings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    char magic[5];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCouplingMagic, sizeof(magic)) != 0) {
        throw Error("'" + path.string() + "' is not a coupling file");
    }
    std::uint32_t version = read_u32(in);
    if (version != kCouplingVersion) {
        throw Error("unsupported coupling version " + std::to_string(version));
    }
    CouplingSet set;
    set.dim = read_u32(in);
    std::uint64_t count = read_u64(in);
    set.cond_count = read_u32(in);
    set.metadata = decode_metadata(read_block(in));
    set.z0 = Tensor::zeros({count, set.dim});
    set.z1 = Tensor::zeros({count, set.dim});
    set.labels.resize(count);
    std::span<double> a = set.z0.data_mut();
    std::span<double> b = set.z1.data_mut();
    for (std::uint64_t i = 0; i < count; ++i) {
        for (std::size_t k = 0; k < set.dim; ++k) a[i * set.dim + k] = read_f64(in);
        for (std::size_t k = 0; k < set.dim; ++k) b[i * set.dim + k] = read_f64(in);
        set.labels[i] = static_cast<int>(read_u32(in));
    }
    set.validate();
    return set;
}

}  // namespace rflow

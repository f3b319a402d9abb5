#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rflow/rng.hpp"
#include "rflow/tensor.hpp"

namespace rflow {

struct VelocityField;
struct AnchoredOptions;

// Batch pairing produced by the assignment solver. perm[i] is the z0 row
// paired with z1 row i; total_cost is the summed pair cost under perm.
struct Assignment {
    std::vector<std::size_t> perm;
    double total_cost = 0.0;
};

// Entry (i, j) = squared Euclidean distance ||z1_i - z0_j||^2.
Tensor pairwise_cost(const Tensor& z1, const Tensor& z0);

// Exact minimum-cost perfect matching (Jonker-Volgenant shortest augmenting
// path, O(n^3)) between z1 rows and z0 rows under squared Euclidean cost.
Assignment immiscible_assign(const Tensor& z1, const Tensor& z0);

double identity_cost(const Tensor& z1, const Tensor& z0);

// Rows of z0 reordered so row i becomes z0[perm[i]].
Tensor apply_assignment(const Tensor& z0, const Assignment& assignment);

// z_t = (1-t) z0 + t z1, elementwise over matching shapes.
Tensor interpolate(const Tensor& z0, const Tensor& z1, double t);
// Per-row times: row i uses t[i].
Tensor interpolate(const Tensor& z0, const Tensor& z1, std::span<const double> t);

// Fixed (z0, z1, label) pairs plus the metadata needed to regenerate them.
struct CouplingSet {
    std::size_t dim = 0;
    std::size_t cond_count = 0;
    Tensor z0;  // [n, dim]
    Tensor z1;  // [n, dim]
    std::vector<int> labels;
    std::map<std::string, std::string> metadata;

    std::size_t count() const { return labels.size(); }
    void validate() const;
};

// File layout ("RFCPL"): magic, version u32, dim u32, count u64,
// cond_count u32, metadata block (u32 length + UTF-8 key=value lines),
// then per record little-endian f64 z0 row, f64 z1 row, u32 label.
// Round-trips bit-exactly.
void save_couplings(const CouplingSet& set, const std::filesystem::path& path);
CouplingSet load_couplings(const std::filesystem::path& path);

// Draws z0 ~ N(0,I) and a uniform label per record, then integrates the
// model from z0 over T Euler steps (plain field at omega=1, anchored CFG
// otherwise when anchored is set). Shards of fixed size are simulated
// independently (possibly in parallel) and concatenated by shard index, so
// output depends only on the rng seed. inner, when given, tunes the
// anchored optimizer (its omega/steps fields are overridden by the
// arguments here).
CouplingSet generate_couplings(const VelocityField& model, std::size_t n, std::size_t steps,
                               double omega, bool anchored, Rng& rng,
                               const AnchoredOptions* inner = nullptr);

}  // namespace rflow

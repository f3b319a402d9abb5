#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace rflow {

// splitmix64 finalizer; used to derive independent seed streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic RNG handed around explicitly. Normal draws use Box-Muller
// with an explicit spare so the consumption pattern is stable across
// standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed), origin_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // (0, 1]; safe as a log() argument.
    double uniform_pos() { return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    void fill_normal(std::span<double> out) {
        for (double& v : out) v = normal();
    }

    // Unbiased integer in [0, n) via 128-bit multiply.
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>((static_cast<__uint128_t>(engine_()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Derived stream; independent of how much of *this has been consumed.
    Rng split(std::uint64_t stream) const { return Rng(mix_seed(origin_, stream)); }

    std::uint64_t origin_seed() const { return origin_; }

  private:
    std::mt19937_64 engine_;
    std::uint64_t origin_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace rflow

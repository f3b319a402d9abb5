#pragma once

#include <span>
#include <string>

#include "rflow/rng.hpp"

namespace rflow {

enum class TimeKind { Uniform, LogitNormal, MixExp, MixExpLiteral };

// Samples drawn by any kind are clamped into [kTimeEps, 1 - kTimeEps] so the
// interpolation endpoints are never hit exactly.
inline constexpr double kTimeEps = 1e-12;

// Distribution over interpolation times t in [0, 1].
//
//   uniform          pdf 1 on [0,1]
//   logit_normal     logit(t) ~ N(mu, sigma^2)
//   mix_exp          equal mixture of exp(+a(t-1/2)) and exp(-a(t-1/2)),
//                    symmetric bowl with mass piled at both endpoints
//   mix_exp_literal  equal mixture of exp(+a t) and exp(-a t) on [0,1];
//                    kept for comparison, its density is monotone in t
struct TimeSampler {
    TimeKind kind = TimeKind::Uniform;
    double mu = 0.0;     // logit_normal location
    double sigma = 1.0;  // logit_normal scale, > 0
    double a = 4.0;      // mix_exp sharpness, > 0

    static TimeSampler uniform();
    static TimeSampler logit_normal(double mu, double sigma);
    static TimeSampler mix_exp(double a);
    static TimeSampler mix_exp_literal(double a);
    // kind by name, parameters taken from the arguments that apply.
    static TimeSampler from_name(const std::string& name, double mu, double sigma, double a);

    std::string name() const;

    // pdf/cdf accept the closed interval [0, 1] and throw ValueError outside.
    double pdf(double t) const;
    double cdf(double t) const;

    double sample(Rng& rng) const;
    void sample(Rng& rng, std::span<double> out) const;
};

}  // namespace rflow

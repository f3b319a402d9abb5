#include "rflow/timesamplers.hpp"

#include <algorithm>
#include <cmath>

#include "rflow/errors.hpp"

namespace rflow {

namespace {

constexpr double kSqrt2Pi = 2.5066282746310005024;

double logit(double t) { return std::log(t / (1.0 - t)); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double clamp_time(double t) { return std::clamp(t, kTimeEps, 1.0 - kTimeEps); }

// Overflow-safe logistic: exp() only ever sees a non-positive argument.
double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void check_domain(double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw ValueError("time t must lie in [0, 1], got " + std::to_string(t));
    }
}

}  // namespace

TimeSampler TimeSampler::uniform() { return TimeSampler{TimeKind::Uniform, 0.0, 1.0, 4.0}; }

TimeSampler TimeSampler::logit_normal(double mu, double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(mu)) {
        throw ValueError("logit_normal needs finite mu and sigma > 0");
    }
    return TimeSampler{TimeKind::LogitNormal, mu, sigma, 4.0};
}

TimeSampler TimeSampler::mix_exp(double a) {
    if (!(a > 0.0) || !std::isfinite(a)) throw ValueError("mix_exp needs a > 0");
    return TimeSampler{TimeKind::MixExp, 0.0, 1.0, a};
}

TimeSampler TimeSampler::mix_exp_literal(double a) {
    if (!(a > 0.0) || !std::isfinite(a)) throw ValueError("mix_exp_literal needs a > 0");
    return TimeSampler{TimeKind::MixExpLiteral, 0.0, 1.0, a};
}

TimeSampler TimeSampler::from_name(const std::string& name, double mu, double sigma, double a) {
    if (name == "uniform") return uniform();
    if (name == "logit_normal") return logit_normal(mu, sigma);
    if (name == "mix_exp") return mix_exp(a);
    if (name == "mix_exp_literal") return mix_exp_literal(a);
    throw ValueError("unknown time sampler '" + name + "'");
}

std::string TimeSampler::name() const {
    switch (kind) {
        case TimeKind::Uniform: return "uniform";
        case TimeKind::LogitNormal: return "logit_normal";
        case TimeKind::MixExp: return "mix_exp";
        case TimeKind::MixExpLiteral: return "mix_exp_literal";
    }
    throw ValueError("bad time sampler kind");
}

double TimeSampler::pdf(double t) const {
    check_domain(t);
    switch (kind) {
        case TimeKind::Uniform:
            return 1.0;
        case TimeKind::LogitNormal: {
            if (t <= 0.0 || t >= 1.0) return 0.0;  // limit at the endpoints
            double u = (logit(t) - mu) / sigma;
            return std::exp(-0.5 * u * u) / (sigma * kSqrt2Pi * t * (1.0 - t));
        }
        case TimeKind::MixExp:
            // (exp(a(t-1/2)) + exp(-a(t-1/2))) / Z with Z = (4/a) sinh(a/2)
            return a * std::cosh(a * (t - 0.5)) / (2.0 * std::sinh(0.5 * a));
        case TimeKind::MixExpLiteral:
            return a * std::cosh(a * t) / std::sinh(a);
    }
    throw ValueError("bad time sampler kind");
}

double TimeSampler::cdf(double t) const {
    check_domain(t);
    switch (kind) {
        case TimeKind::Uniform:
            return t;
        case TimeKind::LogitNormal:
            if (t <= 0.0) return 0.0;
            if (t >= 1.0) return 1.0;
            return normal_cdf((logit(t) - mu) / sigma);
        case TimeKind::MixExp:
            return 0.5 + std::sinh(a * (t - 0.5)) / (2.0 * std::sinh(0.5 * a));
        case TimeKind::MixExpLiteral:
            return std::sinh(a * t) / std::sinh(a);
    }
    throw ValueError("bad time sampler kind");
}

double TimeSampler::sample(Rng& rng) const {
    switch (kind) {
        case TimeKind::Uniform:
            return clamp_time(rng.uniform());
        case TimeKind::LogitNormal:
            return clamp_time(stable_sigmoid(mu + sigma * rng.normal()));
        case TimeKind::MixExp: {
            // Pick a component, then invert that component's cdf on [0,1].
            // Rising component: density ~ exp(a(t-1/2)),
            //   t = 1/2 + (1/a) log(exp(-a/2) + 2 u sinh(a/2)).
            bool rising = rng.uniform() < 0.5;
            double u = rng.uniform_pos();
            double t = 0.5 + std::log(std::exp(-0.5 * a) + 2.0 * u * std::sinh(0.5 * a)) / a;
            return clamp_time(rising ? t : 1.0 - t);
        }
        case TimeKind::MixExpLiteral: {
            // The normalized density a cosh(at)/sinh(a) is a mixture of the
            // two exponentials with weights proportional to their mass on
            // [0,1]: the rising component carries sigmoid(a), not 1/2
            // (unlike the centered variant, whose halves are symmetric).
            // Rising: t = (1/a) log(1 + u(e^a - 1));
            // falling: t = -(1/a) log(1 - u(1 - e^-a)).
            bool rising = rng.uniform() < stable_sigmoid(a);
            double u = rng.uniform_pos();
            double t = rising ? std::log1p(u * std::expm1(a)) / a
                              : -std::log1p(-u * (-std::expm1(-a))) / a;
            return clamp_time(t);
        }
    }
    throw ValueError("bad time sampler kind");
}

void TimeSampler::sample(Rng& rng, std::span<double> out) const {
    for (double& t : out) t = sample(rng);
}

}  // namespace rflow

// Timestep distributions: closed-form pdf/cdf values, normalization by
// quadrature, cdf/pdf consistency, inverse-CDF sampling quality, and the
// domain contract.
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "rflow/errors.hpp"
#include "rflow/rng.hpp"
#include "rflow/timesamplers.hpp"

using namespace rflow;

namespace {

std::vector<double> draw(const TimeSampler& ts, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out(n);
    ts.sample(rng, out);
    return out;
}

}  // namespace

TEST_CASE("uniform sampler is the identity distribution") {
    TimeSampler ts = TimeSampler::uniform();
    CHECK(ts.pdf(0.0) == 1.0);
    CHECK(ts.pdf(0.37) == 1.0);
    CHECK(ts.pdf(1.0) == 1.0);
    CHECK(ts.cdf(0.37) == doctest::Approx(0.37).epsilon(1e-15));
    CHECK(ts.cdf(0.0) == 0.0);
    CHECK(ts.cdf(1.0) == 1.0);
}

TEST_CASE("logit-normal closed-form values") {
    TimeSampler ts = TimeSampler::logit_normal(0.0, 1.0);

    // At t = 1/2 the logit is 0, so pdf = 1 / (sigma sqrt(2 pi) t (1-t))
    // = 4 / sqrt(2 pi). Frozen: 1.5957691216057308.
    const double expected = 4.0 / std::sqrt(2.0 * M_PI);
    CHECK(ts.pdf(0.5) == doctest::Approx(expected).epsilon(1e-15));
    CHECK(ts.pdf(0.5) == doctest::Approx(1.5957691216057308).epsilon(1e-15));

    // The density vanishes at both endpoints and the cdf is exact there.
    CHECK(ts.pdf(0.0) == 0.0);
    CHECK(ts.pdf(1.0) == 0.0);
    CHECK(ts.cdf(0.0) == 0.0);
    CHECK(ts.cdf(1.0) == 1.0);
    CHECK(ts.cdf(0.5) == doctest::Approx(0.5).epsilon(1e-15));

    // mu shifts mass: with mu > 0 the median moves above 1/2.
    TimeSampler shifted = TimeSampler::logit_normal(1.0, 0.5);
    CHECK(shifted.cdf(0.5) < 0.5);
}

TEST_CASE("mix-exp closed-form values") {
    TimeSampler ts = TimeSampler::mix_exp(4.0);

    // pdf(t) = a cosh(a (t - 1/2)) / (2 sinh(a/2)): the symmetric bowl.
    // Frozen at a = 4: pdf(1/2) = 2 / sinh(2), pdf(0) = 2 / tanh(2).
    CHECK(ts.pdf(0.5) == doctest::Approx(2.0 / std::sinh(2.0)).epsilon(1e-15));
    CHECK(ts.pdf(0.5) == doctest::Approx(0.55144112954356642).epsilon(1e-15));
    CHECK(ts.pdf(0.0) == doctest::Approx(2.0 / std::tanh(2.0)).epsilon(1e-15));
    CHECK(ts.pdf(1.0) == doctest::Approx(2.0746294414550962).epsilon(1e-14));

    // Endpoints dominate the middle: that is the point of this sampler.
    CHECK(ts.pdf(0.0) > 3.0 * ts.pdf(0.5));

    // Symmetry about 1/2 in both pdf and cdf.
    for (double t : {0.05, 0.2, 0.35, 0.49}) {
        CHECK(ts.pdf(t) == doctest::Approx(ts.pdf(1.0 - t)).epsilon(1e-14));
        CHECK(ts.cdf(t) == doctest::Approx(1.0 - ts.cdf(1.0 - t)).epsilon(1e-14));
    }
    CHECK(ts.cdf(0.0) == 0.0);
    CHECK(ts.cdf(0.5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(ts.cdf(1.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("literal mix-exp variant is monotone, not a bowl") {
    TimeSampler ts = TimeSampler::mix_exp_literal(4.0);
    // pdf(t) = a cosh(a t) / sinh(a), cdf(t) = sinh(a t) / sinh(a).
    CHECK(ts.pdf(0.0) == doctest::Approx(4.0 / std::sinh(4.0)).epsilon(1e-15));
    CHECK(ts.pdf(1.0) == doctest::Approx(4.0 * std::cosh(4.0) / std::sinh(4.0)).epsilon(1e-15));
    CHECK(ts.cdf(0.25) == doctest::Approx(std::sinh(1.0) / std::sinh(4.0)).epsilon(1e-14));
    // Monotone increasing density: all the mass piles at t = 1 only.
    double prev = ts.pdf(0.0);
    for (double t = 0.1; t < 1.0001; t += 0.1) {
        CHECK(ts.pdf(t) > prev);
        prev = ts.pdf(t);
    }
}

TEST_CASE("pdf integrates to 1 and matches the cdf for every kind") {
    const std::vector<TimeSampler> samplers = {
        TimeSampler::uniform(),
        TimeSampler::logit_normal(0.0, 1.0),
        TimeSampler::logit_normal(0.8, 1.6),
        TimeSampler::mix_exp(4.0),
        TimeSampler::mix_exp(0.5),
        TimeSampler::mix_exp_literal(4.0),
    };
    for (const TimeSampler& ts : samplers) {
        CAPTURE(ts.name());
        const double total = oracle::integrate([&](double t) { return ts.pdf(t); }, 0.0, 1.0);
        CHECK(total == doctest::Approx(1.0).epsilon(1e-6));

        // cdf equals the pdf integral from 0.
        for (double t : {0.2, 0.5, 0.83}) {
            const double part = oracle::integrate([&](double u) { return ts.pdf(u); }, 0.0, t);
            CHECK(ts.cdf(t) == doctest::Approx(part).epsilon(1e-8));
        }

        // pdf equals the cdf derivative at interior points.
        for (double t : {0.1, 0.5, 0.9}) {
            const double fd =
                oracle::central_diff([&](double u) { return ts.cdf(u); }, t, 1e-6);
            CHECK(ts.pdf(t) == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("sampling matches the cdf (Kolmogorov-Smirnov)") {
    const std::vector<TimeSampler> samplers = {
        TimeSampler::uniform(),
        TimeSampler::logit_normal(0.0, 1.0),
        TimeSampler::mix_exp(4.0),
        TimeSampler::mix_exp_literal(4.0),
    };
    std::uint64_t seed = 900;
    for (const TimeSampler& ts : samplers) {
        CAPTURE(ts.name());
        const std::vector<double> samples = draw(ts, 20000, seed++);
        const double ks =
            oracle::ks_statistic(samples, [&](double t) { return ts.cdf(t); });
        CHECK(ks < 0.012);  // ~1.36/sqrt(n) at the 5% level, fixed seed
    }
}

TEST_CASE("samples stay inside the clamped open interval") {
    // mix_exp(50) piles mass hard onto the endpoints, so the clamp matters.
    const std::vector<double> samples = draw(TimeSampler::mix_exp(50.0), 50000, 17);
    for (double t : samples) {
        CHECK(t >= kTimeEps);
        CHECK(t <= 1.0 - kTimeEps);
    }
}

TEST_CASE("pdf and cdf reject arguments outside [0, 1]") {
    TimeSampler ts = TimeSampler::mix_exp(4.0);
    CHECK_THROWS_AS((void)ts.pdf(-0.001), ValueError);
    CHECK_THROWS_AS((void)ts.pdf(1.001), ValueError);
    CHECK_THROWS_AS((void)ts.cdf(-1.0), ValueError);
    CHECK_THROWS_AS((void)ts.cdf(2.0), ValueError);
}

TEST_CASE("factory parameter validation") {
    CHECK_THROWS_AS(TimeSampler::logit_normal(0.0, 0.0), ValueError);
    CHECK_THROWS_AS(TimeSampler::logit_normal(0.0, -1.0), ValueError);
    CHECK_THROWS_AS(TimeSampler::mix_exp(0.0), ValueError);
    CHECK_THROWS_AS(TimeSampler::mix_exp_literal(-2.0), ValueError);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(TimeSampler::logit_normal(inf, 1.0), ValueError);
}

TEST_CASE("names round-trip through from_name") {
    CHECK(TimeSampler::uniform().name() == "uniform");
    CHECK(TimeSampler::logit_normal(0.0, 1.0).name() == "logit_normal");
    CHECK(TimeSampler::mix_exp(4.0).name() == "mix_exp");
    CHECK(TimeSampler::mix_exp_literal(4.0).name() == "mix_exp_literal");

    TimeSampler ts = TimeSampler::from_name("mix_exp", 0.0, 1.0, 3.0);
    CHECK(ts.kind == TimeKind::MixExp);
    CHECK(ts.a == 3.0);
    TimeSampler ln = TimeSampler::from_name("logit_normal", 0.25, 2.0, 4.0);
    CHECK(ln.kind == TimeKind::LogitNormal);
    CHECK(ln.mu == 0.25);
    CHECK(ln.sigma == 2.0);
    CHECK_THROWS_AS(TimeSampler::from_name("cosine", 0.0, 1.0, 4.0), ValueError);
}

TEST_CASE("symmetric samplers have mean 1/2 under quadrature") {
    for (const TimeSampler& ts : {TimeSampler::logit_normal(0.0, 1.0), TimeSampler::mix_exp(4.0)}) {
        CAPTURE(ts.name());
        const double mean = oracle::integrate([&](double t) { return t * ts.pdf(t); }, 0.0, 1.0);
        CHECK(mean == doctest::Approx(0.5).epsilon(1e-7));
    }
}

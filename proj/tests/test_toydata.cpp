// Synthetic task geometry, sampling statistics, the analytic gauss8
// density, and the condition-embedding table.
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "rflow/errors.hpp"
#include "rflow/rng.hpp"
#include "rflow/toydata.hpp"
#include "rflow/velocityfield.hpp"  // kNullLabel

using namespace rflow;

TEST_CASE("gauss8 geometry: 8 modes on a radius-4 circle") {
    ToyTask task = ToyTask::create("gauss8");
    CHECK(task.dim == 2);
    CHECK(task.num_conditions == 8);
    CHECK(task.scale == 0.15);
    REQUIRE(task.centers.size() == 8);
    for (std::size_t k = 0; k < 8; ++k) {
        const double angle = 2.0 * M_PI * static_cast<double>(k) / 8.0;
        CHECK(task.centers[k][0] == doctest::Approx(4.0 * std::cos(angle)).epsilon(1e-14));
        CHECK(task.centers[k][1] == doctest::Approx(4.0 * std::sin(angle)).epsilon(1e-14));
    }
}

TEST_CASE("gauss8 conditional sampling matches its mode") {
    ToyTask task = ToyTask::create("gauss8");
    Rng rng(404);
    const std::size_t n = 4000;
    for (int label : {0, 3, 7}) {
        Tensor pts = sample_conditional(task, rng, label, n);
        REQUIRE(pts.rows() == n);
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += pts.at(2 * i);
            my += pts.at(2 * i + 1);
        }
        mx /= n;
        my /= n;
        // Mean within 5 sigma / sqrt(n) of the mode center.
        const double tol = 5.0 * task.scale / std::sqrt(static_cast<double>(n));
        CHECK(std::abs(mx - task.centers[label][0]) < tol);
        CHECK(std::abs(my - task.centers[label][1]) < tol);

        double vx = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = pts.at(2 * i) - mx;
            vx += d * d;
        }
        vx /= (n - 1);
        CHECK(std::sqrt(vx) == doctest::Approx(task.scale).epsilon(0.1));
    }
    CHECK_THROWS_AS(sample_conditional(task, rng, 8, 4), ValueError);
    CHECK_THROWS_AS(sample_conditional(task, rng, -1, 4), ValueError);
}

TEST_CASE("gauss8 log_density matches a hand-rolled mixture and normalizes") {
    ToyTask task = ToyTask::create("gauss8");
    const double s2 = task.scale * task.scale;

    auto reference = [&](double x, double y) {
        double total = 0.0;
        for (const auto& c : task.centers) {
            const double d2 = (x - c[0]) * (x - c[0]) + (y - c[1]) * (y - c[1]);
            total += std::exp(-0.5 * d2 / s2) / (2.0 * M_PI * s2);
        }
        return std::log(total / 8.0);
    };
    for (auto [x, y] : std::vector<std::pair<double, double>>{
             {4.0, 0.0}, {0.0, 0.0}, {2.5, 2.5}, {-3.9, 0.1}}) {
        CHECK(task.log_density(x, y) == doctest::Approx(reference(x, y)).epsilon(1e-12));
    }

    // Riemann sum of exp(log_density) over a box that contains ~all mass.
    const double lo = -6.0, hi = 6.0, h = 0.02;
    double mass = 0.0;
    for (double x = lo + 0.5 * h; x < hi; x += h)
        for (double y = lo + 0.5 * h; y < hi; y += h) mass += std::exp(task.log_density(x, y));
    mass *= h * h;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));

    ToyTask moons = ToyTask::create("moons2");
    CHECK_THROWS_AS(moons.log_density(0.0, 0.0), ValueError);
}

TEST_CASE("checkerboard populates the 8 even cells of a 4x4 grid") {
    ToyTask task = ToyTask::create("checkerboard");
    CHECK(task.num_conditions == 8);
    CHECK(task.scale == 1.0);
    REQUIRE(task.centers.size() == 8);

    // Expected centers: row-major over the 4x4 grid, (col + row) even.
    std::vector<std::array<double, 2>> expect;
    for (int row = 0; row < 4; ++row)
        for (int col = 0; col < 4; ++col)
            if ((col + row) % 2 == 0)
                expect.push_back({-2.0 + col + 0.5, -2.0 + row + 0.5});
    REQUIRE(expect.size() == 8);
    for (std::size_t k = 0; k < 8; ++k) {
        CHECK(task.centers[k][0] == expect[k][0]);
        CHECK(task.centers[k][1] == expect[k][1]);
    }

    // Every sample stays inside its labelled unit cell.
    Rng rng(55);
    LabelledBatch batch = sample_data(task, rng, 5000);
    for (std::size_t i = 0; i < 5000; ++i) {
        const auto& c = task.centers[batch.labels[i]];
        CHECK(std::abs(batch.points.at(2 * i) - c[0]) <= 0.5);
        CHECK(std::abs(batch.points.at(2 * i + 1) - c[1]) <= 0.5);
    }
}

TEST_CASE("moons2 samples hug their arcs") {
    ToyTask task = ToyTask::create("moons2");
    CHECK(task.num_conditions == 2);
    CHECK(task.centers.empty());
    CHECK(task.scale == 0.1);

    Rng rng(77);
    const std::size_t n = 3000;
    Tensor m0 = sample_conditional(task, rng, 0, n);
    Tensor m1 = sample_conditional(task, rng, 1, n);
    for (std::size_t i = 0; i < n; ++i) {
        // Moon 0: unit circle around the origin (upper half).
        const double r0 = std::hypot(m0.at(2 * i), m0.at(2 * i + 1));
        CHECK(std::abs(r0 - 1.0) < 6.0 * task.scale);
        CHECK(m0.at(2 * i + 1) > -6.0 * task.scale);
        // Moon 1: unit circle around (1, 0.5) (lower half).
        const double r1 = std::hypot(m1.at(2 * i) - 1.0, m1.at(2 * i + 1) - 0.5);
        CHECK(std::abs(r1 - 1.0) < 6.0 * task.scale);
        CHECK(m1.at(2 * i + 1) < 0.5 + 6.0 * task.scale);
    }
}

TEST_CASE("sample_data draws labels uniformly") {
    ToyTask task = ToyTask::create("gauss8");
    Rng rng(91);
    const std::size_t n = 16000;
    LabelledBatch batch = sample_data(task, rng, n);
    REQUIRE(batch.points.rows() == n);
    REQUIRE(batch.labels.size() == n);
    std::vector<std::size_t> counts(8, 0);
    for (int lab : batch.labels) {
        REQUIRE(lab >= 0);
        REQUIRE(lab < 8);
        ++counts[lab];
    }
    // Binomial(n, 1/8): mean 2000, sigma ~ 41.8; allow 5 sigma.
    for (std::size_t c : counts) {
        CHECK(static_cast<double>(c) == doctest::Approx(2000.0).epsilon(0.105));
    }
    CHECK_THROWS_AS(sample_data(task, rng, 0), ValueError);
}

TEST_CASE("unknown task name is rejected") {
    CHECK_THROWS_AS(ToyTask::create("spiral"), ValueError);
    CHECK_THROWS_AS(ToyTask::create(""), ValueError);
}

TEST_CASE("sample_noise is standard normal and seed-stable") {
    Rng rng(2024);
    Tensor z = sample_noise(rng, 20000, 2);
    REQUIRE(z.rows() == 20000);
    REQUIRE(z.cols() == 2);
    std::vector<double> all(z.data().begin(), z.data().end());
    CHECK(oracle::mean_of(all) == doctest::Approx(0.0).epsilon(0.02));
    CHECK(oracle::variance_of(all) == doctest::Approx(1.0).epsilon(0.03));

    Rng r1(7), r2(7);
    CHECK(sample_noise(r1, 64, 2).same_bits(sample_noise(r2, 64, 2)));

    Tensor empty = sample_noise(rng, 5, 0);
    CHECK(empty.rows() == 5);
    CHECK(empty.cols() == 0);
}

TEST_CASE("condition embedding: init bounds, lookup, and the null row") {
    Rng rng(13);
    ConditionEmbedding emb = ConditionEmbedding::create(8, 16, rng);
    CHECK(emb.num_conditions() == 8);
    CHECK(emb.width() == 16);
    CHECK(emb.table.requires_grad());
    CHECK(emb.null_row.requires_grad());

    const double bound = 1.0 / std::sqrt(16.0);
    for (double v : emb.table.data()) CHECK(std::abs(v) <= bound);
    for (double v : emb.null_row.data()) CHECK(std::abs(v) <= bound);

    const std::vector<int> labels = {3, kNullLabel, 0, 3};
    Tensor rows = emb.lookup(labels);
    REQUIRE(rows.rows() == 4);
    REQUIRE(rows.cols() == 16);
    for (std::size_t j = 0; j < 16; ++j) {
        CHECK(rows.at(0 * 16 + j) == emb.table.at(3 * 16 + j));
        CHECK(rows.at(1 * 16 + j) == emb.null_row.at(j));
        CHECK(rows.at(2 * 16 + j) == emb.table.at(0 * 16 + j));
        CHECK(rows.at(3 * 16 + j) == emb.table.at(3 * 16 + j));
    }

    const std::vector<int> bad = {9};
    CHECK_THROWS_AS(emb.lookup(bad), ValueError);
}

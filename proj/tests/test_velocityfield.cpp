// Velocity-field forward paths, time features, classifier-free guidance
// identities, cloning, and checkpoint round trips.
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "rflow/checkpoint.hpp"
#include "rflow/errors.hpp"
#include "rflow/rng.hpp"
#include "rflow/velocityfield.hpp"

using namespace rflow;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "rflow_test_velocityfield";
    std::filesystem::create_directories(dir);
    return dir;
}

VelocityField random_field(std::uint64_t seed) {
    Rng rng(seed);
    return VelocityField::create(2, 8, 16, 16, {32, 32}, Activation::Silu, rng);
}

// A field that ignores z and t and returns the condition embedding as the
// velocity: widths [6, 2], weights zero except an identity block on the
// embedding slice. Makes guidance arithmetic exactly predictable.
VelocityField passthrough_field() {
    Rng rng(1);
    VelocityField f = VelocityField::create(2, 1, 2, 2, {}, Activation::Silu, rng);
    REQUIRE(f.net.layer_count() == 1);
    REQUIRE(f.net.input_width() == 6);  // [z(2) | time(2) | emb(2)]
    auto w = f.net.weights[0].data_mut();
    std::fill(w.begin(), w.end(), 0.0);
    w[4 * 2 + 0] = 1.0;  // emb[0] -> out[0]
    w[5 * 2 + 1] = 1.0;  // emb[1] -> out[1]
    auto b = f.net.biases[0].data_mut();
    std::fill(b.begin(), b.end(), 0.0);
    auto table = f.cond.table.data_mut();
    table[0] = 1.0;
    table[1] = 0.0;  // v(., ., c=0) = [1, 0]
    auto null_row = f.cond.null_row.data_mut();
    null_row[0] = 0.0;
    null_row[1] = 1.0;  // v(., ., null) = [0, 1]
    return f;
}

}  // namespace

TEST_CASE("time embedding: interleaved sin/cos ladder") {
    const std::vector<double> t = {0.0, 0.25};
    Tensor emb = time_embedding(t, 4);
    REQUIRE(emb.rows() == 2);
    REQUIRE(emb.cols() == 4);

    // t = 0: sin terms exactly 0, cos terms exactly 1.
    CHECK(emb.at(0) == 0.0);
    CHECK(emb.at(1) == 1.0);
    CHECK(emb.at(2) == 0.0);
    CHECK(emb.at(3) == 1.0);

    // t = 1/4: [sin(pi/4), cos(pi/4), sin(pi/2), cos(pi/2)].
    CHECK(emb.at(4) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
    CHECK(emb.at(5) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
    CHECK(emb.at(6) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(emb.at(7) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));

    // Frequencies double per pair: entry 2j is sin(2^j pi t).
    Tensor wide = time_embedding(std::vector<double>{0.13}, 8);
    for (std::size_t j = 0; j < 4; ++j) {
        const double freq = std::pow(2.0, static_cast<double>(j)) * M_PI;
        CHECK(wide.at(2 * j) == doctest::Approx(std::sin(freq * 0.13)).epsilon(1e-14));
        CHECK(wide.at(2 * j + 1) == doctest::Approx(std::cos(freq * 0.13)).epsilon(1e-14));
    }

    CHECK_THROWS_AS(time_embedding(t, 3), ValueError);
    CHECK_THROWS_AS(time_embedding(t, 0), ValueError);
}

TEST_CASE("field construction wires the documented widths") {
    VelocityField f = random_field(7);
    CHECK(f.dim == 2);
    CHECK(f.cond_count() == 8);
    CHECK(f.embed_width() == 16);
    CHECK(f.time_embed_width == 16);
    CHECK(f.net.input_width() == 2 + 16 + 16);
    CHECK(f.net.output_width() == 2);

    // Reference network size: hidden {128,128,128} on the gauss8 shape.
    Rng rng(3);
    VelocityField ref = VelocityField::create(2, 8, 16, 16, {128, 128, 128}, Activation::Silu, rng);
    CHECK(ref.net.parameter_count() == 37762);
    std::size_t total = ref.net.parameter_count() + ref.cond.table.size() + ref.cond.null_row.size();
    CHECK(total == 37906);
}

TEST_CASE("forward shape contract and label validation") {
    VelocityField f = random_field(9);
    Tensor z = Tensor::matrix(3, 2, {0.1, -0.2, 1.0, 0.5, -1.0, 0.0});
    const std::vector<double> t = {0.2, 0.5, 0.9};
    const std::vector<int> labels = {0, kNullLabel, 7};
    Tensor v = f.forward(z, t, labels);
    CHECK(v.rows() == 3);
    CHECK(v.cols() == 2);
    CHECK(v.all_finite());

    const std::vector<int> bad = {0, 8, 0};
    CHECK_THROWS_AS(f.forward(z, t, bad), ValueError);
    const std::vector<double> short_t = {0.2};
    CHECK_THROWS_AS(f.forward(z, short_t, labels), ShapeError);
}

TEST_CASE("guidance on the passthrough field reproduces the affine formula") {
    VelocityField f = passthrough_field();
    Tensor z = Tensor::matrix(1, 2, {0.3, -0.8});

    // Conditional and unconditional evaluations are the embeddings.
    Tensor vc = eval_velocity(f, z, 0.4, 0);
    CHECK(vc.at(0) == 1.0);
    CHECK(vc.at(1) == 0.0);
    Tensor vn = eval_velocity(f, z, 0.4, kNullLabel);
    CHECK(vn.at(0) == 0.0);
    CHECK(vn.at(1) == 1.0);

    // omega = 2: 2 [1,0] + (1-2) [0,1] = [2, -1].
    GuidanceSpec spec;
    spec.omega = 2.0;
    Tensor guided = eval_cfg(f, spec, z, 0.4, 0, 0);
    CHECK(guided.at(0) == 2.0);
    CHECK(guided.at(1) == -1.0);

    // Per-step null embeddings replace the global null row.
    GuidanceSpec stepped;
    stepped.omega = 2.0;
    stepped.step_null = {Tensor::row_vector({5.0, 7.0})};
    Tensor anchored = eval_cfg(f, stepped, z, 0.4, 0, 0);
    CHECK(anchored.at(0) == doctest::Approx(2.0 * 1.0 - 5.0).epsilon(1e-15));
    CHECK(anchored.at(1) == doctest::Approx(2.0 * 0.0 - 7.0).epsilon(1e-15));
}

TEST_CASE("omega = 1 short-circuits to the conditional field bitwise") {
    VelocityField f = random_field(21);
    Tensor z = Tensor::matrix(1, 2, {0.7, 0.2});
    GuidanceSpec unit;
    unit.omega = 1.0;
    for (int label : {0, 3, 7}) {
        Tensor plain = eval_velocity(f, z, 0.33, label);
        Tensor cfg = eval_cfg(f, unit, z, 0.33, label, 0);
        CHECK(cfg.same_bits(plain));
    }
}

TEST_CASE("guided velocity is affine in omega") {
    VelocityField f = random_field(22);
    Tensor z = Tensor::matrix(1, 2, {-0.4, 1.1});
    auto eval_at = [&](double omega) {
        GuidanceSpec spec;
        spec.omega = omega;
        return eval_cfg(f, spec, z, 0.6, 2, 0);
    };
    Tensor v1 = eval_at(1.0);
    Tensor v2 = eval_at(2.0);
    Tensor v3 = eval_at(3.0);
    // v(3) - v(1) must equal 2 (v(2) - v(1)) coordinate-wise.
    for (std::size_t j = 0; j < 2; ++j) {
        const double lhs = v3.at(j) - v1.at(j);
        const double rhs = 2.0 * (v2.at(j) - v1.at(j));
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("batch evaluation agrees with per-row evaluation") {
    VelocityField f = random_field(23);
    Tensor z = Tensor::matrix(3, 2, {0.0, 0.1, -0.5, 0.7, 1.2, -1.2});
    const std::vector<int> labels = {1, kNullLabel, 5};
    Tensor batch = eval_batch(f, z, 0.45, labels);
    for (std::size_t i = 0; i < 3; ++i) {
        Tensor row = Tensor::matrix(1, 2, {z.at(i * 2), z.at(i * 2 + 1)});
        Tensor single = eval_velocity(f, row, 0.45, labels[i]);
        CHECK(batch.at(i * 2) == doctest::Approx(single.at(0)).epsilon(1e-13));
        CHECK(batch.at(i * 2 + 1) == doctest::Approx(single.at(1)).epsilon(1e-13));
    }

    GuidanceSpec spec;
    spec.omega = 1.8;
    Tensor guided_batch = eval_cfg_batch(f, spec, z, 0.45, labels, 0);
    for (std::size_t i = 0; i < 3; ++i) {
        Tensor row = Tensor::matrix(1, 2, {z.at(i * 2), z.at(i * 2 + 1)});
        Tensor single = eval_cfg(f, spec, row, 0.45, labels[i], 0);
        CHECK(guided_batch.at(i * 2) == doctest::Approx(single.at(0)).epsilon(1e-13));
        CHECK(guided_batch.at(i * 2 + 1) == doctest::Approx(single.at(1)).epsilon(1e-13));
    }
}

TEST_CASE("forward_with_embedding broadcasts a single row") {
    VelocityField f = random_field(24);
    Tensor z = Tensor::matrix(2, 2, {0.2, 0.3, -0.1, 0.9});
    const std::vector<double> t = {0.5, 0.5};

    Tensor row = Tensor::row_vector({0.1, -0.2, 0.3, 0.4, 0.0, 0.6, -0.7, 0.8, 0.9, -1.0, 1.1,
                                     0.05, -0.15, 0.25, -0.35, 0.45});
    Tensor broadcast = f.forward_with_embedding(z, t, row);

    std::vector<double> two_rows;
    for (int rep = 0; rep < 2; ++rep)
        two_rows.insert(two_rows.end(), row.data().begin(), row.data().end());
    Tensor perrow = f.forward_with_embedding(z, t, Tensor::matrix(2, 16, two_rows));
    CHECK(broadcast.same_bits(perrow));
}

TEST_CASE("clone isolates parameter storage and freezes on request") {
    VelocityField f = random_field(31);
    f.metadata["note"] = "original";

    VelocityField frozen = f.clone(false);
    CHECK(frozen.metadata.at("note") == "original");
    for (const Tensor& p : frozen.parameters()) CHECK_FALSE(p.requires_grad());
    for (const Tensor& p : f.parameters()) CHECK(p.requires_grad());

    VelocityField copy = f.clone(true);
    for (const Tensor& p : copy.parameters()) CHECK(p.requires_grad());

    // Mutating the original must not leak into either clone.
    f.net.weights[0].data_mut()[0] += 100.0;
    CHECK(frozen.net.weights[0].at(0) != f.net.weights[0].at(0));
    CHECK(copy.net.weights[0].at(0) != f.net.weights[0].at(0));

    // Clones still evaluate identically to each other.
    Tensor z = Tensor::matrix(1, 2, {0.5, -0.5});
    CHECK(eval_velocity(frozen, z, 0.2, 3).same_bits(eval_velocity(copy, z, 0.2, 3)));
}

TEST_CASE("stage names round-trip and reject the CLI alias") {
    CHECK(stage_from_name("fm") == Stage::Fm);
    CHECK(stage_from_name("rf1") == Stage::Rf1);
    CHECK(stage_from_name("rf2") == Stage::Rf2);
    CHECK(stage_from_name("distilled") == Stage::Distilled);
    CHECK(stage_name(Stage::Rf2) == "rf2");
    CHECK_THROWS_AS(stage_from_name("distill"), ValueError);
    CHECK_THROWS_AS(stage_from_name(""), ValueError);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    VelocityField f = random_field(63);
    f.stage = Stage::Rf2;
    f.metadata = {{"task", "gauss8"}, {"seed", "63"}, {"init", "rf1"}};

    const auto path = temp_dir() / "field.rflow";
    save_checkpoint(f, path);
    VelocityField loaded = load_checkpoint(path);

    CHECK(loaded.stage == Stage::Rf2);
    CHECK(loaded.dim == f.dim);
    CHECK(loaded.time_embed_width == f.time_embed_width);
    CHECK(loaded.metadata == f.metadata);
    CHECK(loaded.net.widths == f.net.widths);
    CHECK(loaded.net.activation == f.net.activation);

    std::vector<Tensor> orig = f.parameters();
    std::vector<Tensor> back = loaded.parameters();
    REQUIRE(orig.size() == back.size());
    for (std::size_t i = 0; i < orig.size(); ++i) CHECK(back[i].same_bits(orig[i]));

    // File bytes are reproducible: save(load(x)) == x.
    const auto path2 = temp_dir() / "field2.rflow";
    save_checkpoint(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);

    // Loaded fields evaluate bitwise identically to the original.
    Tensor z = Tensor::matrix(1, 2, {0.25, -0.75});
    CHECK(eval_velocity(loaded, z, 0.5, 4).same_bits(eval_velocity(f, z, 0.5, 4)));
}

TEST_CASE("checkpoint corruption and absence are detected") {
    CHECK_THROWS_AS(load_checkpoint(temp_dir() / "missing.rflow"), Error);

    const auto garbage = temp_dir() / "garbage.rflow";
    std::ofstream(garbage) << "RFXXX not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(garbage), Error);

    VelocityField f = random_field(64);
    const auto path = temp_dir() / "truncate.rflow";
    save_checkpoint(f, path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
    CHECK_THROWS_AS(load_checkpoint(path), Error);
}

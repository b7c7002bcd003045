#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "lungpipe/core/rng.hpp"
#include "lungpipe/nn/adam.hpp"
#include "lungpipe/nn/checkpoint.hpp"
#include "lungpipe/nn/layers.hpp"
#include "lungpipe/nn/loss.hpp"

using lp::Rng;
using lp::Tensor;
using lp::TensorT;
namespace nn = lp::nn;
using nn::Mode;

namespace {

template <typename T>
TensorT<T> randn(Rng& rng, std::vector<int64_t> shape) {
    TensorT<T> t(shape);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal());
    return t;
}

}  // namespace

TEST_CASE("weighted bce reproduces the hand-computed scalar case") {
    TensorT<double> h({1}), y({1});
    h[0] = 0.5;
    y[0] = 1.0;
    auto r = nn::weighted_bce(h, y, 12.0);
    CHECK(r.loss == doctest::Approx(12.0 * std::log(2.0)).epsilon(1e-12));
    // d/dh of -12*log(h) at 0.5 is -24
    CHECK(r.grad[0] == doctest::Approx(-24.0).epsilon(1e-12));
}

TEST_CASE("weighted bce of a perfect prediction is negligible") {
    TensorT<double> h({4}), y({4});
    for (int i = 0; i < 4; ++i) {
        y[i] = i % 2;
        h[i] = y[i];
    }
    CHECK(nn::weighted_bce(h, y, 12.0).loss <= 1e-6);
}

TEST_CASE("weighted bce with w=1 is plain binary cross-entropy") {
    Rng rng(21);
    TensorT<double> h({50}), y({50});
    for (int64_t i = 0; i < 50; ++i) {
        h[i] = rng.uniform(0.02, 0.98);
        y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    double plain = 0;
    for (int64_t i = 0; i < 50; ++i)
        plain += y[i] * std::log(h[i]) + (1.0 - y[i]) * std::log(1.0 - h[i]);
    plain = -plain / 50.0;
    CHECK(nn::weighted_bce(h, y, 1.0).loss == doctest::Approx(plain).epsilon(1e-9));
}

TEST_CASE("weighted bce grows with the positive-class weight") {
    TensorT<double> h({3}), y({3});
    h[0] = 0.7;
    y[0] = 1.0;  // imperfect positive
    h[1] = 0.2;
    y[1] = 0.0;
    h[2] = 0.9;
    y[2] = 1.0;
    const double l1 = nn::weighted_bce(h, y, 1.0).loss;
    const double l3 = nn::weighted_bce(h, y, 3.0).loss;
    const double l12 = nn::weighted_bce(h, y, 12.0).loss;
    CHECK(l1 < l3);
    CHECK(l3 < l12);
}

TEST_CASE("weighted bce gradient matches central differences") {
    Rng rng(22);
    TensorT<double> h({12}), y({12}), w({12});
    for (int64_t i = 0; i < 12; ++i) {
        h[i] = rng.uniform(0.05, 0.95);
        y[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
        w[i] = i < 6 ? 3.0 : 1.0;  // mixed per-element weights
    }
    auto r = nn::weighted_bce(h, y, w);
    const double eps = 1e-7;
    for (int64_t i = 0; i < 12; ++i) {
        const double keep = h[i];
        h[i] = keep + eps;
        const double up = nn::weighted_bce(h, y, w).loss;
        h[i] = keep - eps;
        const double dn = nn::weighted_bce(h, y, w).loss;
        h[i] = keep;
        CHECK(r.grad[i] == doctest::Approx((up - dn) / (2 * eps)).epsilon(1e-5));
    }
}

TEST_CASE("dice coefficient: overlap arithmetic and the empty-empty case") {
    TensorT<float> a({4}), b({4});
    a[0] = 1;
    a[1] = 1;
    b[0] = 1;
    b[2] = 1;
    CHECK(nn::dice_coefficient(a, b) == doctest::Approx(0.5));
    CHECK(nn::dice_coefficient(a, a) == doctest::Approx(1.0));
    TensorT<float> z({4}), z2({4});
    CHECK(nn::dice_coefficient(z, z2) == doctest::Approx(1.0));
    TensorT<float> c({4});
    c[2] = 1;
    c[3] = 1;
    CHECK(nn::dice_coefficient(a, c) == doctest::Approx(0.0));
}

TEST_CASE("adam: zero gradient leaves parameters alone, moments decay") {
    TensorT<double> w({3}), g({3});
    w[0] = 1.0;
    w[1] = -2.0;
    w[2] = 0.5;
    nn::Adam<double> opt;
    std::vector<nn::ParamRef<double>> ps{{"w", &w, &g}};

    opt.step(ps);  // g = 0 from the start
    CHECK(w[0] == 1.0);
    CHECK(w[1] == -2.0);
    CHECK(w[2] == 0.5);

    g.fill(1.0);
    opt.step(ps);
    const double m_after = opt.m[0][0], v_after = opt.v[0][0];
    g.fill(0.0);
    opt.step(ps);
    CHECK(opt.m[0][0] == doctest::Approx(0.9 * m_after).epsilon(1e-15));
    CHECK(opt.v[0][0] == doctest::Approx(0.999 * v_after).epsilon(1e-15));
}

TEST_CASE("adam: first unit-gradient step moves each weight by about lr") {
    TensorT<double> w({4}), g({4});
    g.fill(1.0);
    nn::Adam<double> opt;  // lr 0.0001
    std::vector<nn::ParamRef<double>> ps{{"w", &w, &g}};
    opt.step(ps);
    for (int64_t i = 0; i < 4; ++i)
        CHECK(w[i] == doctest::Approx(-0.0001).epsilon(1e-6));
}

TEST_CASE("adam trajectory matches an independent scalar oracle") {
    TensorT<double> w({2}), g({2});
    w[0] = 0.3;
    w[1] = -0.7;
    nn::Adam<double> opt;
    opt.lr = 0.01;
    std::vector<nn::ParamRef<double>> ps{{"w", &w, &g}};

    // scalar re-implementation, independent arithmetic
    double sw[2] = {0.3, -0.7}, sm[2] = {0, 0}, sv[2] = {0, 0};
    Rng rng(23);
    for (int t = 1; t <= 7; ++t) {
        for (int i = 0; i < 2; ++i) g[i] = rng.normal();
        for (int i = 0; i < 2; ++i) {
            sm[i] = 0.9 * sm[i] + 0.1 * g[i];
            sv[i] = 0.999 * sv[i] + 0.001 * g[i] * g[i];
            const double mhat = sm[i] / (1.0 - std::pow(0.9, t));
            const double vhat = sv[i] / (1.0 - std::pow(0.999, t));
            sw[i] -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
        }
        opt.step(ps);
        CHECK(w[0] == doctest::Approx(sw[0]).epsilon(1e-12));
        CHECK(w[1] == doctest::Approx(sw[1]).epsilon(1e-12));
    }
}

TEST_CASE("checkpoint round-trip restores bit-identical behavior") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "lp_ckpt_test";
    fs::create_directories(dir);
    const std::string path = (dir / "net.ckpt").string();

    Rng rng(24);
    auto conv = nn::Conv2d<float>::make("conv", 2, 3, 3, 1, rng);
    auto bn = nn::BatchNorm<float>::make("bn", 3);
    bn.running_mean[1] = 0.25f;  // make the buffers non-trivial
    bn.running_var[2] = 2.0f;

    auto probe = randn<float>(rng, {1, 2, 6, 6});
    auto run = [&]() { return bn.forward(conv.forward(probe, Mode::infer), Mode::infer); };
    auto before = run();

    nn::CheckpointData ck;
    ck.step = 41;
    ck.seed = 9001;
    ck.specs = {conv.spec(), bn.spec()};
    auto grab = [&](auto& layer) {
        layer.visit_params([&](const std::string& n, Tensor& w, Tensor&) {
            ck.tensors.emplace_back(n, w);
        });
    };
    grab(conv);
    grab(bn);
    bn.visit_buffers([&](const std::string& n, Tensor& t) { ck.tensors.emplace_back(n, t); });
    nn::save_checkpoint(path, ck);

    // scramble the live model, then restore
    conv.w.fill(0.0f);
    bn.gamma.fill(5.0f);
    bn.running_mean.fill(-1.0f);
    auto loaded = nn::load_checkpoint(path);
    CHECK(loaded.step == 41);
    CHECK(loaded.seed == 9001);
    nn::require_specs_match({conv.spec(), bn.spec()}, loaded.specs, path);
    nn::restore_tensor(loaded, "conv.w", conv.w, path);
    nn::restore_tensor(loaded, "conv.b", conv.b, path);
    nn::restore_tensor(loaded, "bn.gamma", bn.gamma, path);
    nn::restore_tensor(loaded, "bn.beta", bn.beta, path);
    nn::restore_tensor(loaded, "bn.running_mean", bn.running_mean, path);
    nn::restore_tensor(loaded, "bn.running_var", bn.running_var, path);

    auto after = run();
    CHECK(std::memcmp(before.data(), after.data(),
                      sizeof(float) * static_cast<size_t>(before.size())) == 0);
}

TEST_CASE("checkpoint rejects garbage, truncation, and mismatched layers") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "lp_ckpt_test";
    fs::create_directories(dir);

    const std::string junk = (dir / "junk.ckpt").string();
    {
        std::ofstream os(junk, std::ios::binary);
        os << "definitely not a checkpoint";
    }
    CHECK_THROWS_AS(nn::load_checkpoint(junk), lp::IoError);

    // a valid checkpoint, then cut in half
    Rng rng(25);
    auto conv = nn::Conv2d<float>::make("c", 2, 2, 3, 1, rng);
    nn::CheckpointData ck;
    ck.specs = {conv.spec()};
    conv.visit_params(
        [&](const std::string& n, Tensor& w, Tensor&) { ck.tensors.emplace_back(n, w); });
    const std::string whole = (dir / "whole.ckpt").string();
    nn::save_checkpoint(whole, ck);

    const std::string cut = (dir / "cut.ckpt").string();
    {
        std::ifstream is(whole, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        std::ofstream os(cut, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(nn::load_checkpoint(cut), lp::IoError);

    auto loaded = nn::load_checkpoint(whole);
    auto other = nn::Conv2d<float>::make("c", 2, 4, 3, 1, rng);
    CHECK_THROWS_WITH_AS(nn::require_specs_match({other.spec()}, loaded.specs, whole),
                         doctest::Contains("layer 0"), lp::IoError);
    Tensor wrong({4, 2, 3, 3});
    CHECK_THROWS_AS(nn::restore_tensor(loaded, "c.w", wrong, whole), lp::IoError);
    Tensor missing({1});
    CHECK_THROWS_AS(nn::restore_tensor(loaded, "nope", missing, whole), lp::IoError);
}

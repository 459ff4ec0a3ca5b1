#include "flowmoe/error.hpp"
#include "flowmoe/nn.hpp"
#include "flowmoe/random.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace flowmoe;
using nn::Matrix;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) x(i, j) = rng.normal(0.0, 1.0);
    return x;
}

std::vector<int> random_labels(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.index(2));
    return y;
}

// Mean cross-entropy evaluated from scratch.
double batch_loss(const nn::MlpModel& m, const Matrix& x, const std::vector<int>& y) {
    const Matrix p = nn::mlp_forward(m, x);
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double row[2] = {p(i, 0), p(i, 1)};
        s += nn::cross_entropy(row, y[static_cast<std::size_t>(i)]);
    }
    return s / static_cast<double>(p.rows());
}

}  // namespace

TEST_CASE("init shapes, zero biases and determinism") {
    const std::size_t dims[] = {4, 2};
    const auto m = nn::mlp_init(dims, 7);
    REQUIRE(m.weights.size() == 1);
    CHECK(m.weights[0].rows() == 2);
    CHECK(m.weights[0].cols() == 4);
    CHECK(m.biases[0].isZero());

    const std::size_t deep[] = {4, 8, 2};
    CHECK(nn::mlp_init(deep, 7) == nn::mlp_init(deep, 7));
    CHECK_FALSE(nn::mlp_init(deep, 7) == nn::mlp_init(deep, 8));

    const std::size_t one[] = {4};
    CHECK_THROWS_AS(nn::mlp_init(one, 7), DimensionError);
    const std::size_t zero[] = {4, 0, 2};
    CHECK_THROWS_AS(nn::mlp_init(zero, 7), DimensionError);
}

TEST_CASE("glorot bounds hold per layer") {
    const std::size_t dims[] = {16, 32, 2};
    const auto m = nn::mlp_init(dims, 3);
    for (std::size_t k = 0; k < m.layer_count(); ++k) {
        const double limit = std::sqrt(6.0 / static_cast<double>(dims[k] + dims[k + 1]));
        CHECK(m.weights[k].cwiseAbs().maxCoeff() <= limit);
    }
}

TEST_CASE("zero-weight model predicts one half") {
    const std::size_t dims[] = {3, 5, 2};
    const auto m = nn::mlp_zero(dims);
    const Matrix p = nn::mlp_forward(m, random_matrix(7, 3, 1));
    REQUIRE(p.rows() == 7);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        CHECK(p(i, 0) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(p(i, 1) == doctest::Approx(0.5).epsilon(1e-15));
    }
}

TEST_CASE("hand-set linear model matches manual softmax") {
    const std::size_t dims[] = {2, 2};
    auto m = nn::mlp_zero(dims);
    m.weights[0] << 1.0, 2.0, -0.5, 3.0;
    m.biases[0] << 0.25, -1.0;
    Matrix x(1, 2);
    x << 1.0, 0.0;
    // logits 1.25 and -1.5
    const double e0 = std::exp(1.25), e1 = std::exp(-1.5);
    const Matrix p = nn::mlp_forward(m, x);
    CHECK(std::abs(p(0, 0) - e0 / (e0 + e1)) < 1e-12);
    CHECK(std::abs(p(0, 1) - e1 / (e0 + e1)) < 1e-12);
}

TEST_CASE("forward rows sum to one for extreme inputs") {
    const std::size_t dims[] = {6, 16, 2};
    const auto m = nn::mlp_init(dims, 11);
    Matrix x = random_matrix(50, 6, 2) * 1e3;
    const Matrix p = nn::mlp_forward(m, x);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-9);
        CHECK(std::isfinite(p(i, 0)));
    }
    CHECK_THROWS_AS(nn::mlp_forward(m, random_matrix(2, 5, 1)), DimensionError);
}

TEST_CASE("cross entropy values and clamping") {
    const double uniform[] = {0.5, 0.5};
    CHECK(nn::cross_entropy(uniform, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    const double sure[] = {1.0, 0.0};
    CHECK(nn::cross_entropy(sure, 0) < 1e-11);
    CHECK(nn::cross_entropy(sure, 1) == doctest::Approx(-std::log(1e-12)));
    const double p[] = {0.9, 0.1};
    CHECK(nn::cross_entropy(p, 1) == doctest::Approx(2.302585092994046).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central differences") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const std::size_t dims[] = {5, 7, 6, 2};
        auto m = nn::mlp_init(dims, seed, seed == 2 ? nn::Activation::tanh : nn::Activation::relu);
        const Matrix x = random_matrix(9, 5, seed + 10);
        const auto y = random_labels(9, seed + 20);
        const nn::Gradients g = nn::mlp_backward(m, x, y);
        const double h = 1e-5;
        for (std::size_t k = 0; k < m.layer_count(); ++k) {
            for (Eigen::Index i = 0; i < m.weights[k].size(); ++i) {
                double& w = m.weights[k].data()[i];
                const double keep = w;
                w = keep + h;
                const double up = batch_loss(m, x, y);
                w = keep - h;
                const double down = batch_loss(m, x, y);
                w = keep;
                const double fd = (up - down) / (2 * h);
                const double an = g.weights[k].data()[i];
                CHECK(std::abs(fd - an) <= 1e-4 * std::max(1e-3, std::abs(fd) + std::abs(an)));
            }
            for (Eigen::Index i = 0; i < m.biases[k].size(); ++i) {
                double& b = m.biases[k][i];
                const double keep = b;
                b = keep + h;
                const double up = batch_loss(m, x, y);
                b = keep - h;
                const double down = batch_loss(m, x, y);
                b = keep;
                const double fd = (up - down) / (2 * h);
                CHECK(std::abs(fd - g.biases[k][i]) <= 1e-4 * std::max(1e-3, std::abs(fd) + std::abs(g.biases[k][i])));
            }
        }
    }
}

TEST_CASE("input gradient matches central differences") {
    const std::size_t dims[] = {4, 8, 2};
    const auto m = nn::mlp_init(dims, 5, nn::Activation::tanh);
    Matrix x = random_matrix(3, 4, 6);
    const auto y = random_labels(3, 7);
    const auto lg = nn::loss_and_grad(m, x, y, {}, true);
    REQUIRE(lg.grads.input.rows() == 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double keep = x.data()[i];
        x.data()[i] = keep + 1e-5;
        const double up = batch_loss(m, x, y);
        x.data()[i] = keep - 1e-5;
        const double down = batch_loss(m, x, y);
        x.data()[i] = keep;
        const double fd = (up - down) / 2e-5;
        CHECK(std::abs(fd - lg.grads.input.data()[i]) <= 1e-4 * std::max(1e-3, std::abs(fd)));
    }
}

TEST_CASE("weighted loss: unit weights equal the plain mean, zero weights drop rows") {
    const std::size_t dims[] = {3, 4, 2};
    const auto m = nn::mlp_init(dims, 9);
    const Matrix x = random_matrix(6, 3, 1);
    const auto y = random_labels(6, 2);
    const auto plain = nn::loss_and_grad(m, x, y);
    const std::vector<double> ones(6, 1.0);
    const auto unit = nn::loss_and_grad(m, x, y, ones);
    CHECK(plain.loss == doctest::Approx(unit.loss).epsilon(1e-14));

    std::vector<double> w(6, 0.0);
    w[2] = 1.0;
    const auto only = nn::loss_and_grad(m, x, y, w);
    const auto single = nn::loss_and_grad(m, x.middleRows(2, 1), std::vector<int>{y[2]});
    CHECK(only.loss == doctest::Approx(single.loss).epsilon(1e-14));
    CHECK(only.grads.weights[0].isApprox(single.grads.weights[0], 1e-12));

    CHECK_THROWS_AS(nn::loss_and_grad(m, x, y, std::vector<double>(6, 0.0)), TrainingError);
}

TEST_CASE("duplicated rows give the single-row gradient") {
    const std::size_t dims[] = {3, 4, 2};
    const auto m = nn::mlp_init(dims, 4);
    const Matrix one = random_matrix(1, 3, 8);
    Matrix twice(3, 3);
    twice << one, one, one;
    const auto g1 = nn::mlp_backward(m, one, std::vector<int>{1});
    const auto g3 = nn::mlp_backward(m, twice, std::vector<int>{1, 1, 1});
    for (std::size_t k = 0; k < m.layer_count(); ++k) {
        CHECK(g1.weights[k].isApprox(g3.weights[k], 1e-12));
        CHECK(g1.biases[k].isApprox(g3.biases[k], 1e-12));
    }
}

TEST_CASE("optimizer steps") {
    const std::size_t dims[] = {1, 1};
    auto m = nn::mlp_zero(dims);
    m.weights[0](0, 0) = 1.0;
    auto g = nn::Gradients::zeros_like(m);
    g.weights[0](0, 0) = 1.0;
    nn::sgd_step(m, g, 0.1);
    CHECK(m.weights[0](0, 0) == doctest::Approx(0.9).epsilon(1e-15));

    const auto before = m;
    nn::sgd_step(m, g, 0.0);
    CHECK(m == before);
    nn::sgd_step(m, nn::Gradients::zeros_like(m), 0.5);
    CHECK(m == before);

    nn::TrainConfig tc;
    nn::Optimizer adam(tc);
    adam.step(m, nn::Gradients::zeros_like(m));
    CHECK(m == before);

    auto bad = g;
    bad.weights[0](0, 0) = std::nan("");
    CHECK_THROWS_AS(adam.step(m, bad), TrainingError);
    CHECK(m == before);
}

TEST_CASE("adam first step moves each parameter by the learning rate") {
    // Bias-corrected first step: m_hat = g, v_hat = g^2, so delta = lr * g / (|g| + eps).
    const std::size_t dims[] = {2, 2};
    auto m = nn::mlp_zero(dims);
    auto g = nn::Gradients::zeros_like(m);
    g.weights[0] << 0.3, -2.0, 5.0, 0.0;
    nn::AdamOptimizer adam;
    adam.step(m, g, 0.01);
    CHECK(m.weights[0](0, 0) == doctest::Approx(-0.01 * 0.3 / (0.3 + 1e-8)));
    CHECK(m.weights[0](0, 1) == doctest::Approx(0.01 * 2.0 / (2.0 + 1e-8)));
    CHECK(m.weights[0](1, 1) == 0.0);
}

TEST_CASE("loss decreases on a separable toy set") {
    Rng rng(42);
    Matrix x(200, 2);
    std::vector<int> y(200);
    for (int i = 0; i < 200; ++i) {
        y[i] = i % 2;
        x(i, 0) = rng.normal(y[i] ? 2.0 : -2.0, 0.5);
        x(i, 1) = rng.normal(0.0, 1.0);
    }
    const std::size_t dims[] = {2, 8, 2};
    auto m = nn::mlp_init(dims, 1);
    nn::TrainConfig tc;
    tc.learning_rate = 0.05;
    nn::Optimizer opt(tc);
    std::vector<double> losses;
    for (int epoch = 0; epoch < 10; ++epoch) {
        auto lg = nn::loss_and_grad(m, x, y);
        losses.push_back(lg.loss);
        opt.step(m, lg.grads);
    }
    // moving average of width 3
    for (std::size_t i = 3; i + 2 < losses.size(); ++i) {
        const double prev = (losses[i - 3] + losses[i - 2] + losses[i - 1]) / 3;
        const double cur = (losses[i - 2] + losses[i - 1] + losses[i]) / 3;
        CHECK(cur < prev);
    }
    CHECK(losses.back() < losses.front());
}

TEST_CASE("training is bit-reproducible") {
    auto run = [] {
        const std::size_t dims[] = {4, 8, 2};
        auto m = nn::mlp_init(dims, 3);
        const Matrix x = random_matrix(32, 4, 4);
        const auto y = random_labels(32, 5);
        nn::TrainConfig tc;
        nn::Optimizer opt(tc);
        for (int i = 0; i < 20; ++i) opt.step(m, nn::loss_and_grad(m, x, y).grads);
        return m;
    };
    CHECK(run() == run());
}

TEST_CASE("latent equals the penultimate activation") {
    const std::size_t dims[] = {3, 5, 4, 2};
    const auto m = nn::mlp_init(dims, 12);
    const Matrix x = random_matrix(4, 3, 13);
    const auto cache = nn::forward_cached(m, x);
    const Matrix z = nn::mlp_latent(m, x);
    CHECK(z.cols() == 4);
    CHECK(z.isApprox(cache.activations.back(), 1e-15));
}

TEST_CASE("model serialization round-trips bit-exactly") {
    const std::size_t dims[] = {7, 9, 2};
    const auto m = nn::mlp_init(dims, 21, nn::Activation::tanh);
    const std::string bytes = nn::serialize_model(m);
    CHECK(bytes.substr(0, 4) == "FMOE");
    CHECK(nn::deserialize_model(bytes) == m);

    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(nn::deserialize_model(bad), FormatError);
    std::string version = bytes;
    version[4] = 9;
    CHECK_THROWS_AS(nn::deserialize_model(version), FormatError);
    CHECK_THROWS_AS(nn::deserialize_model(bytes.substr(0, bytes.size() - 3)), FormatError);
}

TEST_CASE("train config validation") {
    nn::TrainConfig tc;
    CHECK_NOTHROW(tc.validate());
    tc.learning_rate = 0.0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc = {};
    tc.batch_size = 0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc = {};
    tc.optimizer = "rmsprop";
    CHECK_THROWS_AS(tc.validate(), ConfigError);
}

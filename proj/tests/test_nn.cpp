#include "doctest.h"

#include <cmath>

#include "nn_oracle.hpp"
#include "slicing/error.hpp"
#include "slicing/nn.hpp"

using namespace slicing;
using namespace slicing::nn;

TEST_CASE("identity network passes input through") {
    Layer l{Matrix::Identity(3, 3), Vector::Zero(3), Activation::Identity};
    DenseNet net({l});
    Vector x(3);
    x << 0.5, -2.0, 7.0;
    CHECK(net.forward(x).isApprox(x));
}

TEST_CASE("zero sigmoid layer outputs one half") {
    Layer l{Matrix::Zero(2, 4), Vector::Zero(2), Activation::Sigmoid};
    DenseNet net({l});
    const Vector y = net.forward(Vector::Random(4).eval());
    CHECK(y(0) == 0.5);
    CHECK(y(1) == 0.5);
}

TEST_CASE("forward is pure") {
    Rng rng(1);
    const auto net = DenseNet::make({2, 8, 8, 1}, Activation::Relu, Activation::Sigmoid, rng);
    const Matrix x = Matrix::Random(2, 5);
    CHECK(net.forward(x) == net.forward(x));
    ForwardCache cache;
    CHECK(net.forward(x, cache) == net.forward(x));
}

TEST_CASE("dimension mismatch and bad shapes throw") {
    Rng rng(1);
    const auto net = DenseNet::make({2, 4, 1}, Activation::Relu, Activation::Identity, rng);
    CHECK_THROWS_AS(net.forward(Vector::Zero(3).eval()), ContractError);
    Layer a{Matrix::Zero(4, 2), Vector::Zero(4), Activation::Relu};
    Layer b{Matrix::Zero(1, 3), Vector::Zero(1), Activation::Identity};
    CHECK_THROWS_AS(DenseNet({a, b}), ContractError);
}

TEST_CASE("scalar linear net gradients") {
    Layer l{Matrix::Constant(1, 1, 2.5), Vector::Zero(1), Activation::Identity};
    DenseNet net({l});
    ForwardCache cache;
    net.forward(Matrix::Constant(1, 1, 4.0), cache);
    const auto back = net.backward(cache, Matrix::Ones(1, 1));
    CHECK(back.grads.weights[0](0, 0) == 4.0);
    CHECK(back.input_grad(0, 0) == 2.5);
}

TEST_CASE("zero seed gives an all-zero tape") {
    Rng rng(2);
    const auto net = DenseNet::make({3, 5, 2}, Activation::Sigmoid, Activation::Identity, rng);
    ForwardCache cache;
    net.forward(Matrix::Random(3, 4), cache);
    const auto back = net.backward(cache, Matrix::Zero(2, 4));
    CHECK(back.grads.all_zero());
    CHECK(back.input_grad.isZero());
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        CHECK(back.grads.weights[i].rows() == net.layers()[i].weights.rows());
        CHECK(back.grads.weights[i].cols() == net.layers()[i].weights.cols());
        CHECK(back.grads.biases[i].size() == net.layers()[i].biases.size());
    }
}

TEST_CASE("stale cache is rejected") {
    Rng rng(3);
    auto net = DenseNet::make({2, 3, 1}, Activation::Relu, Activation::Identity, rng);
    auto other = net;
    ForwardCache cache;
    net.forward(Matrix::Random(2, 2), cache);
    CHECK_THROWS_AS(other.backward(cache, Matrix::Ones(1, 2)), ContractError);
    net.apply_update(net.zero_gradients());
    CHECK_THROWS_AS(net.backward(cache, Matrix::Ones(1, 2)), ContractError);
}

TEST_CASE("backprop matches central finite differences") {
    Rng rng(2024);
    const Activation acts[] = {Activation::Relu, Activation::Sigmoid, Activation::Identity};
    std::uniform_int_distribution<int> layers_d(1, 3), width_d(1, 6), act_d(0, 2), batch_d(1, 4);
    for (int trial = 0; trial < 120; ++trial) {
        std::vector<int> sizes{width_d(rng)};
        const int n_layers = layers_d(rng);
        for (int l = 0; l < n_layers; ++l)
            sizes.push_back(width_d(rng));
        const auto net = DenseNet::make(sizes, acts[act_d(rng)], acts[act_d(rng)], rng);
        const Matrix x = test::random_matrix(sizes.front(), batch_d(rng), rng);
        const Matrix seed = test::random_matrix(sizes.back(), x.cols(), rng);

        const auto err = test::gradient_check(net, x, seed, 1e-5);
        CHECK_MESSAGE(err.params < 1e-5, "trial " << trial);
        CHECK_MESSAGE(err.input < 1e-5, "trial " << trial);
    }
}

TEST_CASE("adam leaves parameters alone on a zero gradient") {
    Rng rng(5);
    auto net = DenseNet::make({2, 4, 1}, Activation::Relu, Activation::Identity, rng);
    const auto before = net.layers();
    Optimizer opt(net, 1e-2);
    opt.step(net, net.zero_gradients());
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(net.layers()[i].weights == before[i].weights);
        CHECK(net.layers()[i].biases == before[i].biases);
    }
}

namespace {

DenseNet scalar_param(double w) {
    return DenseNet({Layer{Matrix::Constant(1, 1, w), Vector::Zero(1), Activation::Identity}});
}

Gradients scalar_grad(double g) {
    Gradients grads;
    grads.weights.push_back(Matrix::Constant(1, 1, g));
    grads.biases.push_back(Vector::Zero(1));
    return grads;
}

} // namespace

TEST_CASE("adam steps against a positive gradient") {
    auto net = scalar_param(1.0);
    Optimizer opt(net, 1e-2);
    opt.step(net, scalar_grad(0.3));
    CHECK(net.layers()[0].weights(0, 0) < 1.0);
}

TEST_CASE("adam converges on a quadratic bowl") {
    auto net = scalar_param(0.0);
    Optimizer opt(net, 1e-2);
    for (int i = 0; i < 500; ++i) {
        const double w = net.layers()[0].weights(0, 0);
        opt.step(net, scalar_grad(2.0 * (w - 3.0)));
    }
    CHECK(std::abs(net.layers()[0].weights(0, 0) - 3.0) < 1e-2);
}

TEST_CASE("sgd follows the clipped gradient") {
    auto net = scalar_param(0.0);
    Optimizer opt(net, 0.1, OptimizerKind::Sgd, 1.0);
    const double norm = opt.step(net, scalar_grad(5.0));
    CHECK(norm == 5.0);
    CHECK(net.layers()[0].weights(0, 0) == doctest::Approx(-0.1));
}

TEST_CASE("non-finite gradients abort the step") {
    auto net = scalar_param(0.0);
    Optimizer opt(net, 0.1);
    CHECK_THROWS_AS(opt.step(net, scalar_grad(std::nan(""))), NumericError);
}

TEST_CASE("soft update") {
    auto target = scalar_param(0.0);
    const auto online = scalar_param(2.0);

    auto t1 = target;
    soft_update(t1, online, 1.0);
    CHECK(t1.layers()[0].weights(0, 0) == 2.0);

    auto t0 = target;
    soft_update(t0, online, 0.0);
    CHECK(t0.layers()[0].weights(0, 0) == 0.0);

    auto half = target;
    soft_update(half, online, 0.5);
    CHECK(half.layers()[0].weights(0, 0) == 1.0);

    CHECK_THROWS_AS(soft_update(half, online, 1.5), ContractError);
    Rng rng(1);
    auto wide = DenseNet::make({1, 3, 1}, Activation::Relu, Activation::Identity, rng);
    CHECK_THROWS_AS(soft_update(wide, online, 0.5), ContractError);
}

TEST_CASE("repeated soft updates contract geometrically") {
    Rng rng(6);
    auto target = DenseNet::make({2, 4, 1}, Activation::Relu, Activation::Identity, rng);
    const auto online = DenseNet::make({2, 4, 1}, Activation::Relu, Activation::Identity, rng);
    const double rate = 0.1;
    auto distance = [&] {
        double d = 0;
        for (std::size_t i = 0; i < online.layers().size(); ++i)
            d += (target.layers()[i].weights - online.layers()[i].weights).squaredNorm() +
                 (target.layers()[i].biases - online.layers()[i].biases).squaredNorm();
        return std::sqrt(d);
    };
    double prev = distance();
    for (int k = 0; k < 30; ++k) {
        soft_update(target, online, rate);
        const double now = distance();
        CHECK(now == doctest::Approx(prev * (1.0 - rate)).epsilon(1e-9));
        prev = now;
    }
}

TEST_CASE("training keeps parameters finite under bounded data") {
    Rng rng(9);
    auto net = DenseNet::make({3, 16, 16, 1}, Activation::Relu, Activation::Identity, rng);
    Optimizer opt(net, 5e-3);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int step = 0; step < 500; ++step) {
        const Matrix x = test::random_matrix(3, 32, rng);
        Matrix y(1, 32);
        for (int j = 0; j < 32; ++j)
            y(0, j) = 20.0 * u(rng);
        ForwardCache cache;
        const Matrix q = net.forward(x, cache);
        opt.step(net, net.backward(cache, (2.0 / 32) * (q - y)).grads);
        REQUIRE(net.finite());
    }
}

TEST_CASE("checkpoint json round-trips losslessly") {
    Rng rng(10);
    auto net = DenseNet::make({3, 7, 2}, Activation::Sigmoid, Activation::Relu, rng);
    Optimizer opt(net, 1e-3);
    ForwardCache cache;
    net.forward(test::random_matrix(3, 4, rng), cache);
    opt.step(net, net.backward(cache, Matrix::Ones(2, 4)).grads);

    const auto text = nlohmann::json{{"net", net.to_json()}, {"opt", opt.to_json()}}.dump();
    const auto parsed = nlohmann::json::parse(text);
    const auto back = DenseNet::from_json(parsed.at("net"));
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        CHECK(back.layers()[i].weights == net.layers()[i].weights);
        CHECK(back.layers()[i].biases == net.layers()[i].biases);
        CHECK(back.layers()[i].activation == net.layers()[i].activation);
    }
    CHECK(Optimizer::from_json(parsed.at("opt")).to_json() == opt.to_json());
}

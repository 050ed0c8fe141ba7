#include <catch_amalgamated.hpp>

#include <cmath>

#include "aput/nn.hpp"
#include "aput/random.hpp"

using namespace aput;
using Catch::Approx;

namespace {

// Central finite differences of a scalar loss over every parameter.
template <typename LossFn>
double max_grad_rel_error(DenseNet& net, const GradientBundle& analytic, LossFn loss,
                          double h = 1e-5) {
    double worst = 0.0;
    auto probe = [&](double& param, double analytic_g) {
        const double saved = param;
        param = saved + h;
        const double up = loss(net);
        param = saved - h;
        const double down = loss(net);
        param = saved;
        const double fd = (up - down) / (2.0 * h);
        const double rel =
            std::abs(fd - analytic_g) / std::max({std::abs(fd), std::abs(analytic_g), 1e-6});
        worst = std::max(worst, rel);
    };
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        for (std::size_t i = 0; i < net.weights[l].size(); ++i)
            probe(net.weights[l][i], analytic.weights[l][i]);
        for (std::size_t i = 0; i < net.biases[l].size(); ++i)
            probe(net.biases[l][i], analytic.biases[l][i]);
    }
    return worst;
}

} // namespace

TEST_CASE("zero-initialized softmax is uniform") {
    auto net = DenseNet::make({3, 4, 5}, Head::Softmax, 1);
    for (auto& w : net.weights) std::fill(w.begin(), w.end(), 0.0);
    const auto out = forward(net, std::vector<double>{0.3, -0.7, 2.0});
    for (double v : out) CHECK(v == Approx(0.2).margin(1e-15));
}

TEST_CASE("identity single layer passes the input through") {
    DenseNet net;
    net.layer_sizes = {2, 2};
    net.head = Head::Linear;
    net.weights = {{1.0, 0.0, 0.0, 1.0}};
    net.biases = {{0.0, 0.0}};
    const auto out = forward(net, std::vector<double>{0.25, -1.5});
    CHECK(out[0] == 0.25);
    CHECK(out[1] == -1.5);
}

TEST_CASE("hand-stepped 2-3-2 softmax net") {
    DenseNet net;
    net.layer_sizes = {2, 3, 2};
    net.head = Head::Softmax;
    net.leaky_slope = 0.01;
    net.weights = {{0.2, -0.4, 0.5, 0.1, -0.3, 0.7}, {1.0, -0.5, 0.25, -0.75, 0.3, 0.5}};
    net.biases = {{0.1, -0.2, 0.05}, {0.05, -0.1}};
    const auto out = forward(net, std::vector<double>{0.5, -1.0});
    // hand-stepped: hidden pre (0.6, -0.05, -0.8), leaky -> (0.6, -5e-4, -8e-3),
    // logits (0.64825, -0.55415), softmax frozen below
    CHECK(out[0] == Approx(0.76895145497928719).margin(1e-14));
    CHECK(out[1] == Approx(0.23104854502071281).margin(1e-14));
}

TEST_CASE("forward is pure and deterministic") {
    const auto net = DenseNet::make({4, 8, 3}, Head::Softmax, 9);
    const std::vector<double> x{0.1, -0.2, 0.3, -0.4};
    const auto a = forward(net, x);
    const auto b = forward(net, x);
    CHECK(a == b);
    CHECK_THROWS_AS(forward(net, std::vector<double>{1.0}), UsageError);
}

TEST_CASE("softmax head is invariant to logit shifts and strictly positive") {
    auto net = DenseNet::make({3, 4}, Head::Softmax, 3);
    const std::vector<double> x{0.5, 1.5, -0.25};
    const auto base = forward(net, x);
    double sum = 0.0;
    for (double v : base) {
        CHECK(v > 0.0);
        sum += v;
    }
    CHECK(sum == Approx(1.0).margin(1e-10));
    for (double& b : net.biases[0]) b += 3.7; // shift all logits
    const auto shifted = forward(net, x);
    for (std::size_t i = 0; i < base.size(); ++i)
        CHECK(shifted[i] == Approx(base[i]).margin(1e-12));
}

TEST_CASE("parameter count") {
    const auto net = DenseNet::make({10, 256, 256, 5}, Head::Softmax, 1);
    CHECK(net.param_count() == (10 + 1) * 256 + (256 + 1) * 256 + (256 + 1) * 5);
}

TEST_CASE("zero upstream gradient gives a zero bundle") {
    const auto net = DenseNet::make({3, 5, 2}, Head::Softmax, 2);
    const std::vector<double> x{0.2, -0.1, 0.4};
    const auto tr = forward_trace(net, x);
    const auto g = backward(net, tr, std::vector<double>{0.0, 0.0});
    CHECK(global_norm(g) == 0.0);
}

TEST_CASE("single linear neuron, squared loss, closed form") {
    DenseNet net;
    net.layer_sizes = {1, 1};
    net.head = Head::Linear;
    net.weights = {{0.7}};
    net.biases = {{-0.3}};
    const double x = 1.4, y = 2.0;
    const auto tr = forward_trace(net, std::vector<double>{x});
    const double pred = tr.output[0];
    // L = (wx + b - y)^2, dL/dw = 2(wx+b-y)x, dL/db = 2(wx+b-y)
    const auto g = backward(net, tr, std::vector<double>{2.0 * (pred - y)});
    CHECK(g.weights[0][0] == Approx(2.0 * (0.7 * x - 0.3 - y) * x).margin(1e-14));
    CHECK(g.biases[0][0] == Approx(2.0 * (0.7 * x - 0.3 - y)).margin(1e-14));
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        auto net = DenseNet::make({4, 6, 5, 3}, Head::Softmax, 100 + trial);
        std::vector<double> x(4);
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
        const int target = rng.uniform_int(3);

        // cross-entropy loss -log y_target
        auto loss = [&](const DenseNet& n) {
            return -std::log(forward(n, x)[target]);
        };
        const auto tr = forward_trace(net, x);
        std::vector<double> up(3, 0.0);
        up[target] = -1.0 / tr.output[target];
        const auto g = backward(net, tr, up);
        CHECK(max_grad_rel_error(net, g, loss) < 1e-4);
    }

    for (int trial = 0; trial < 10; ++trial) {
        auto net = DenseNet::make({5, 8, 1}, Head::Linear, 300 + trial);
        std::vector<double> x(5);
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
        const double y = rng.uniform(-2.0, 2.0);
        auto loss = [&](const DenseNet& n) {
            const double d = forward(n, x)[0] - y;
            return d * d;
        };
        const auto tr = forward_trace(net, x);
        const auto g = backward(net, tr, std::vector<double>{2.0 * (tr.output[0] - y)});
        CHECK(max_grad_rel_error(net, g, loss) < 1e-4);
    }
}

TEST_CASE("sgd step") {
    auto net = DenseNet::make({2, 2}, Head::Linear, 5);
    const auto before = net.weights[0];
    sgd_step(net, GradientBundle::zeros_like(net), 0.5);
    CHECK(net.weights[0] == before);

    GradientBundle g = GradientBundle::zeros_like(net);
    g.weights[0][0] = 2.0;
    auto net2 = net;
    sgd_step(net2, g, 0.0);
    CHECK(net2.weights[0] == net.weights[0]);

    const double w0 = net.weights[0][0];
    sgd_step(net, g, 0.1);
    CHECK(net.weights[0][0] == Approx(w0 - 0.2).margin(1e-15));
}

TEST_CASE("global norm clipping rescales large gradients") {
    auto net = DenseNet::make({1, 1}, Head::Linear, 5);
    GradientBundle g = GradientBundle::zeros_like(net);
    g.weights[0][0] = 30.0;
    g.biases[0][0] = 40.0; // norm 50
    const double w0 = net.weights[0][0];
    sgd_step(net, g, 1.0, 5.0);
    // clipped to norm 5: step = 5 * (30/50) = 3
    CHECK(net.weights[0][0] == Approx(w0 - 3.0).margin(1e-12));
}

TEST_CASE("initialization is seeded and in range") {
    const auto a = DenseNet::make({6, 7, 2}, Head::Linear, 42);
    const auto b = DenseNet::make({6, 7, 2}, Head::Linear, 42);
    const auto c = DenseNet::make({6, 7, 2}, Head::Linear, 43);
    CHECK(a.weights == b.weights);
    CHECK(a.weights != c.weights);
    const double bound0 = std::sqrt(6.0 / (6 + 7));
    for (double w : a.weights[0]) CHECK(std::abs(w) <= bound0);
    for (double v : a.biases[0]) CHECK(v == 0.0);
}

TEST_CASE("net json round trip") {
    const auto net = DenseNet::make({3, 4, 2}, Head::Softmax, 77);
    const auto net2 = net_from_json(net_to_json(net));
    CHECK(net2.weights == net.weights);
    CHECK(net2.biases == net.biases);
    CHECK(net2.layer_sizes == net.layer_sizes);
    CHECK(net2.head == net.head);
    const std::vector<double> x{0.1, 0.2, 0.3};
    CHECK(forward(net, x) == forward(net2, x));
}

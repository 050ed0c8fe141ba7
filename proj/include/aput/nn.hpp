#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "aput/errors.hpp"
#include "aput/random.hpp"

namespace aput {

enum class Head { Softmax, Linear };

/// Minimal dense feedforward net: affine layers with Leaky-ReLU between
/// them, then either a softmax or a plain linear output. Weights are stored
/// row-major (n_out x n_in) per layer.
struct DenseNet {
    std::vector<int> layer_sizes; // input size first, output size last
    Head head = Head::Linear;
    double leaky_slope = 0.01;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    int n_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (int l = 0; l < n_layers(); ++l)
            n += static_cast<std::size_t>(layer_sizes[l] + 1) * layer_sizes[l + 1];
        return n;
    }

    /// Seeded init: weights uniform in +-sqrt(6/(n_in+n_out)), biases zero.
    static DenseNet make(std::vector<int> sizes, Head head, std::uint64_t seed,
                         double leaky_slope = 0.01) {
        if (sizes.size() < 2) throw ConfigError("DenseNet needs at least input and output sizes");
        for (int s : sizes)
            if (s < 1) throw ConfigError("DenseNet layer sizes must be positive");
        DenseNet net;
        net.layer_sizes = std::move(sizes);
        net.head = head;
        net.leaky_slope = leaky_slope;
        Rng rng(seed);
        for (int l = 0; l < net.n_layers(); ++l) {
            const int n_in = net.layer_sizes[l];
            const int n_out = net.layer_sizes[l + 1];
            const double bound = std::sqrt(6.0 / (n_in + n_out));
            std::vector<double> w(static_cast<std::size_t>(n_in) * n_out);
            for (double& v : w) v = rng.uniform(-bound, bound);
            net.weights.push_back(std::move(w));
            net.biases.emplace_back(n_out, 0.0);
        }
        return net;
    }
};

/// Cached activations from one forward pass, as needed by backward().
struct ForwardTrace {
    std::vector<std::vector<double>> acts;    // acts[0] = input, acts[l+1] = layer l output
    std::vector<std::vector<double>> preacts; // pre-activation per layer
    std::vector<double> output;               // post-head
};

namespace detail {
inline void affine(std::span<const double> w, std::span<const double> b,
                   std::span<const double> x, std::vector<double>& out) {
    const std::size_t n_out = b.size();
    const std::size_t n_in = x.size();
    out.assign(n_out, 0.0);
    for (std::size_t i = 0; i < n_out; ++i) {
        double acc = b[i];
        const double* wi = w.data() + i * n_in;
        for (std::size_t j = 0; j < n_in; ++j) acc += wi[j] * x[j];
        out[i] = acc;
    }
}

inline void softmax_inplace(std::vector<double>& v) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    double sum = 0.0;
    for (double& x : v) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (double& x : v) x /= sum;
}
} // namespace detail

inline ForwardTrace forward_trace(const DenseNet& net, std::span<const double> input) {
    if (static_cast<int>(input.size()) != net.input_size())
        throw UsageError("forward: input length mismatch");
    ForwardTrace tr;
    tr.acts.emplace_back(input.begin(), input.end());
    for (int l = 0; l < net.n_layers(); ++l) {
        std::vector<double> pre;
        detail::affine(net.weights[l], net.biases[l], tr.acts.back(), pre);
        tr.preacts.push_back(pre);
        if (l + 1 < net.n_layers())
            for (double& v : pre)
                if (v < 0.0) v *= net.leaky_slope;
        tr.acts.push_back(std::move(pre));
    }
    tr.output = tr.acts.back();
    if (net.head == Head::Softmax) detail::softmax_inplace(tr.output);
    return tr;
}

inline std::vector<double> forward(const DenseNet& net, std::span<const double> input) {
    return forward_trace(net, input).output;
}

inline double forward_scalar(const DenseNet& net, std::span<const double> input) {
    return forward(net, input)[0];
}

/// Per-parameter gradients, shape-congruent with the owning net.
struct GradientBundle {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    static GradientBundle zeros_like(const DenseNet& net) {
        GradientBundle g;
        for (int l = 0; l < net.n_layers(); ++l) {
            g.weights.emplace_back(net.weights[l].size(), 0.0);
            g.biases.emplace_back(net.biases[l].size(), 0.0);
        }
        return g;
    }

    void add_scaled(const GradientBundle& other, double c) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            for (std::size_t i = 0; i < weights[l].size(); ++i)
                weights[l][i] += c * other.weights[l][i];
            for (std::size_t i = 0; i < biases[l].size(); ++i)
                biases[l][i] += c * other.biases[l][i];
        }
    }
};

inline double global_norm(const GradientBundle& g) {
    double sq = 0.0;
    for (const auto& w : g.weights)
        for (double v : w) sq += v * v;
    for (const auto& b : g.biases)
        for (double v : b) sq += v * v;
    return std::sqrt(sq);
}

/// Exact reverse-mode gradients of a scalar loss with respect to all
/// parameters, given dLoss/dOutput at the head output.
inline GradientBundle backward(const DenseNet& net, const ForwardTrace& trace,
                               std::span<const double> dloss_doutput) {
    if (static_cast<int>(dloss_doutput.size()) != net.output_size())
        throw UsageError("backward: upstream gradient length mismatch");
    GradientBundle g = GradientBundle::zeros_like(net);

    // Gradient at the last pre-head layer.
    std::vector<double> dpre(dloss_doutput.begin(), dloss_doutput.end());
    if (net.head == Head::Softmax) {
        const auto& y = trace.output;
        double dot = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) dot += dloss_doutput[i] * y[i];
        for (std::size_t i = 0; i < y.size(); ++i)
            dpre[i] = y[i] * (dloss_doutput[i] - dot);
    }

    for (int l = net.n_layers() - 1; l >= 0; --l) {
        const auto& x = trace.acts[l];
        const int n_in = net.layer_sizes[l];
        const int n_out = net.layer_sizes[l + 1];
        for (int i = 0; i < n_out; ++i) {
            g.biases[l][i] = dpre[i];
            double* gw = g.weights[l].data() + static_cast<std::size_t>(i) * n_in;
            for (int j = 0; j < n_in; ++j) gw[j] = dpre[i] * x[j];
        }
        if (l == 0) break;
        std::vector<double> dx(n_in, 0.0);
        for (int i = 0; i < n_out; ++i) {
            const double* wi = net.weights[l].data() + static_cast<std::size_t>(i) * n_in;
            for (int j = 0; j < n_in; ++j) dx[j] += wi[j] * dpre[i];
        }
        const auto& pre_prev = trace.preacts[l - 1];
        for (int j = 0; j < n_in; ++j)
            if (pre_prev[j] < 0.0) dx[j] *= net.leaky_slope;
        dpre = std::move(dx);
    }
    return g;
}

/// Descent step p <- p - lr * grad, with optional global-norm clipping.
inline void sgd_step(DenseNet& net, const GradientBundle& g, double lr,
                     double clip = 0.0) {
    double scale = 1.0;
    if (clip > 0.0) {
        const double norm = global_norm(g);
        if (norm > clip) scale = clip / norm;
    }
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        for (std::size_t i = 0; i < net.weights[l].size(); ++i)
            net.weights[l][i] -= lr * scale * g.weights[l][i];
        for (std::size_t i = 0; i < net.biases[l].size(); ++i)
            net.biases[l][i] -= lr * scale * g.biases[l][i];
    }
}

inline nlohmann::json net_to_json(const DenseNet& net) {
    return {{"layer_sizes", net.layer_sizes},
            {"head", net.head == Head::Softmax ? "softmax" : "linear"},
            {"leaky_slope", net.leaky_slope},
            {"weights", net.weights},
            {"biases", net.biases}};
}

inline DenseNet net_from_json(const nlohmann::json& j) {
    try {
        DenseNet net;
        net.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
        const auto head = j.at("head").get<std::string>();
        if (head == "softmax")
            net.head = Head::Softmax;
        else if (head == "linear")
            net.head = Head::Linear;
        else
            throw ConfigError("unknown head '" + head + "'");
        net.leaky_slope = j.at("leaky_slope").get<double>();
        net.weights = j.at("weights").get<std::vector<std::vector<double>>>();
        net.biases = j.at("biases").get<std::vector<std::vector<double>>>();
        if (static_cast<int>(net.weights.size()) != net.n_layers() ||
            static_cast<int>(net.biases.size()) != net.n_layers())
            throw ConfigError("checkpoint layer count mismatch");
        for (int l = 0; l < net.n_layers(); ++l)
            if (static_cast<int>(net.weights[l].size()) !=
                    net.layer_sizes[l] * net.layer_sizes[l + 1] ||
                static_cast<int>(net.biases[l].size()) != net.layer_sizes[l + 1])
                throw ConfigError("checkpoint layer shape mismatch");
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad network JSON: ") + e.what());
    }
}

} // namespace aput

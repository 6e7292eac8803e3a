#pragma once

// Feed-forward network kernel: Glorot initialization, batched forward
// evaluation, exact reverse-mode gradients and the Adam update rule.
//
// Samples are stored column-wise (one column per sample) so every layer is a
// single matrix product over the batch.

#include "riserop/error.hpp"
#include "riserop/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace riserop::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { tanh, relu, sigmoid, sine };

inline std::string_view to_string(Activation a) {
    switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::sine: return "sin";
    }
    return "?";
}

inline Activation parse_activation(std::string_view name) {
    if (name == "tanh") return Activation::tanh;
    if (name == "relu") return Activation::relu;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "sin") return Activation::sine;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

struct MLPSpec {
    std::vector<int> layer_widths; ///< input width first, output width last
    Activation activation = Activation::tanh;

    int input_width() const { return layer_widths.front(); }
    int output_width() const { return layer_widths.back(); }
    std::size_t layer_count() const { return layer_widths.size() - 1; }

    void validate() const {
        if (layer_widths.size() < 2)
            throw ShapeError("MLPSpec needs at least input and output widths");
        for (int w : layer_widths)
            if (w < 1) throw ShapeError("MLPSpec layer widths must be >= 1");
    }

    bool operator==(const MLPSpec&) const = default;
};

struct Layer {
    MatrixXd weight; ///< out x in
    VectorXd bias;   ///< out
};

struct MLPParams {
    std::vector<Layer> layers;

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    bool all_finite() const {
        for (const auto& l : layers)
            if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
        return true;
    }

    /// Zero-valued parameters with the same shapes.
    MLPParams zeros_like() const {
        MLPParams z;
        z.layers.reserve(layers.size());
        for (const auto& l : layers)
            z.layers.push_back({MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                                VectorXd::Zero(l.bias.size())});
        return z;
    }
};

/// A network: its architecture plus parameter values.
struct Mlp {
    MLPSpec spec;
    MLPParams params;

    void check_shapes() const {
        spec.validate();
        if (params.layers.size() != spec.layer_count())
            throw ShapeError("parameter layer count does not match spec");
        for (std::size_t i = 0; i < params.layers.size(); ++i) {
            const auto& l = params.layers[i];
            if (l.weight.rows() != spec.layer_widths[i + 1] || l.weight.cols() != spec.layer_widths[i] ||
                l.bias.size() != spec.layer_widths[i + 1])
                throw ShapeError("parameter shape mismatch in layer " + std::to_string(i));
        }
    }
};

inline Mlp mlp_init(const MLPSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng = make_rng(seed, 0x6d6c70);
    Mlp net{spec, {}};
    for (std::size_t i = 0; i < spec.layer_count(); ++i) {
        const int fan_in = spec.layer_widths[i];
        const int fan_out = spec.layer_widths[i + 1];
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Layer layer{MatrixXd(fan_out, fan_in), VectorXd::Zero(fan_out)};
        for (int c = 0; c < fan_in; ++c)
            for (int r = 0; r < fan_out; ++r) layer.weight(r, c) = dist(rng);
        net.params.layers.push_back(std::move(layer));
    }
    return net;
}

namespace detail {

inline void activate(Activation a, const MatrixXd& pre, MatrixXd& out) {
    switch (a) {
    case Activation::tanh: {
        // exp is vectorized for doubles, tanh is not; |x| <= 20 keeps exp finite
        // and tanh(20) rounds to 1.
        const auto e = (2.0 * pre.array().max(-20.0).min(20.0)).exp();
        out = (e - 1.0) / (e + 1.0);
        break;
    }
    case Activation::relu: out = pre.array().max(0.0); break;
    case Activation::sigmoid: out = (1.0 + (-pre.array()).exp()).inverse(); break;
    case Activation::sine: out = pre.array().sin(); break;
    }
}

/// Multiplies `grad` in place by the activation derivative.
inline void apply_derivative(Activation a, const MatrixXd& pre, const MatrixXd& post, MatrixXd& grad) {
    switch (a) {
    case Activation::tanh: grad.array() *= 1.0 - post.array().square(); break;
    case Activation::relu: grad.array() *= (pre.array() > 0.0).cast<double>(); break;
    case Activation::sigmoid: grad.array() *= post.array() * (1.0 - post.array()); break;
    case Activation::sine: grad.array() *= pre.array().cos(); break;
    }
}

} // namespace detail

/// Intermediate values kept by a batched forward pass for the backward pass.
struct Tape {
    MatrixXd input;                  ///< in x N
    std::vector<MatrixXd> pre;       ///< hidden pre-activations
    std::vector<MatrixXd> post;      ///< hidden activations
    MatrixXd output;                 ///< out x N
};

/// Batched forward pass; `inputs` holds one sample per column.
inline Tape forward_batch(const Mlp& net, const MatrixXd& inputs) {
    if (inputs.rows() != net.spec.input_width())
        throw ShapeError("input width " + std::to_string(inputs.rows()) + " != network input width " +
                         std::to_string(net.spec.input_width()));
    Tape tape;
    tape.input = inputs;
    const auto& layers = net.params.layers;
    const std::size_t hidden = layers.size() - 1;
    tape.pre.resize(hidden);
    tape.post.resize(hidden);
    const MatrixXd* x = &tape.input;
    for (std::size_t i = 0; i < hidden; ++i) {
        tape.pre[i].noalias() = layers[i].weight * *x;
        tape.pre[i].colwise() += layers[i].bias;
        detail::activate(net.spec.activation, tape.pre[i], tape.post[i]);
        x = &tape.post[i];
    }
    tape.output.noalias() = layers.back().weight * *x;
    tape.output.colwise() += layers.back().bias;
    return tape;
}

inline VectorXd mlp_forward(const Mlp& net, const VectorXd& input) {
    if (input.size() != net.spec.input_width())
        throw ShapeError("input width " + std::to_string(input.size()) + " != network input width " +
                         std::to_string(net.spec.input_width()));
    return forward_batch(net, input).output.col(0);
}

struct BatchGradients {
    MLPParams params; ///< summed over the batch
    MatrixXd inputs;  ///< in x N, empty when not requested
};

/// Reverse pass for the scalar sum over samples of <upstream.col(n), output.col(n)>.
inline BatchGradients backward_batch(const Mlp& net, const Tape& tape, const MatrixXd& upstream,
                                     bool want_input_grad = true) {
    if (upstream.rows() != net.spec.output_width() || upstream.cols() != tape.output.cols())
        throw ShapeError("upstream gradient shape does not match network output");
    if (!upstream.allFinite()) throw NumericalError("non-finite upstream gradient");

    const auto& layers = net.params.layers;
    const std::size_t n_layers = layers.size();
    BatchGradients g;
    g.params.layers.resize(n_layers);

    MatrixXd delta = upstream;
    for (std::size_t k = n_layers; k-- > 0;) {
        const MatrixXd& x = k == 0 ? tape.input : tape.post[k - 1];
        g.params.layers[k].weight.noalias() = delta * x.transpose();
        g.params.layers[k].bias = delta.rowwise().sum();
        if (k == 0 && !want_input_grad) break;
        MatrixXd back;
        back.noalias() = layers[k].weight.transpose() * delta;
        if (k == 0) {
            g.inputs = std::move(back);
            break;
        }
        detail::apply_derivative(net.spec.activation, tape.pre[k - 1], tape.post[k - 1], back);
        delta = std::move(back);
    }
    return g;
}

struct Gradients {
    MLPParams params;
    VectorXd input;
};

/// Gradients of <upstream, f(input)> with respect to parameters and input.
inline Gradients mlp_backward(const Mlp& net, const VectorXd& input, const VectorXd& upstream) {
    if (upstream.size() != net.spec.output_width())
        throw ShapeError("upstream gradient width does not match network output");
    Tape tape = forward_batch(net, input);
    BatchGradients g = backward_batch(net, tape, upstream);
    return {std::move(g.params), g.inputs.col(0)};
}

// -- flat views -------------------------------------------------------------

inline void append_flat(const MLPParams& p, std::vector<double>& out) {
    for (const auto& l : p.layers) {
        out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
        out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
}

/// Overwrites `p` from `flat` starting at `offset`; returns the offset past the last value read.
inline std::size_t assign_flat(MLPParams& p, std::span<const double> flat, std::size_t offset) {
    for (auto& l : p.layers) {
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = flat[offset++];
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] = flat[offset++];
    }
    return offset;
}

// -- Adam -------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    VectorXd m; ///< first moment, one entry per parameter
    VectorXd v; ///< second moment
    std::int64_t step = 0;

    AdamState() = default;
    AdamState(std::size_t n, AdamConfig cfg)
        : config(cfg), m(VectorXd::Zero(static_cast<Eigen::Index>(n))),
          v(VectorXd::Zero(static_cast<Eigen::Index>(n))) {}
};

/// In-place bias-corrected Adam step over a flat parameter vector.
inline void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state) {
    if (params.size() != grads.size() || static_cast<Eigen::Index>(params.size()) != state.m.size())
        throw ShapeError("Adam: parameter, gradient and state sizes disagree");
    for (double g : grads)
        if (!std::isfinite(g)) throw NumericalError("Adam: non-finite gradient");
    const auto& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        double& m = state.m[static_cast<Eigen::Index>(i)];
        double& v = state.v[static_cast<Eigen::Index>(i)];
        m = c.beta1 * m + (1.0 - c.beta1) * g;
        v = c.beta2 * v + (1.0 - c.beta2) * g * g;
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
}

inline std::pair<MLPParams, AdamState> adam_step(MLPParams params, const MLPParams& grads, AdamState state) {
    std::vector<double> p, g;
    append_flat(params, p);
    append_flat(grads, g);
    if (state.m.size() == 0 && state.step == 0) state = AdamState(p.size(), state.config);
    adam_update(p, g, state);
    assign_flat(params, p, 0);
    return {std::move(params), std::move(state)};
}

} // namespace riserop::nn

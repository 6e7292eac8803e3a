#pragma once

// Branch/trunk operator network:
//
//     G(u)(z) = sum_k B_k(u) T_k(z) + B0
//
// with B the branch MLP applied to observer strains and T the trunk MLP
// applied to a normalized coordinate (optionally paired with a time value).

#include "riserop/batch.hpp"
#include "riserop/error.hpp"
#include "riserop/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace riserop::deeponet {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Metadata {
    std::string case_label = "synthetic";
    double normalization_scale = 1.0;
    int look_back = 1;
    int observers = 3;

    bool operator==(const Metadata&) const = default;
};

struct DeepONetModel {
    nn::Mlp branch;
    nn::Mlp trunk;
    double bias = 0.0; ///< B0
    int latent = 0;    ///< P
    bool trunk_time = false;
    Metadata meta;

    int branch_width() const { return branch.spec.input_width(); }

    void validate() const {
        branch.check_shapes();
        trunk.check_shapes();
        if (latent < 1) throw ShapeError("latent width must be positive");
        if (branch.spec.output_width() != latent || trunk.spec.output_width() != latent)
            throw ShapeError("branch and trunk output widths must equal the latent width");
        if (trunk.spec.input_width() != (trunk_time ? 2 : 1))
            throw ShapeError("trunk input width must be 1 (z) or 2 (t, z)");
        if (branch.spec.input_width() != meta.observers * meta.look_back)
            throw ShapeError("branch input width must equal observers * look_back");
        if (!(meta.normalization_scale > 0.0)) throw ShapeError("normalization scale must be positive");
        if (!std::isfinite(bias)) throw NumericalError("non-finite bias");
    }
};

struct ModelConfig {
    std::vector<int> branch_hidden = std::vector<int>(6, 50);
    std::vector<int> trunk_hidden = std::vector<int>(6, 50);
    int latent = 50;
    nn::Activation activation = nn::Activation::tanh;
    bool trunk_time = false;
};

inline DeepONetModel make_model(const ModelConfig& cfg, const Metadata& meta, std::uint64_t seed) {
    if (cfg.latent < 1) throw ConfigError("latent width must be positive");
    if (meta.observers < 1 || meta.look_back < 1) throw ConfigError("observers and look_back must be >= 1");
    nn::MLPSpec branch{{meta.observers * meta.look_back}, cfg.activation};
    branch.layer_widths.insert(branch.layer_widths.end(), cfg.branch_hidden.begin(), cfg.branch_hidden.end());
    branch.layer_widths.push_back(cfg.latent);
    nn::MLPSpec trunk{{cfg.trunk_time ? 2 : 1}, cfg.activation};
    trunk.layer_widths.insert(trunk.layer_widths.end(), cfg.trunk_hidden.begin(), cfg.trunk_hidden.end());
    trunk.layer_widths.push_back(cfg.latent);

    DeepONetModel model;
    model.branch = nn::mlp_init(branch, mix_seed(seed, 1));
    model.trunk = nn::mlp_init(trunk, mix_seed(seed, 2));
    model.latent = cfg.latent;
    model.trunk_time = cfg.trunk_time;
    model.meta = meta;
    model.validate();
    return model;
}

// -- evaluation -------------------------------------------------------------

/// Forward state of a batched evaluation, kept for the reverse pass.
struct Evaluation {
    nn::Tape branch;
    nn::Tape trunk;
    MatrixXd pred; ///< N x p
};

/// Evaluates the operator for N branch inputs (one per column of
/// `branch_cols`) at p trunk coordinates.
inline Evaluation evaluate(const DeepONetModel& model, const MatrixXd& branch_cols,
                           std::span<const double> coords, std::span<const double> times = {}) {
    if (branch_cols.rows() != model.branch_width())
        throw ShapeError("branch input width " + std::to_string(branch_cols.rows()) + " != model width " +
                         std::to_string(model.branch_width()));
    if (!branch_cols.allFinite()) throw NumericalError("non-finite branch input");
    const Eigen::Index n = branch_cols.cols();
    const auto p = static_cast<Eigen::Index>(coords.size());
    for (double z : coords)
        if (!std::isfinite(z)) throw NumericalError("non-finite trunk coordinate");

    Evaluation ev;
    ev.branch = nn::forward_batch(model.branch, branch_cols);
    const MatrixXd& b = ev.branch.output; // P x N
    if (!model.trunk_time) {
        MatrixXd trunk_in(1, p);
        for (Eigen::Index j = 0; j < p; ++j) trunk_in(0, j) = coords[static_cast<std::size_t>(j)];
        ev.trunk = nn::forward_batch(model.trunk, trunk_in);
        ev.pred.noalias() = b.transpose() * ev.trunk.output;
    } else {
        if (static_cast<Eigen::Index>(times.size()) != n)
            throw ShapeError("time-aware trunk needs one time value per sample");
        MatrixXd trunk_in(2, n * p);
        for (Eigen::Index s = 0; s < n; ++s)
            for (Eigen::Index j = 0; j < p; ++j) {
                trunk_in(0, s * p + j) = times[static_cast<std::size_t>(s)];
                trunk_in(1, s * p + j) = coords[static_cast<std::size_t>(j)];
            }
        ev.trunk = nn::forward_batch(model.trunk, trunk_in);
        ev.pred.resize(n, p);
        for (Eigen::Index s = 0; s < n; ++s)
            ev.pred.row(s).noalias() = b.col(s).transpose() * ev.trunk.output.middleCols(s * p, p);
    }
    ev.pred.array() += model.bias;
    return ev;
}

/// Predictions at `coords` for a single branch input.
inline VectorXd forward(const DeepONetModel& model, const VectorXd& branch_input, std::span<const double> coords,
                        double time = 0.0) {
    const double t[1] = {time};
    Evaluation ev = evaluate(model, branch_input, coords, model.trunk_time ? std::span<const double>(t) : std::span<const double>());
    return ev.pred.row(0).transpose();
}

struct ModelGradients {
    nn::MLPParams branch;
    nn::MLPParams trunk;
    double bias = 0.0;
};

struct Backward {
    ModelGradients params;
    MatrixXd branch_inputs; ///< w x N, empty unless requested
};

/// Reverse pass of sum_{n,j} upstream(n,j) * pred(n,j).
inline Backward backward(const DeepONetModel& model, const Evaluation& ev, const MatrixXd& upstream,
                         bool want_input_grad = false) {
    if (upstream.rows() != ev.pred.rows() || upstream.cols() != ev.pred.cols())
        throw ShapeError("upstream gradient shape does not match predictions");
    const MatrixXd& b = ev.branch.output;
    const MatrixXd& t = ev.trunk.output;
    const Eigen::Index n = upstream.rows();
    const Eigen::Index p = upstream.cols();
    MatrixXd d_branch(model.latent, n);
    MatrixXd d_trunk;
    if (!model.trunk_time) {
        d_branch.noalias() = t * upstream.transpose();
        d_trunk.noalias() = b * upstream;
    } else {
        d_trunk.resize(model.latent, n * p);
        for (Eigen::Index s = 0; s < n; ++s) {
            d_branch.col(s).noalias() = t.middleCols(s * p, p) * upstream.row(s).transpose();
            d_trunk.middleCols(s * p, p).noalias() = b.col(s) * upstream.row(s);
        }
    }
    Backward out;
    auto gb = nn::backward_batch(model.branch, ev.branch, d_branch, want_input_grad);
    auto gt = nn::backward_batch(model.trunk, ev.trunk, d_trunk, false);
    out.params.branch = std::move(gb.params);
    out.params.trunk = std::move(gt.params);
    out.params.bias = upstream.sum();
    out.branch_inputs = std::move(gb.inputs);
    return out;
}

// -- loss -------------------------------------------------------------------

inline double loss_mse(std::span<const double> pred, std::span<const double> labels) {
    if (pred.size() != labels.size()) throw ShapeError("loss_mse: length mismatch");
    if (pred.empty()) throw DataError("loss_mse: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - labels[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

inline double loss_mse(const MatrixXd& pred, const MatrixXd& labels) {
    if (pred.rows() != labels.rows() || pred.cols() != labels.cols()) throw ShapeError("loss_mse: shape mismatch");
    if (pred.size() == 0) throw DataError("loss_mse: empty input");
    return (pred - labels).squaredNorm() / static_cast<double>(pred.size());
}

// -- flat parameter views ---------------------------------------------------

inline std::vector<double> flatten(const DeepONetModel& m) {
    std::vector<double> flat;
    flat.reserve(m.branch.params.size() + m.trunk.params.size() + 1);
    nn::append_flat(m.branch.params, flat);
    nn::append_flat(m.trunk.params, flat);
    flat.push_back(m.bias);
    return flat;
}

inline std::vector<double> flatten(const ModelGradients& g) {
    std::vector<double> flat;
    nn::append_flat(g.branch, flat);
    nn::append_flat(g.trunk, flat);
    flat.push_back(g.bias);
    return flat;
}

inline void assign(DeepONetModel& m, std::span<const double> flat) {
    std::size_t off = nn::assign_flat(m.branch.params, flat, 0);
    off = nn::assign_flat(m.trunk.params, flat, off);
    m.bias = flat[off];
}

/// MSE of the model on a batch together with its parameter gradient.
struct LossGradient {
    double loss = 0.0;
    ModelGradients grad;
    MatrixXd branch_input_grad; ///< w x N, filled when requested
};

inline MatrixXd branch_columns(const SampleBatch& batch) { return batch.branch_inputs.transpose(); }

inline LossGradient loss_and_gradient(const DeepONetModel& model, const MatrixXd& branch_cols,
                                      std::span<const double> coords, std::span<const double> times,
                                      const MatrixXd& labels, bool want_input_grad = false) {
    Evaluation ev = evaluate(model, branch_cols, coords, times);
    if (ev.pred.rows() != labels.rows() || ev.pred.cols() != labels.cols())
        throw ShapeError("labels shape does not match predictions");
    MatrixXd diff = ev.pred - labels;
    LossGradient out;
    out.loss = diff.squaredNorm() / static_cast<double>(diff.size());
    diff *= 2.0 / static_cast<double>(diff.size());
    Backward bw = backward(model, ev, diff, want_input_grad);
    out.grad = std::move(bw.params);
    out.branch_input_grad = std::move(bw.branch_inputs);
    return out;
}

inline MatrixXd predict(const DeepONetModel& model, const SampleBatch& batch) {
    return evaluate(model, branch_columns(batch), batch.trunk_coords, batch.times).pred;
}

inline double evaluate_mse(const DeepONetModel& model, const SampleBatch& batch) {
    return loss_mse(predict(model, batch), batch.labels);
}

// -- training ---------------------------------------------------------------

struct LossRecord {
    long iteration = 0;
    double mse = 0.0;
};

struct LossHistory {
    std::vector<LossRecord> train;
    std::vector<LossRecord> test;
};

struct TrainConfig {
    long iterations = 0;
    nn::AdamConfig adam;
    long log_stride = 100;
    std::size_t batch_size = 0; ///< 0: full batch
    std::uint64_t seed = 0;
    double divergence_factor = 1e6;
};

struct TrainResult {
    DeepONetModel model;
    LossHistory history;
};

namespace detail {

inline void check_batch(const DeepONetModel& model, const SampleBatch& batch) {
    if (batch.empty()) throw DataError("training batch is empty");
    if (static_cast<int>(batch.branch_inputs.cols()) != model.branch_width())
        throw ShapeError("batch branch width " + std::to_string(batch.branch_inputs.cols()) +
                         " does not match model width " + std::to_string(model.branch_width()));
    if (batch.labels.rows() != batch.branch_inputs.rows() ||
        batch.labels.cols() != static_cast<Eigen::Index>(batch.trunk_coords.size()))
        throw ShapeError("batch labels shape inconsistent with inputs");
    if (model.trunk_time && batch.times.size() != batch.size())
        throw ShapeError("time-aware trunk needs per-sample times");
    if (!batch.branch_inputs.allFinite() || !batch.labels.allFinite())
        throw NumericalError("batch contains non-finite values");
}

} // namespace detail

/// Adam on the mean squared error over the batch. Deterministic for a given seed.
inline TrainResult train(DeepONetModel model, const SampleBatch& batch, const TrainConfig& cfg,
                         const SampleBatch* test = nullptr) {
    model.validate();
    TrainResult result{std::move(model), {}};
    if (cfg.iterations <= 0) return result;
    DeepONetModel& m = result.model;
    detail::check_batch(m, batch);
    if (test) detail::check_batch(m, *test);

    const MatrixXd cols = branch_columns(batch);
    const std::size_t n = batch.size();
    const bool full = cfg.batch_size == 0 || cfg.batch_size >= n;
    const long stride = std::max<long>(1, cfg.log_stride);

    std::vector<double> flat = flatten(m);
    nn::AdamState adam(flat.size(), cfg.adam);
    Rng rng = make_rng(cfg.seed, 0x747261696e);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = n;

    const auto log_point = [&](long it, double full_loss) {
        result.history.train.push_back({it, full_loss});
        if (test) result.history.test.push_back({it, evaluate_mse(m, *test)});
    };

    double initial_loss = -1.0;
    for (long it = 0; it < cfg.iterations; ++it) {
        LossGradient lg;
        if (full) {
            lg = loss_and_gradient(m, cols, batch.trunk_coords, batch.times, batch.labels);
            if (it % stride == 0) log_point(it, lg.loss);
        } else {
            if (it % stride == 0) log_point(it, evaluate_mse(m, batch));
            if (cursor + cfg.batch_size > n) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            MatrixXd sub_cols(cols.rows(), static_cast<Eigen::Index>(cfg.batch_size));
            MatrixXd sub_labels(static_cast<Eigen::Index>(cfg.batch_size), batch.labels.cols());
            std::vector<double> sub_times;
            for (std::size_t k = 0; k < cfg.batch_size; ++k) {
                const auto src = static_cast<Eigen::Index>(order[cursor + k]);
                sub_cols.col(static_cast<Eigen::Index>(k)) = cols.col(src);
                sub_labels.row(static_cast<Eigen::Index>(k)) = batch.labels.row(src);
                if (m.trunk_time) sub_times.push_back(batch.times[order[cursor + k]]);
            }
            cursor += cfg.batch_size;
            lg = loss_and_gradient(m, sub_cols, batch.trunk_coords, sub_times, sub_labels);
        }
        if (initial_loss < 0.0) initial_loss = lg.loss;
        if (!std::isfinite(lg.loss) || lg.loss > cfg.divergence_factor * std::max(initial_loss, 1e-300))
            throw NumericalError("training diverged at iteration " + std::to_string(it) +
                                 " (loss " + std::to_string(lg.loss) + ")");
        std::vector<double> g = flatten(lg.grad);
        nn::adam_update(flat, g, adam);
        assign(m, flat);
    }
    const double final_loss = evaluate_mse(m, batch);
    if (!std::isfinite(final_loss)) throw NumericalError("training produced a non-finite loss");
    if (result.history.train.empty() || result.history.train.back().iteration != cfg.iterations)
        log_point(cfg.iterations, final_loss);
    return result;
}

/// Continues training from already-trained parameters with a fresh optimizer
/// state. Zero iterations is zero-shot transfer.
inline DeepONetModel fine_tune(const DeepONetModel& model, const SampleBatch& batch, long iterations,
                               TrainConfig cfg = {}) {
    cfg.iterations = iterations;
    return train(model, batch, cfg).model;
}

} // namespace riserop::deeponet

#pragma once

// Learnable observer locations. Each observer position is a clipped Gaussian
// z_i = clip(mu_i + sigma_i * eta_i, 0, 1) in normalized riser coordinates;
// predictions are averaged over r sampled realizations and (mu, sigma) are
// trained with pathwise gradients, alternating with the network parameters.

#include "riserop/dataflow.hpp"
#include "riserop/deeponet.hpp"
#include "riserop/diagnostics.hpp"
#include "riserop/error.hpp"
#include "riserop/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <vector>

namespace riserop::placement {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct LocationDistribution {
    VectorXd mean;   ///< in [0, 1]
    VectorXd stddev; ///< >= 0

    Eigen::Index size() const { return mean.size(); }

    void validate() const {
        if (mean.size() == 0 || mean.size() != stddev.size()) throw ShapeError("location distribution shape mismatch");
        for (Eigen::Index i = 0; i < mean.size(); ++i) {
            if (!(mean[i] >= 0.0 && mean[i] <= 1.0)) throw ConfigError("observer mean outside [0, 1]");
            if (!(stddev[i] >= 0.0)) throw ConfigError("observer stddev must be >= 0");
        }
    }

    /// Means projected back onto [0, 1] and stddevs clamped at zero.
    void project() {
        mean = mean.cwiseMax(0.0).cwiseMin(1.0);
        stddev = stddev.cwiseMax(0.0);
    }
};

/// Uniform random means and a common initial stddev.
inline LocationDistribution random_initial(int m, double sigma, std::uint64_t seed) {
    Rng rng = make_rng(seed, 0x696e6974);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LocationDistribution d{VectorXd(m), VectorXd::Constant(m, sigma)};
    for (int i = 0; i < m; ++i) d.mean[i] = u(rng);
    return d;
}

struct Realizations {
    MatrixXd z;        ///< r x m sampled normalized locations
    MatrixXd noise;    ///< r x m standard normal draws
    Eigen::ArrayXXd active; ///< 1 where z was not clipped (gradient flows), else 0
};

inline Realizations sample_locations(const LocationDistribution& dist, int r, std::uint64_t seed) {
    if (r < 1) throw ConfigError("need at least one realization");
    dist.validate();
    const Eigen::Index m = dist.size();
    Rng rng = make_rng(seed, 0x73616d70);
    std::normal_distribution<double> normal(0.0, 1.0);
    Realizations out{MatrixXd(r, m), MatrixXd(r, m), Eigen::ArrayXXd(r, m)};
    for (int s = 0; s < r; ++s)
        for (Eigen::Index i = 0; i < m; ++i) {
            const double eta = normal(rng);
            const double raw = dist.mean[i] + dist.stddev[i] * eta;
            out.noise(s, i) = eta;
            out.z(s, i) = std::clamp(raw, 0.0, 1.0);
            out.active(s, i) = (raw >= 0.0 && raw <= 1.0) ? 1.0 : 0.0;
        }
    return out;
}

/// Time steps of a field with labels at fixed locations; branch inputs are
/// looked up from `field` at whatever observer locations are being evaluated.
struct PlacementDataset {
    std::shared_ptr<const dataflow::StrainField> field;
    std::vector<std::size_t> rows;
    std::vector<double> trunk_coords; ///< normalized label locations
    MatrixXd labels;                  ///< rows.size() x trunk_coords.size()
    double length = 38.0;
};

inline PlacementDataset make_dataset(std::shared_ptr<const dataflow::StrainField> field, const RowRange& window,
                                     const std::vector<double>& label_locations, double length,
                                     std::size_t stride = 1) {
    if (!field) throw ConfigError("placement dataset needs a field");
    if (window.size() == 0 || window.end > field->steps()) throw ConfigError("placement window outside the field");
    if (stride == 0) throw ConfigError("stride must be >= 1");
    PlacementDataset d;
    d.length = length;
    for (std::size_t row = window.begin; row < window.end; row += stride) d.rows.push_back(row);
    std::vector<dataflow::GridPoint> pts;
    for (double z : label_locations) {
        pts.push_back(dataflow::locate(field->z_grid, z));
        d.trunk_coords.push_back(z / length);
    }
    d.labels.resize(static_cast<Eigen::Index>(d.rows.size()), static_cast<Eigen::Index>(pts.size()));
    for (std::size_t n = 0; n < d.rows.size(); ++n)
        for (std::size_t j = 0; j < pts.size(); ++j)
            d.labels(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j)) =
                dataflow::interpolate(field->values, static_cast<Eigen::Index>(d.rows[n]), pts[j]).value;
    d.field = std::move(field);
    return d;
}

namespace detail {

/// Branch columns for every (realization, sample) pair, column s * N + n, and
/// the interpolation slope d strain / d z_normalized at each entry.
struct BranchLookup {
    MatrixXd columns; ///< m x (r N)
    MatrixXd slopes;  ///< m x (r N)
};

inline BranchLookup lookup(const PlacementDataset& d, const Realizations& real) {
    const Eigen::Index r = real.z.rows(), m = real.z.cols();
    const auto n = static_cast<Eigen::Index>(d.rows.size());
    const auto& f = *d.field;
    const double lo = f.z_grid.front(), hi = f.z_grid.back();
    BranchLookup out{MatrixXd(m, r * n), MatrixXd(m, r * n)};
    for (Eigen::Index s = 0; s < r; ++s)
        for (Eigen::Index i = 0; i < m; ++i) {
            const double z = std::clamp(real.z(s, i) * d.length, lo, hi);
            const auto g = dataflow::locate(f.z_grid, z);
            for (Eigen::Index k = 0; k < n; ++k) {
                const auto v = dataflow::interpolate(f.values, static_cast<Eigen::Index>(d.rows[static_cast<std::size_t>(k)]), g);
                out.columns(i, s * n + k) = v.value;
                out.slopes(i, s * n + k) = v.slope * d.length;
            }
        }
    return out;
}

/// Averages the (r N) x p prediction block over realizations.
inline MatrixXd average_over_realizations(const MatrixXd& pred, Eigen::Index r) {
    const Eigen::Index n = pred.rows() / r;
    MatrixXd avg = MatrixXd::Zero(n, pred.cols());
    for (Eigen::Index s = 0; s < r; ++s) avg += pred.middleRows(s * n, n);
    return avg / static_cast<double>(r);
}

} // namespace detail

/// Realization-averaged predictions for every sample of the dataset (N x p).
inline MatrixXd expected_predictions(const deeponet::DeepONetModel& model, const Realizations& real,
                                     const PlacementDataset& d) {
    if (model.branch_width() != real.z.cols())
        throw ShapeError("model expects " + std::to_string(model.branch_width()) + " observers, distribution has " +
                         std::to_string(real.z.cols()));
    const auto look = detail::lookup(d, real);
    const auto ev = deeponet::evaluate(model, look.columns, d.trunk_coords);
    return detail::average_over_realizations(ev.pred, real.z.rows());
}

/// Expected prediction at the trunk coordinates for field row `row`.
inline VectorXd expected_forward(const deeponet::DeepONetModel& model, const LocationDistribution& dist,
                                 std::shared_ptr<const dataflow::StrainField> field, std::size_t row,
                                 const std::vector<double>& trunk_coords, int r, std::uint64_t seed,
                                 double length = 38.0) {
    PlacementDataset d;
    d.field = std::move(field);
    d.rows = {row};
    d.trunk_coords = trunk_coords;
    d.length = length;
    const auto real = sample_locations(dist, r, seed);
    return expected_predictions(model, real, d).row(0).transpose();
}

struct PlacementGradient {
    double loss = 0.0;
    VectorXd d_mean;
    VectorXd d_stddev;
    deeponet::ModelGradients model; ///< filled when requested
};

/// Loss on the realization-averaged prediction and its pathwise gradient:
/// dL/dz from the branch input gradient times the interpolation slope, then
/// dz/dmu = 1, dz/dsigma = eta (zero where clipped).
inline PlacementGradient placement_grad(const deeponet::DeepONetModel& model, const Realizations& real,
                                        const PlacementDataset& d) {
    const Eigen::Index r = real.z.rows(), m = real.z.cols();
    const auto n = static_cast<Eigen::Index>(d.rows.size());
    if (model.branch_width() != m) throw ShapeError("model observer count does not match the distribution");
    const auto look = detail::lookup(d, real);
    const auto ev = deeponet::evaluate(model, look.columns, d.trunk_coords);
    const MatrixXd avg = detail::average_over_realizations(ev.pred, r);
    MatrixXd diff = avg - d.labels;
    PlacementGradient out;
    out.loss = diff.squaredNorm() / static_cast<double>(diff.size());
    diff *= 2.0 / (static_cast<double>(diff.size()) * static_cast<double>(r));
    MatrixXd upstream(r * n, diff.cols());
    for (Eigen::Index s = 0; s < r; ++s) upstream.middleRows(s * n, n) = diff;
    auto bw = deeponet::backward(model, ev, upstream, true);
    if (!bw.branch_inputs.allFinite()) throw NumericalError("non-finite placement gradient");
    out.model = std::move(bw.params);
    out.d_mean = VectorXd::Zero(m);
    out.d_stddev = VectorXd::Zero(m);
    for (Eigen::Index s = 0; s < r; ++s)
        for (Eigen::Index i = 0; i < m; ++i) {
            if (real.active(s, i) == 0.0) continue;
            double dz = 0.0;
            for (Eigen::Index k = 0; k < n; ++k) dz += bw.branch_inputs(i, s * n + k) * look.slopes(i, s * n + k);
            out.d_mean[i] += dz;
            out.d_stddev[i] += dz * real.noise(s, i);
        }
    if (!out.d_mean.allFinite() || !out.d_stddev.allFinite()) throw NumericalError("non-finite placement gradient");
    return out;
}

inline PlacementGradient placement_grad(const deeponet::DeepONetModel& model, const LocationDistribution& dist,
                                        const PlacementDataset& d, int r, std::uint64_t seed) {
    return placement_grad(model, sample_locations(dist, r, seed), d);
}

// -- alternating optimization ---------------------------------------------------------

struct AlternationSchedule {
    long theta_steps = 60;
    long lambda_steps = 40;
    long total_iterations = 20000;
    int realizations = 8;

    void validate() const {
        if (theta_steps < 0 || lambda_steps < 0 || theta_steps + lambda_steps <= 0)
            throw ConfigError("alternation needs theta_steps + lambda_steps > 0");
        if (total_iterations < 0) throw ConfigError("total_iterations must be >= 0");
        if (realizations < 1) throw ConfigError("realizations must be >= 1");
    }
};

struct PlacementConfig {
    AlternationSchedule schedule;
    nn::AdamConfig theta_adam;
    nn::AdamConfig lambda_adam{2e-3, 0.9, 0.999, 1e-8};
    long record_every = 100;
    double divergence_factor = 1e6;
};

enum class Phase { theta, lambda };

using PhaseObserver =
    std::function<void(Phase finished, long iteration, const deeponet::DeepONetModel&, const LocationDistribution&)>;

struct PlacementResult {
    deeponet::DeepONetModel model;
    LocationDistribution distribution;
    std::vector<diagnostics::TrajectoryRecord> trajectory;
    std::vector<deeponet::LossRecord> history;
};

/// Alternates theta_steps Adam updates of the network (locations frozen) with
/// lambda_steps Adam updates of (mu, sigma) (network frozen). One iteration
/// is one optimizer step of the active phase; noise is redrawn every step.
inline PlacementResult optimize_placement(deeponet::DeepONetModel model, LocationDistribution dist,
                                          const PlacementDataset& data, const PlacementConfig& cfg,
                                          std::uint64_t seed, const PhaseObserver& observer = {}) {
    const auto& sched = cfg.schedule;
    sched.validate();
    model.validate();
    dist.validate();
    if (data.rows.empty()) throw DataError("placement dataset is empty");
    if (model.branch_width() != dist.size()) throw ShapeError("model observer count does not match the distribution");

    std::vector<double> theta = deeponet::flatten(model);
    nn::AdamState theta_state(theta.size(), cfg.theta_adam);
    const auto m = static_cast<std::size_t>(dist.size());
    std::vector<double> lambda(2 * m);
    nn::AdamState lambda_state(lambda.size(), cfg.lambda_adam);

    PlacementResult res;
    const long cycle = sched.theta_steps + sched.lambda_steps;
    double initial_loss = -1.0;
    Phase current = sched.theta_steps > 0 ? Phase::theta : Phase::lambda;
    for (long it = 0; it < sched.total_iterations; ++it) {
        const Phase phase = (it % cycle) < sched.theta_steps ? Phase::theta : Phase::lambda;
        if (phase != current) {
            if (observer) observer(current, it, model, dist);
            current = phase;
        }
        const auto real = sample_locations(dist, sched.realizations, mix_seed(seed, static_cast<std::uint64_t>(it)));
        auto g = placement_grad(model, real, data);
        if (initial_loss < 0.0) initial_loss = g.loss;
        if (!std::isfinite(g.loss) || g.loss > cfg.divergence_factor * std::max(initial_loss, 1e-300))
            throw NumericalError("placement optimization diverged at iteration " + std::to_string(it));
        if (it % cfg.record_every == 0) res.history.push_back({it, g.loss});

        if (phase == Phase::theta) {
            std::vector<double> grad = deeponet::flatten(g.model);
            nn::adam_update(theta, grad, theta_state);
            deeponet::assign(model, theta);
        } else {
            for (std::size_t i = 0; i < m; ++i) {
                lambda[i] = dist.mean[static_cast<Eigen::Index>(i)];
                lambda[m + i] = dist.stddev[static_cast<Eigen::Index>(i)];
            }
            std::vector<double> grad(2 * m);
            for (std::size_t i = 0; i < m; ++i) {
                grad[i] = g.d_mean[static_cast<Eigen::Index>(i)];
                grad[m + i] = g.d_stddev[static_cast<Eigen::Index>(i)];
            }
            nn::adam_update(lambda, grad, lambda_state);
            for (std::size_t i = 0; i < m; ++i) {
                dist.mean[static_cast<Eigen::Index>(i)] = lambda[i];
                dist.stddev[static_cast<Eigen::Index>(i)] = lambda[m + i];
            }
            dist.project();
        }
        if ((it + 1) % cfg.record_every == 0)
            res.trajectory.push_back({it + 1, std::vector<double>(dist.mean.data(), dist.mean.data() + dist.mean.size()),
                                      std::vector<double>(dist.stddev.data(), dist.stddev.data() + dist.stddev.size())});
    }
    if (observer && sched.total_iterations > 0) observer(current, sched.total_iterations, model, dist);
    res.model = std::move(model);
    res.distribution = std::move(dist);
    return res;
}

} // namespace riserop::placement

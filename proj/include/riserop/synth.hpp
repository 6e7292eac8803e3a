#pragma once

// Synthetic riser strain fields from the damped beam-string equation
//
//     e_tt + zeta e_t + EI e_zzzz - T e_zz = F(z, t),   pinned at z = 0, L
//
// solved by modal superposition: e = sum_n q_n(t) sin(n pi z / L) with
//
//     q_n'' + zeta q_n' + w_n^2 q_n = f_n(t),   w_n^2 = EI k_n^4 + T k_n^2.

#include "riserop/dataflow.hpp"
#include "riserop/error.hpp"
#include "riserop/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace riserop::synth {

using dataflow::StrainField;

struct RiserConfig {
    double length = 38.0;               ///< m
    double bending_stiffness = 100.0;  ///< EI per unit mass, m^4/s^2
    double tension = 8000.0;           ///< T per unit mass, m^2/s^2
    double damping = 100.0;            ///< zeta, 1/s
    int n_modes = 12;
    int z_points = 500;
    double sample_rate = 200.0; ///< Hz

    void validate() const {
        if (!(length > 0.0)) throw ConfigError("riser length must be positive");
        if (bending_stiffness < 0.0 || tension < 0.0) throw ConfigError("EI and T must be non-negative");
        if (!(bending_stiffness + tension > 0.0)) throw ConfigError("EI + T must be positive");
        if (damping < 0.0) throw ConfigError("damping must be non-negative");
        if (n_modes < 1) throw ConfigError("n_modes must be >= 1");
        if (z_points < 2 || n_modes > z_points / 2) throw ConfigError("n_modes must not exceed z_points / 2");
        if (!(sample_rate > 0.0)) throw ConfigError("sample rate must be positive");
    }
};

/// f_n(t) += amplitude * sin(omega t + phase) on mode `mode` (1-based).
struct ModalForce {
    int mode = 1;
    double amplitude = 0.0;
    double omega = 0.0; ///< rad/s
    double phase = 0.0;
};

struct ForcingSpec {
    std::vector<ModalForce> terms;
    double max_velocity = 0.0;            ///< m/s, metadata for the generated field
    std::optional<double> switch_off_time; ///< forcing is zero from this time on

    ForcingSpec scaled(double alpha) const {
        ForcingSpec s = *this;
        for (auto& t : s.terms) t.amplitude *= alpha;
        return s;
    }
};

inline std::vector<double> modal_frequencies(const RiserConfig& cfg) {
    cfg.validate();
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(cfg.n_modes));
    for (int n = 1; n <= cfg.n_modes; ++n) {
        const double k = n * std::numbers::pi / cfg.length;
        w.push_back(std::sqrt(cfg.bending_stiffness * k * k * k * k + cfg.tension * k * k));
    }
    return w;
}

/// Equidistant grid on [0, L] including both endpoints.
inline std::vector<double> riser_grid(const RiserConfig& cfg) {
    std::vector<double> z(static_cast<std::size_t>(cfg.z_points));
    const auto last = static_cast<double>(cfg.z_points - 1);
    for (int i = 0; i < cfg.z_points; ++i) z[static_cast<std::size_t>(i)] = cfg.length * (i / last);
    z.back() = cfg.length;
    return z;
}

/// Sine mode shapes on the grid, rows = modes; exactly zero at both ends.
inline Eigen::MatrixXd mode_shapes(const RiserConfig& cfg, const std::vector<double>& z) {
    Eigen::MatrixXd s(cfg.n_modes, static_cast<Eigen::Index>(z.size()));
    for (int n = 1; n <= cfg.n_modes; ++n)
        for (std::size_t j = 0; j < z.size(); ++j)
            s(n - 1, static_cast<Eigen::Index>(j)) = std::sin(n * std::numbers::pi * z[j] / cfg.length);
    s.col(0).setZero();
    s.col(s.cols() - 1).setZero();
    return s;
}

/// Internal RK4 sub-steps per sample so that h < 1 / (10 * max frequency).
inline int substeps(const RiserConfig& cfg, const ForcingSpec& forcing) {
    double w_max = modal_frequencies(cfg).back();
    for (const auto& t : forcing.terms) w_max = std::max(w_max, std::abs(t.omega));
    const double h_max = 1.0 / (10.0 * w_max);
    return std::max(1, static_cast<int>(std::ceil((1.0 / cfg.sample_rate) / h_max)));
}

/// Modal coordinates q_n at every sample, starting from rest. Rows = samples.
inline Eigen::MatrixXd simulate_modes(const RiserConfig& cfg, const ForcingSpec& forcing, std::size_t steps) {
    cfg.validate();
    for (const auto& t : forcing.terms) {
        if (t.mode < 1 || t.mode > cfg.n_modes) throw ConfigError("forcing mode index out of range");
        if (!std::isfinite(t.amplitude) || !std::isfinite(t.omega) || !std::isfinite(t.phase))
            throw ConfigError("forcing terms must be finite");
    }
    const auto w = modal_frequencies(cfg);
    const int sub = substeps(cfg, forcing);
    const double h = 1.0 / (cfg.sample_rate * sub);
    const double zeta = cfg.damping;

    std::vector<std::vector<const ModalForce*>> by_mode(static_cast<std::size_t>(cfg.n_modes));
    for (const auto& t : forcing.terms) by_mode[static_cast<std::size_t>(t.mode - 1)].push_back(&t);

    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(steps), cfg.n_modes);
    for (int n = 0; n < cfg.n_modes; ++n) {
        const auto& terms = by_mode[static_cast<std::size_t>(n)];
        if (terms.empty()) continue;
        const double w2 = w[static_cast<std::size_t>(n)] * w[static_cast<std::size_t>(n)];
        const auto force = [&](double t) {
            if (forcing.switch_off_time && t >= *forcing.switch_off_time) return 0.0;
            double f = 0.0;
            for (const auto* term : terms) f += term->amplitude * std::sin(term->omega * t + term->phase);
            return f;
        };
        double x = 0.0, v = 0.0;
        for (std::size_t k = 1; k < steps; ++k) {
            for (int s = 0; s < sub; ++s) {
                const double t0 = (static_cast<double>(k - 1) * sub + s) * h;
                const double f0 = force(t0), fm = force(t0 + 0.5 * h), f1 = force(t0 + h);
                const double k1x = v, k1v = f0 - zeta * v - w2 * x;
                const double k2x = v + 0.5 * h * k1v, k2v = fm - zeta * k2x - w2 * (x + 0.5 * h * k1x);
                const double k3x = v + 0.5 * h * k2v, k3v = fm - zeta * k3x - w2 * (x + 0.5 * h * k2x);
                const double k4x = v + h * k3v, k4v = f1 - zeta * k4x - w2 * (x + h * k3x);
                x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
                v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            }
            if (!std::isfinite(x) || !std::isfinite(v))
                throw NumericalError("modal integration became non-finite (mode " + std::to_string(n + 1) + ")");
            q(static_cast<Eigen::Index>(k), n) = x;
        }
    }
    return q;
}

inline std::size_t step_count(const RiserConfig& cfg, double duration_s) {
    const double exact = duration_s * cfg.sample_rate;
    if (!(exact >= 2.0)) throw ConfigError("duration must cover at least two samples");
    return static_cast<std::size_t>(std::floor(exact + 1e-9));
}

/// Strain field on the equidistant z grid (endpoints included), one row per sample.
inline StrainField simulate(const RiserConfig& cfg, const ForcingSpec& forcing, double duration_s) {
    cfg.validate();
    const std::size_t steps = step_count(cfg, duration_s);
    const Eigen::MatrixXd q = simulate_modes(cfg, forcing, steps);
    StrainField f;
    f.z_grid = riser_grid(cfg);
    f.values.noalias() = q * mode_shapes(cfg, f.z_grid);
    f.sample_rate = cfg.sample_rate;
    f.max_velocity = forcing.max_velocity;
    f.case_label = "synthetic";
    return f;
}

// -- NDP-like cases -------------------------------------------------------------

enum class Profile { slow, medium, fast };

inline Profile parse_profile(std::string_view s) {
    if (s == "slow") return Profile::slow;
    if (s == "medium") return Profile::medium;
    if (s == "fast") return Profile::fast;
    throw ConfigError("unknown synth profile '" + std::string(s) + "' (slow|medium|fast)");
}

inline std::string_view to_string(Profile p) {
    switch (p) {
    case Profile::slow: return "slow";
    case Profile::medium: return "medium";
    case Profile::fast: return "fast";
    }
    return "?";
}

/// Maximum current velocity of the slow/medium/fast shear regimes, m/s.
inline double profile_velocity(Profile p) {
    switch (p) {
    case Profile::slow: return 0.50;
    case Profile::medium: return 1.50;
    case Profile::fast: return 2.20;
    }
    return 0.0;
}

inline constexpr double strouhal_number = 0.17;
inline constexpr double riser_diameter = 0.027; ///< m

/// Vortex-shedding frequency in Hz for a local current speed.
inline double shedding_frequency(double velocity) { return strouhal_number * velocity / riser_diameter; }

/// A patch of the riser shedding at the frequency of its local current.
struct ExcitationCell {
    double center = 0.85;   ///< fraction of L
    double width = 0.15;    ///< Gaussian width, fraction of L
    double weight = 1.0;    ///< relative lift magnitude before the U^2 factor
};

struct CaseOptions {
    RiserConfig riser;
    double duration = 9.5; ///< s
    RowRange train{400, 1400};
    RowRange test{1400, 1900};
    std::vector<ExcitationCell> cells{{0.85, 0.15, 1.0}, {0.55, 0.12, 0.25}, {0.30, 0.10, 0.08}};
    double lift_coefficient = 1000.0;
    double noise_fraction = 0.01; ///< Gaussian noise std as a fraction of the field RMS
};

/// Modal forcing of a linearly sheared current U(z) = U_max z / L: each cell
/// sheds at the Strouhal frequency of its local speed with a lift ~ U^2,
/// projected onto sine modes by quadrature. Phases are drawn from `seed`.
inline ForcingSpec shear_forcing(const RiserConfig& cfg, double max_velocity, const std::vector<ExcitationCell>& cells,
                                 double lift_coefficient, std::uint64_t seed) {
    ForcingSpec spec;
    spec.max_velocity = max_velocity;
    Rng rng = make_rng(seed, 0x666f726365);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    constexpr int quad = 400;
    for (const auto& cell : cells) {
        const double u = max_velocity * cell.center;
        const double omega = 2.0 * std::numbers::pi * shedding_frequency(u);
        const double lift = lift_coefficient * cell.weight * u * u;
        for (int n = 1; n <= cfg.n_modes; ++n) {
            double proj = 0.0; // (2/L) int g(z) sin(n pi z / L) dz, midpoint rule in s = z / L
            for (int i = 0; i < quad; ++i) {
                const double s = (i + 0.5) / quad;
                const double g = std::exp(-0.5 * std::pow((s - cell.center) / cell.width, 2));
                proj += g * std::sin(n * std::numbers::pi * s);
            }
            proj *= 2.0 / quad;
            spec.terms.push_back({n, lift * proj, omega, phase(rng)});
        }
    }
    return spec;
}

struct SynthCase {
    StrainField field; ///< normalized on the training window
    dataflow::SensorLayout layout;
    dataflow::WindowSpec windows;
    RiserConfig riser;
    ForcingSpec forcing;
};

/// Default observers: three of the NDP gauges spread along the riser.
inline std::vector<double> default_observers(const std::vector<double>& training) {
    return {training[5], training[12], training[19]};
}

inline SynthCase make_case_at_velocity(double max_velocity, std::uint64_t seed, const std::string& label,
                                       const CaseOptions& opt = {}) {
    opt.riser.validate();
    SynthCase c;
    c.riser = opt.riser;
    c.forcing = shear_forcing(opt.riser, max_velocity, opt.cells, opt.lift_coefficient, seed);
    StrainField raw = simulate(opt.riser, c.forcing, opt.duration);
    raw.case_label = label;
    if (opt.noise_fraction > 0.0) {
        const double rms = std::sqrt(raw.values.squaredNorm() / static_cast<double>(raw.values.size()));
        Rng rng = make_rng(seed, 0x6e6f697365);
        std::normal_distribution<double> noise(0.0, opt.noise_fraction * rms);
        for (Eigen::Index c2 = 1; c2 + 1 < raw.values.cols(); ++c2)
            for (Eigen::Index r = 0; r < raw.values.rows(); ++r) raw.values(r, c2) += noise(rng);
    }
    c.windows.train = opt.train;
    c.windows.test = opt.test;
    c.windows.validate(raw.steps());
    c.field = dataflow::normalize(std::move(raw), opt.train);
    c.layout.length = opt.riser.length;
    c.layout.training = dataflow::ndp_training_locations(opt.riser.length);
    c.layout.observers = default_observers(c.layout.training);
    return c;
}

inline SynthCase make_ndp_like_case(Profile profile, std::uint64_t seed, const CaseOptions& opt = {}) {
    return make_case_at_velocity(profile_velocity(profile), seed, std::string(to_string(profile)), opt);
}

} // namespace riserop::synth

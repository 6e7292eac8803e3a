#pragma once

// Error metrics, RMS profiles, one-sided amplitude spectra and plot-ready
// report files.

#include "riserop/error.hpp"
#include "riserop/format.hpp"

#include <Eigen/Dense>
#include <fftw3.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace riserop::diagnostics {

inline double mse(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) throw ShapeError("mse: length mismatch");
    if (pred.empty()) throw DataError("mse: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

inline double variance(std::span<const double> x) {
    if (x.empty()) throw DataError("variance: empty input");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double s = 0.0;
    for (double v : x) s += (v - mean) * (v - mean);
    return s / static_cast<double>(x.size());
}

/// MSE divided by the (population) variance of the truth.
inline double nmse(std::span<const double> pred, std::span<const double> truth) {
    const double e = mse(pred, truth);
    const double var = variance(truth);
    if (!(var > 0.0)) throw DataError("nmse: truth has zero variance");
    return e / var;
}

inline std::span<const double> as_span(const Eigen::MatrixXd& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

inline double mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw ShapeError("mse: shape mismatch");
    return mse(as_span(pred), as_span(truth));
}

inline double nmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw ShapeError("nmse: shape mismatch");
    return nmse(as_span(pred), as_span(truth));
}

/// Root mean square over time of each column.
inline Eigen::VectorXd rms_profile(const Eigen::MatrixXd& values) {
    if (values.rows() == 0 || values.cols() == 0) throw DataError("rms_profile: empty input");
    return (values.colwise().squaredNorm() / static_cast<double>(values.rows())).array().sqrt().transpose();
}

struct SpectrumResult {
    std::vector<double> frequencies; ///< Hz, 0 .. Nyquist
    std::vector<double> magnitudes;  ///< |X_k|, unnormalized DFT
    double dominant_frequency = 0.0; ///< argmax of magnitude, DC excluded
    double resolution = 0.0;         ///< Hz per bin
};

/// One-sided DFT magnitude. With `hann` the signal is tapered first.
inline SpectrumResult spectrum(std::span<const double> signal, double sample_rate, bool hann = false) {
    const std::size_t n = signal.size();
    if (n < 4) throw DataError("spectrum: signal needs at least 4 samples");
    if (!(sample_rate > 0.0)) throw DataError("spectrum: sample rate must be positive");

    const std::size_t bins = n / 2 + 1;
    std::vector<double> in(signal.begin(), signal.end());
    if (hann)
        for (std::size_t i = 0; i < n; ++i)
            in[i] *= 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
    std::vector<std::complex<double>> out(bins);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(),
                                          reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
    if (!plan) throw NumericalError("spectrum: FFT planning failed");
    fftw_execute(plan);
    fftw_destroy_plan(plan);

    SpectrumResult r;
    r.resolution = sample_rate / static_cast<double>(n);
    r.frequencies.resize(bins);
    r.magnitudes.resize(bins);
    std::size_t best = 1;
    for (std::size_t k = 0; k < bins; ++k) {
        r.frequencies[k] = static_cast<double>(k) * r.resolution;
        r.magnitudes[k] = std::abs(out[k]);
        if (k >= 1 && r.magnitudes[k] > r.magnitudes[best]) best = k;
    }
    r.dominant_frequency = r.frequencies[best];
    return r;
}

// -- reports ------------------------------------------------------------------

/// Truth and prediction at one location over consecutive samples.
struct Trace {
    std::string location; ///< used in the file name
    std::vector<std::size_t> steps;
    std::vector<std::string> window; ///< "train" / "test" per sample
    std::vector<double> truth;
    std::vector<double> prediction;
};

struct MetricRow {
    std::string name;
    double mse = 0.0;
    double nmse = 0.0;
};

struct TrajectoryRecord {
    long iteration = 0;
    std::vector<double> mean;
    std::vector<double> stddev;
};

struct RunArtifacts {
    std::vector<Trace> traces;
    double sample_rate = 1.0;
    std::vector<double> rms_locations;
    std::vector<std::pair<std::string, std::vector<double>>> rms_columns; ///< e.g. truth / prediction
    std::vector<TrajectoryRecord> trajectory;
    std::vector<MetricRow> metrics;
};

inline std::string trace_csv(const Trace& t) {
    std::ostringstream os;
    os << "step,window,truth,prediction\n";
    for (std::size_t i = 0; i < t.steps.size(); ++i)
        os << t.steps[i] << ',' << t.window[i] << ',' << format_double(t.truth[i]) << ','
           << format_double(t.prediction[i]) << '\n';
    return os.str();
}

inline std::string spectrum_csv(const Trace& t, double sample_rate, const std::string& window) {
    std::vector<double> truth, pred;
    for (std::size_t i = 0; i < t.steps.size(); ++i)
        if (window.empty() || t.window[i] == window) {
            truth.push_back(t.truth[i]);
            pred.push_back(t.prediction[i]);
        }
    std::ostringstream os;
    os << "frequency_hz,truth_magnitude,prediction_magnitude\n";
    if (truth.size() < 4) return os.str();
    const auto st = spectrum(truth, sample_rate);
    const auto sp = spectrum(pred, sample_rate);
    for (std::size_t k = 0; k < st.frequencies.size(); ++k)
        os << format_double(st.frequencies[k]) << ',' << format_double(st.magnitudes[k]) << ','
           << format_double(sp.magnitudes[k]) << '\n';
    return os.str();
}

inline std::string trajectory_csv(const std::vector<TrajectoryRecord>& traj) {
    std::ostringstream os;
    os << "iteration";
    const std::size_t m = traj.empty() ? 0 : traj.front().mean.size();
    for (std::size_t i = 0; i < m; ++i) os << ",mu" << i + 1;
    for (std::size_t i = 0; i < m; ++i) os << ",sigma" << i + 1;
    os << '\n';
    for (const auto& r : traj) {
        os << r.iteration;
        for (double v : r.mean) os << ',' << format_double(v);
        for (double v : r.stddev) os << ',' << format_double(v);
        os << '\n';
    }
    return os.str();
}

inline std::string summary_text(const std::vector<MetricRow>& rows) {
    std::ostringstream os;
    os << "window,mse,nmse\n";
    for (const auto& r : rows) os << r.name << ',' << format_double(r.mse) << ',' << format_double(r.nmse) << '\n';
    return os.str();
}

/// Writes trace_<loc>.csv, spectrum_<loc>.csv (prediction window), rms.csv,
/// placement_traj.csv and summary.txt for whatever the run produced.
inline std::vector<std::string> emit_report(const RunArtifacts& run, const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(out_dir)) throw IoError("report directory '" + out_dir + "' does not exist");
    std::vector<std::string> written;
    const auto put = [&](const std::string& name, const std::string& text) {
        const std::string path = (fs::path(out_dir) / name).string();
        write_text_file(path, text);
        written.push_back(path);
    };
    for (const auto& t : run.traces) {
        put("trace_" + t.location + ".csv", trace_csv(t));
        bool has_test = false;
        for (const auto& w : t.window) has_test = has_test || w == "test";
        put("spectrum_" + t.location + ".csv", spectrum_csv(t, run.sample_rate, has_test ? "test" : ""));
    }
    if (!run.rms_columns.empty()) {
        std::ostringstream os;
        os << "z";
        for (const auto& [name, _] : run.rms_columns) os << ',' << name;
        os << '\n';
        for (std::size_t i = 0; i < run.rms_locations.size(); ++i) {
            os << format_double(run.rms_locations[i]);
            for (const auto& [_, col] : run.rms_columns) os << ',' << format_double(col.at(i));
            os << '\n';
        }
        put("rms.csv", os.str());
    }
    if (!run.trajectory.empty()) put("placement_traj.csv", trajectory_csv(run.trajectory));
    put("summary.txt", summary_text(run.metrics));
    return written;
}

} // namespace riserop::diagnostics

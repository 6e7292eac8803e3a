#pragma once

// Strain fields on disk and in memory, normalization and padding conventions,
// time windows, and the builders that turn a field into training batches.

#include "riserop/batch.hpp"
#include "riserop/error.hpp"
#include "riserop/format.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace riserop::dataflow {

using Eigen::MatrixXd;

/// Space-time strain matrix; row = time step, column = location.
struct StrainField {
    MatrixXd values;
    std::vector<double> z_grid; ///< meters from riser bottom, strictly increasing
    double sample_rate = 1.0;   ///< Hz
    std::string case_label = "unnamed";
    double max_velocity = 0.0;       ///< m/s
    double normalization_scale = 1.0; ///< raw = values * normalization_scale

    std::size_t steps() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t locations() const { return z_grid.size(); }

    void validate() const {
        if (values.cols() != static_cast<Eigen::Index>(z_grid.size()))
            throw DataError("strain field column count does not match z_grid");
        for (std::size_t i = 1; i < z_grid.size(); ++i)
            if (!(z_grid[i] > z_grid[i - 1])) throw DataError("z_grid must be strictly increasing");
        if (!values.allFinite()) throw DataError("strain field contains non-finite values");
        if (!(sample_rate > 0.0)) throw DataError("sample rate must be positive");
        if (!(normalization_scale > 0.0)) throw DataError("normalization scale must be positive");
    }

    bool operator==(const StrainField& o) const {
        return values == o.values && z_grid == o.z_grid && sample_rate == o.sample_rate &&
               case_label == o.case_label && max_velocity == o.max_velocity &&
               normalization_scale == o.normalization_scale;
    }
};

/// Observer (branch input) and training (label) locations, in meters.
struct SensorLayout {
    std::vector<double> observers;
    std::vector<double> training;
    double length = 38.0; ///< riser length; trunk coordinates are z / length

    void validate(const StrainField& f) const {
        if (observers.empty() || training.empty()) throw ConfigError("layout needs at least one observer and one training location");
        if (!(length > 0.0)) throw ConfigError("riser length must be positive");
        const double lo = f.z_grid.front(), hi = f.z_grid.back();
        auto check = [&](double z, const char* what) {
            if (!(z >= lo && z <= hi))
                throw ConfigError(std::string(what) + " location " + format_double(z) + " outside the field grid [" +
                                  format_double(lo) + ", " + format_double(hi) + "]");
        };
        for (double z : observers) check(z, "observer");
        for (double z : training) check(z, "training");
    }

    std::vector<double> normalized_training() const {
        std::vector<double> out;
        out.reserve(training.size());
        for (double z : training) out.push_back(z / length);
        return out;
    }
};

struct WindowSpec {
    RowRange train;
    RowRange test;
    int look_back = 1;
    int horizon = 0;

    void validate(std::size_t steps) const {
        if (train.size() == 0 || test.size() == 0) throw ConfigError("train and test windows must be non-empty");
        if (test.begin < train.end) throw ConfigError("test window must start after the training window ends");
        if (train.end > steps || test.end > steps)
            throw ConfigError("window exceeds field length of " + std::to_string(steps) + " steps");
        if (look_back < 1) throw ConfigError("look_back must be >= 1");
        if (horizon < 0) throw ConfigError("horizon must be >= 0");
        if (static_cast<std::size_t>(look_back) >= train.size())
            throw ConfigError("look_back must be shorter than the training window");
    }
};

// -- CSV format ---------------------------------------------------------------

class FieldFormatError : public DataError {
public:
    enum class Reason { header, ragged_row, unsorted_grid, non_numeric, empty };
    FieldFormatError(Reason r, const std::string& what) : DataError(what), reason_(r) {}
    Reason reason() const noexcept { return reason_; }

private:
    Reason reason_;
};

inline void write_strain_field(std::ostream& os, const StrainField& f) {
    f.validate();
    os << "# case=" << f.case_label << " rate_hz=" << format_double(f.sample_rate)
       << " U=" << format_double(f.max_velocity) << " scale=" << format_double(f.normalization_scale) << '\n';
    for (std::size_t j = 0; j < f.z_grid.size(); ++j) os << (j ? "," : "") << format_double(f.z_grid[j]);
    os << '\n';
    std::string line;
    for (Eigen::Index r = 0; r < f.values.rows(); ++r) {
        line.clear();
        for (Eigen::Index c = 0; c < f.values.cols(); ++c) {
            if (c) line += ',';
            line += format_double(f.values(r, c));
        }
        line += '\n';
        os << line;
    }
}

inline void save_strain_field(const StrainField& f, const std::string& path) {
    std::ostringstream os;
    write_strain_field(os, f);
    write_text_file(path, os.str());
}

namespace detail {

inline std::vector<double> parse_csv_row(std::string_view line, std::size_t line_no) {
    std::vector<double> out;
    for (auto cell : split(trim(line), ',')) {
        try {
            out.push_back(parse_double(cell, "strain cell"));
        } catch (const DataError&) {
            throw FieldFormatError(FieldFormatError::Reason::non_numeric,
                                   "line " + std::to_string(line_no) + ": non-numeric cell '" + std::string(trim(cell)) + "'");
        }
    }
    return out;
}

} // namespace detail

inline StrainField read_strain_field(std::istream& is) {
    using R = FieldFormatError::Reason;
    StrainField f;
    std::string line;
    if (!std::getline(is, line) || line.rfind("# ", 0) != 0)
        throw FieldFormatError(R::header, "missing '# case=... rate_hz=... U=... scale=...' header");
    bool have_case = false, have_rate = false, have_u = false, have_scale = false;
    std::istringstream hdr(line.substr(2));
    std::string tok;
    while (hdr >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw FieldFormatError(R::header, "malformed header token '" + tok + "'");
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        try {
            if (key == "case") f.case_label = val, have_case = true;
            else if (key == "rate_hz") f.sample_rate = parse_double(val, "rate_hz"), have_rate = true;
            else if (key == "U") f.max_velocity = parse_double(val, "U"), have_u = true;
            else if (key == "scale") f.normalization_scale = parse_double(val, "scale"), have_scale = true;
            else throw FieldFormatError(R::header, "unknown header key '" + key + "'");
        } catch (const FieldFormatError&) {
            throw;
        } catch (const DataError& e) {
            throw FieldFormatError(R::header, e.what());
        }
    }
    if (!(have_case && have_rate && have_u && have_scale))
        throw FieldFormatError(R::header, "header must define case, rate_hz, U and scale");

    if (!std::getline(is, line)) throw FieldFormatError(R::empty, "missing z_grid line");
    f.z_grid = detail::parse_csv_row(line, 2);
    for (std::size_t i = 1; i < f.z_grid.size(); ++i)
        if (!(f.z_grid[i] > f.z_grid[i - 1]))
            throw FieldFormatError(R::unsorted_grid, "z_grid is not strictly increasing at column " + std::to_string(i));

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 2;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto row = detail::parse_csv_row(line, line_no);
        if (row.size() != f.z_grid.size())
            throw FieldFormatError(R::ragged_row, "line " + std::to_string(line_no) + ": expected " +
                                                      std::to_string(f.z_grid.size()) + " values, found " +
                                                      std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    f.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(f.z_grid.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            f.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    f.validate();
    return f;
}

inline StrainField load_strain_field(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open strain field '" + path + "'");
    return read_strain_field(is);
}

// -- conventions ----------------------------------------------------------------

/// Fraction of the peak absolute strain used as the normalization divisor.
inline constexpr double normalization_fraction = 0.2;

/// Divides every value by 0.2 * max|strain| taken over `stats_rows` (all rows
/// by default) and records the divisor in normalization_scale.
inline StrainField normalize(StrainField f, std::optional<RowRange> stats_rows = std::nullopt) {
    const RowRange rows = stats_rows.value_or(RowRange{0, f.steps()});
    if (rows.end > f.steps() || rows.size() == 0) throw ConfigError("normalization window outside the field");
    Eigen::Index pr = 0, pc = 0;
    const double peak = f.values.middleRows(static_cast<Eigen::Index>(rows.begin), static_cast<Eigen::Index>(rows.size()))
                            .cwiseAbs()
                            .maxCoeff(&pr, &pc);
    if (!(peak > 0.0)) throw DataError("cannot normalize an all-zero field");
    const double divisor = normalization_fraction * peak;
    f.values /= divisor;
    // the quotient can land an ulp off; pin the argmax so a second pass is a no-op
    double& at_peak = f.values(static_cast<Eigen::Index>(rows.begin) + pr, pc);
    at_peak = std::copysign(1.0 / normalization_fraction, at_peak);
    f.normalization_scale *= divisor;
    return f;
}

/// Appends zero-strain columns at z = 0 and z = length (pinned ends).
inline StrainField pad_boundaries(StrainField f, double length = 38.0) {
    if (f.z_grid.empty()) throw DataError("cannot pad an empty grid");
    if (f.z_grid.front() <= 0.0 || f.z_grid.back() >= length)
        throw DataError("z_grid already reaches the riser endpoints");
    MatrixXd padded = MatrixXd::Zero(f.values.rows(), f.values.cols() + 2);
    padded.middleCols(1, f.values.cols()) = f.values;
    f.values = std::move(padded);
    f.z_grid.insert(f.z_grid.begin(), 0.0);
    f.z_grid.push_back(length);
    return f;
}

/// Removes the given columns (e.g. a sensor with a faulty record).
inline StrainField drop_columns(StrainField f, std::vector<std::size_t> columns) {
    std::sort(columns.begin(), columns.end());
    columns.erase(std::unique(columns.begin(), columns.end()), columns.end());
    for (std::size_t c : columns)
        if (c >= f.locations()) throw ConfigError("drop column " + std::to_string(c) + " out of range");
    std::vector<Eigen::Index> keep;
    std::vector<double> grid;
    for (std::size_t c = 0; c < f.locations(); ++c)
        if (!std::binary_search(columns.begin(), columns.end(), c)) {
            keep.push_back(static_cast<Eigen::Index>(c));
            grid.push_back(f.z_grid[c]);
        }
    MatrixXd v(f.values.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) v.col(static_cast<Eigen::Index>(k)) = f.values.col(keep[k]);
    f.values = std::move(v);
    f.z_grid = std::move(grid);
    return f;
}

// -- interpolation --------------------------------------------------------------

/// Value and slope (per meter) of the piecewise-linear interpolant.
struct Interpolated {
    double value = 0.0;
    double slope = 0.0;
};

/// Segment lookup reused across rows for a fixed location.
struct GridPoint {
    Eigen::Index left = 0;
    double weight = 0.0; ///< 0 at z_grid[left], 1 at z_grid[left + 1]
    double inv_dz = 0.0;
};

inline GridPoint locate(const std::vector<double>& grid, double z) {
    if (grid.size() < 2) throw DataError("interpolation needs at least two grid points");
    if (!(z >= grid.front() && z <= grid.back()))
        throw DataError("location " + format_double(z) + " outside the field grid");
    auto it = std::upper_bound(grid.begin(), grid.end(), z);
    auto k = static_cast<std::size_t>(it - grid.begin());
    k = k == 0 ? 0 : k - 1;
    if (k >= grid.size() - 1) k = grid.size() - 2;
    const double dz = grid[k + 1] - grid[k];
    return {static_cast<Eigen::Index>(k), (z - grid[k]) / dz, 1.0 / dz};
}

inline Interpolated interpolate(const MatrixXd& values, Eigen::Index row, const GridPoint& g) {
    const double v0 = values(row, g.left);
    const double v1 = values(row, g.left + 1);
    Interpolated out;
    out.slope = (v1 - v0) * g.inv_dz;
    if (g.weight == 0.0) out.value = v0;
    else if (g.weight == 1.0) out.value = v1;
    else out.value = v0 + (v1 - v0) * g.weight;
    return out;
}

inline Interpolated interpolate(const StrainField& f, std::size_t row, double z) {
    return interpolate(f.values, static_cast<Eigen::Index>(row), locate(f.z_grid, z));
}

// -- batch builders -----------------------------------------------------------

namespace detail {

inline void check_window(const StrainField& f, const RowRange& w) {
    if (w.size() == 0) throw ConfigError("empty window");
    if (w.end > f.steps())
        throw ConfigError("window [" + std::to_string(w.begin) + ", " + std::to_string(w.end) +
                          ") exceeds field length of " + std::to_string(f.steps()) + " steps");
}

inline std::vector<GridPoint> locate_all(const StrainField& f, const std::vector<double>& zs) {
    std::vector<GridPoint> out;
    out.reserve(zs.size());
    for (double z : zs) out.push_back(locate(f.z_grid, z));
    return out;
}

inline void fill_labels(const StrainField& f, const std::vector<GridPoint>& pts, std::size_t row, Eigen::Index sample,
                        MatrixXd& labels) {
    for (std::size_t j = 0; j < pts.size(); ++j)
        labels(sample, static_cast<Eigen::Index>(j)) =
            interpolate(f.values, static_cast<Eigen::Index>(row), pts[j]).value;
}

} // namespace detail

/// One sample per time step: branch = observer strains at t_j, labels =
/// strains at the training locations at t_j.
inline SampleBatch build_reconstruction_batch(const StrainField& f, const SensorLayout& layout, const RowRange& window,
                                              std::size_t stride = 1) {
    detail::check_window(f, window);
    layout.validate(f);
    if (stride == 0) throw ConfigError("stride must be >= 1");
    const auto obs = detail::locate_all(f, layout.observers);
    const auto lab = detail::locate_all(f, layout.training);
    const std::size_t n = (window.size() + stride - 1) / stride;

    SampleBatch b;
    b.branch_inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(obs.size()));
    b.labels.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(lab.size()));
    b.trunk_coords = layout.normalized_training();
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t row = window.begin + s * stride;
        const auto si = static_cast<Eigen::Index>(s);
        for (std::size_t i = 0; i < obs.size(); ++i)
            b.branch_inputs(si, static_cast<Eigen::Index>(i)) =
                interpolate(f.values, static_cast<Eigen::Index>(row), obs[i]).value;
        detail::fill_labels(f, lab, row, si, b.labels);
        b.times.push_back(static_cast<double>(row) / static_cast<double>(f.steps()));
        b.label_steps.push_back(row);
    }
    b.provenance = {f.case_label, window, layout.observers, layout.training};
    return b;
}

/// Forecasting samples: the branch row for target step j stacks observer
/// strains at steps j-lb .. j-1 (time-major, then space); the label is the
/// strain at the training locations at step j + horizon. Every step used lies
/// inside `window`.
inline SampleBatch build_forecast_batch(const StrainField& f, const SensorLayout& layout, const RowRange& window,
                                        int look_back, int horizon, std::size_t stride = 1) {
    detail::check_window(f, window);
    layout.validate(f);
    if (look_back < 1 || horizon < 0) throw ConfigError("look_back must be >= 1 and horizon >= 0");
    if (stride == 0) throw ConfigError("stride must be >= 1");
    const auto lb = static_cast<std::size_t>(look_back);
    const auto h = static_cast<std::size_t>(horizon);
    if (lb + h >= window.size())
        throw ConfigError("look_back + horizon must be shorter than the window (" + std::to_string(window.size()) + ")");
    const auto obs = detail::locate_all(f, layout.observers);
    const auto lab = detail::locate_all(f, layout.training);
    const std::size_t total = window.size() - lb - h;
    const std::size_t n = (total + stride - 1) / stride;
    const std::size_t m = obs.size();

    SampleBatch b;
    b.branch_inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m * lb));
    b.labels.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(lab.size()));
    b.trunk_coords = layout.normalized_training();
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t j = window.begin + lb + s * stride; // first step after the look-back stack
        const auto si = static_cast<Eigen::Index>(s);
        for (std::size_t k = 0; k < lb; ++k) {
            const std::size_t row = j - lb + k;
            for (std::size_t i = 0; i < m; ++i)
                b.branch_inputs(si, static_cast<Eigen::Index>(k * m + i)) =
                    interpolate(f.values, static_cast<Eigen::Index>(row), obs[i]).value;
        }
        const std::size_t label_row = j + h;
        detail::fill_labels(f, lab, label_row, si, b.labels);
        b.times.push_back(static_cast<double>(label_row) / static_cast<double>(f.steps()));
        b.label_steps.push_back(label_row);
    }
    b.provenance = {f.case_label, window, layout.observers, layout.training};
    return b;
}

// -- windows ----------------------------------------------------------------------

/// A window over a shared field.
struct SampleView {
    std::shared_ptr<const StrainField> field;
    RowRange rows;

    std::size_t size() const { return rows.size(); }
};

struct WindowSplit {
    SampleView train;
    SampleView test;
    double divisor = 1.0; ///< applied by this split; 1 for an already-normalized field
};

/// Normalizes with statistics of the training window only and returns
/// non-overlapping views of the two windows.
inline WindowSplit split_windows(const StrainField& f, const WindowSpec& spec) {
    spec.validate(f.steps());
    auto normalized = std::make_shared<const StrainField>(normalize(f, spec.train));
    const double divisor = normalized->normalization_scale / f.normalization_scale;
    return {{normalized, spec.train}, {normalized, spec.test}, divisor};
}

inline SampleBatch build_batch(const SampleView& view, const SensorLayout& layout, const WindowSpec& spec,
                               std::size_t stride = 1) {
    if (spec.look_back == 1 && spec.horizon == 0)
        return build_reconstruction_batch(*view.field, layout, view.rows, stride);
    return build_forecast_batch(*view.field, layout, view.rows, spec.look_back, spec.horizon, stride);
}

// -- NDP conventions ---------------------------------------------------------------

/// Cross-flow strain gauge positions on the 38 m NDP riser, meters from the top.
inline constexpr double ndp_length = 38.0;
inline constexpr std::array<double, 24> ndp_cf_depths_from_top{
    2.555,  3.084,  3.224,  4.155,  6.030,  8.609,  8.889,  10.285, 13.676, 16.452, 16.891, 19.997,
    20.193, 21.393, 22.460, 23.165, 25.153, 26.254, 28.863, 29.365, 31.191, 33.005, 36.559, 37.332};
/// Gauge with an unusable record, excluded from the layout.
inline constexpr double ndp_faulty_depth_from_top = 31.191;

/// The 23 usable CF gauges plus zero-strain endpoints, meters from the bottom, ascending.
inline std::vector<double> ndp_training_locations(double length = ndp_length) {
    std::vector<double> z{0.0, length};
    for (double d : ndp_cf_depths_from_top)
        if (d != ndp_faulty_depth_from_top) z.push_back(length * (1.0 - d / ndp_length));
    std::sort(z.begin(), z.end());
    return z;
}

/// Training/test windows of the NDP shear cases 2330, 2430 and 2500.
inline WindowSpec ndp_case_windows(int case_number) {
    WindowSpec w;
    switch (case_number) {
    case 2330: w.train = {15000, 80000}; w.test = {80000, 100000}; break;
    case 2430: w.train = {15000, 35000}; w.test = {35000, 45000}; break;
    case 2500: w.train = {16000, 29000}; w.test = {29000, 35000}; break;
    default: throw ConfigError("no window table for case " + std::to_string(case_number));
    }
    return w;
}

} // namespace riserop::dataflow

#pragma once

// Proper orthogonal decomposition of strain snapshots and the mode-extrema
// observer selection heuristics.

#include "riserop/batch.hpp"
#include "riserop/dataflow.hpp"
#include "riserop/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace riserop::pod {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct SnapshotMatrix {
    MatrixXd values;                ///< rows = time samples, columns = locations
    std::vector<double> locations;  ///< meters
    bool mean_removed = false;
};

inline SnapshotMatrix build_snapshot_matrix(const dataflow::StrainField& f, const RowRange& window,
                                            const std::vector<double>& locations, std::size_t stride = 1,
                                            bool remove_mean = false) {
    if (window.size() == 0 || window.end > f.steps()) throw ConfigError("snapshot window outside the field");
    if (stride == 0) throw ConfigError("stride must be >= 1");
    if (locations.size() < 2) throw ConfigError("snapshot matrix needs at least two locations");
    std::vector<dataflow::GridPoint> pts;
    for (double z : locations) {
        if (!(z >= f.z_grid.front() && z <= f.z_grid.back()))
            throw ConfigError("snapshot location " + format_double(z) + " outside the field grid");
        pts.push_back(dataflow::locate(f.z_grid, z));
    }
    const std::size_t rows = (window.size() + stride - 1) / stride;
    if (rows < 2) throw ConfigError("snapshot matrix needs at least two time samples");
    SnapshotMatrix e{MatrixXd(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(locations.size())), locations,
                     remove_mean};
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < pts.size(); ++c)
            e.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                dataflow::interpolate(f.values, static_cast<Eigen::Index>(window.begin + r * stride), pts[c]).value;
    if (remove_mean) e.values.rowwise() -= e.values.colwise().mean();
    return e;
}

struct SymmetricEigen {
    VectorXd values;  ///< descending
    MatrixXd vectors; ///< column k pairs with values[k]
    int sweeps = 0;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// `tol * ||A||_F`. Eigenpairs are returned sorted by descending eigenvalue;
/// each eigenvector's largest-magnitude component is made positive.
inline SymmetricEigen jacobi_eigen(MatrixXd a, double tol = 1e-14, int max_sweeps = 100) {
    const Eigen::Index n = a.rows();
    if (n == 0 || a.cols() != n) throw ShapeError("jacobi_eigen needs a non-empty square matrix");
    if (!a.allFinite()) throw NumericalError("jacobi_eigen: non-finite entries");
    MatrixXd v = MatrixXd::Identity(n, n);
    const double norm = a.norm();
    const auto off_norm = [&] {
        double s = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < n; ++i)
                if (i != j) s += a(i, j) * a(i, j);
        return std::sqrt(s);
    };
    int sweep = 0;
    while (sweep < max_sweeps && off_norm() > tol * norm) {
        ++sweep;
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                // A <- J^T A J with J the (p, q) rotation
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (off_norm() > tol * norm) throw NumericalError("jacobi_eigen did not converge");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });
    SymmetricEigen out{VectorXd(n), MatrixXd(n, n), sweep};
    for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index src = order[static_cast<std::size_t>(k)];
        out.values[k] = a(src, src);
        VectorXd col = v.col(src);
        Eigen::Index imax = 0;
        col.cwiseAbs().maxCoeff(&imax);
        if (col[imax] < 0.0) col = -col;
        out.vectors.col(k) = col;
    }
    return out;
}

struct PODResult {
    VectorXd eigenvalues;              ///< descending
    MatrixXd modes;                    ///< column k = unit-norm spatial mode k
    std::vector<double> contributions; ///< percent of total variance
    std::vector<double> locations;     ///< meters, one per mode entry
    MatrixXd covariance;
};

/// Eigendecomposition of the spatial covariance C = E^T E / rows.
inline PODResult pod_decompose(const SnapshotMatrix& e) {
    if (e.values.rows() < 2 || e.values.cols() < 2) throw ShapeError("snapshot matrix must be at least 2x2");
    if (!e.values.allFinite()) throw NumericalError("snapshot matrix contains non-finite entries");
    PODResult r;
    r.covariance = e.values.transpose() * e.values / static_cast<double>(e.values.rows());
    r.covariance = 0.5 * (r.covariance + r.covariance.transpose()).eval();
    auto eig = jacobi_eigen(r.covariance);
    r.eigenvalues = std::move(eig.values);
    r.modes = std::move(eig.vectors);
    r.locations = e.locations;
    const double total = r.eigenvalues.sum();
    r.contributions.resize(static_cast<std::size_t>(r.eigenvalues.size()));
    for (Eigen::Index k = 0; k < r.eigenvalues.size(); ++k)
        r.contributions[static_cast<std::size_t>(k)] = total > 0.0 ? 100.0 * r.eigenvalues[k] / total : 0.0;
    return r;
}

// -- extrema --------------------------------------------------------------------

enum class ExtremumKind { max, min };

struct Extremum {
    std::size_t index = 0;
    double z = 0.0;
    double value = 0.0;
    ExtremumKind kind = ExtremumKind::max;
};

/// Strict interior local extrema, sorted by |value| descending (ties: smaller
/// index first). Plateaus are not extrema.
inline std::vector<Extremum> mode_extrema(const VectorXd& mode, const std::vector<double>& z_grid) {
    if (mode.size() != static_cast<Eigen::Index>(z_grid.size())) throw ShapeError("mode and grid lengths differ");
    if (mode.size() < 3) throw ShapeError("mode_extrema needs at least 3 points");
    std::vector<Extremum> out;
    for (Eigen::Index i = 1; i + 1 < mode.size(); ++i) {
        const double l = mode[i - 1], c = mode[i], r = mode[i + 1];
        if (c > l && c > r) out.push_back({static_cast<std::size_t>(i), z_grid[static_cast<std::size_t>(i)], c, ExtremumKind::max});
        else if (c < l && c < r) out.push_back({static_cast<std::size_t>(i), z_grid[static_cast<std::size_t>(i)], c, ExtremumKind::min});
    }
    std::stable_sort(out.begin(), out.end(), [](const Extremum& a, const Extremum& b) {
        if (std::abs(a.value) != std::abs(b.value)) return std::abs(a.value) > std::abs(b.value);
        return a.index < b.index;
    });
    return out;
}

/// A: two-thirds of the observers from mode 1, the rest from mode 2.
/// B: one per mode, cycling over modes 1..3.
/// C: cycling over modes 1..3, taking mode 1's dominant extremum but starting
///    modes 2 and 3 from their second-ranked (minor) extremum.
enum class Strategy { A, B, C };

inline Strategy parse_strategy(const std::string& s) {
    if (s == "A" || s == "a") return Strategy::A;
    if (s == "B" || s == "b") return Strategy::B;
    if (s == "C" || s == "c") return Strategy::C;
    throw ConfigError("unknown POD placement strategy '" + s + "'");
}

struct Placement {
    std::vector<double> locations;
    std::vector<std::size_t> indices; ///< into PODResult::locations
    std::vector<int> source_modes;    ///< 1-based
};

inline Placement pod_placement(const PODResult& r, int m, Strategy strategy) {
    if (m < 1) throw ConfigError("pod_placement needs m >= 1");
    const int modes_needed = strategy == Strategy::A ? 2 : 3;
    if (r.modes.cols() < modes_needed) throw DataError("not enough POD modes for the strategy");

    // Per-mode ranked candidates and the rank each mode starts from.
    std::vector<std::vector<Extremum>> ranked;
    std::vector<std::size_t> cursor;
    for (int k = 0; k < modes_needed; ++k) {
        ranked.push_back(mode_extrema(r.modes.col(k), r.locations));
        std::size_t start = 0;
        if (strategy == Strategy::C && k > 0 && ranked.back().size() > 1) start = 1;
        cursor.push_back(start);
    }

    std::vector<int> sequence; // which mode supplies each observer
    if (strategy == Strategy::A) {
        const int from_second = m / 3;
        sequence.assign(static_cast<std::size_t>(m - from_second), 0);
        sequence.insert(sequence.end(), static_cast<std::size_t>(from_second), 1);
    } else {
        for (int i = 0; i < m; ++i) sequence.push_back(i % 3);
    }

    Placement out;
    const auto taken = [&](std::size_t idx) {
        return std::find(out.indices.begin(), out.indices.end(), idx) != out.indices.end();
    };
    for (int k : sequence) {
        auto& cands = ranked[static_cast<std::size_t>(k)];
        auto& cur = cursor[static_cast<std::size_t>(k)];
        bool placed = false;
        // Minor-extremum start may skip the dominant one; revisit it last.
        std::vector<std::size_t> order;
        for (std::size_t i = cur; i < cands.size(); ++i) order.push_back(i);
        for (std::size_t i = 0; i < cur && i < cands.size(); ++i) order.push_back(i);
        for (std::size_t i : order) {
            if (taken(cands[i].index)) continue;
            out.indices.push_back(cands[i].index);
            out.locations.push_back(cands[i].z);
            out.source_modes.push_back(k + 1);
            cur = i + 1;
            placed = true;
            break;
        }
        if (!placed)
            throw DataError("insufficient extrema in POD mode " + std::to_string(k + 1) + " for strategy placement");
    }
    return out;
}

} // namespace riserop::pod

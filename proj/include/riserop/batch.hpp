#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace riserop {

/// Half-open range of time-step rows [begin, end).
struct RowRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end > begin ? end - begin : 0; }
    bool contains(std::size_t row) const { return row >= begin && row < end; }
    bool operator==(const RowRange&) const = default;
};

/// Where a batch came from; carried along for reports.
struct Provenance {
    std::string case_label;
    RowRange window;
    std::vector<double> observer_locations; ///< meters
    std::vector<double> label_locations;    ///< meters
};

/// Paired branch inputs, trunk coordinates and labels for one window.
///
/// Row n of `branch_inputs` and of `labels` belong to the same sample; column j
/// of `labels` is the strain at `trunk_coords[j]`. `times` holds a normalized
/// time per sample and is only read when the trunk takes (t, z) inputs.
struct SampleBatch {
    Eigen::MatrixXd branch_inputs; ///< N x (m * lb)
    std::vector<double> trunk_coords;
    Eigen::MatrixXd labels; ///< N x |trunk_coords|
    std::vector<double> times;
    std::vector<std::size_t> label_steps; ///< field row of each sample's label
    Provenance provenance;

    std::size_t size() const { return static_cast<std::size_t>(branch_inputs.rows()); }
    bool empty() const { return size() == 0; }
};

} // namespace riserop

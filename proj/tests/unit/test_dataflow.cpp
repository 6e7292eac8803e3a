#include "checks.hpp"
#include "riserop/dataflow.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace riserop;
using namespace riserop::dataflow;
using Reason = FieldFormatError::Reason;

namespace {

StrainField random_field(std::mt19937_64& rng, int steps, std::vector<double> grid) {
    StrainField f;
    f.z_grid = std::move(grid);
    f.values = checks::random_matrix(rng, steps, static_cast<Eigen::Index>(f.z_grid.size()));
    f.sample_rate = 200.0;
    f.case_label = "toy";
    f.max_velocity = 1.5;
    return f;
}

Reason reason_of(const std::string& text) {
    std::istringstream is(text);
    try {
        read_strain_field(is);
    } catch (const FieldFormatError& e) {
        return e.reason();
    }
    ADD_FAILURE() << "no error for:\n" << text;
    return Reason::empty;
}

} // namespace

TEST(LoadField, TwoLocationsThreeSteps) {
    std::istringstream is("# case=a rate_hz=10 U=1.5 scale=1\n0.5,2\n1,2\n3,4\n5,6\n");
    const auto f = read_strain_field(is);
    ASSERT_EQ(f.values.rows(), 3);
    ASSERT_EQ(f.values.cols(), 2);
    EXPECT_EQ(f.values(0, 0), 1.0);
    EXPECT_EQ(f.values(0, 1), 2.0);
    EXPECT_EQ(f.values(2, 1), 6.0);
    EXPECT_EQ(f.z_grid, (std::vector<double>{0.5, 2.0}));
    EXPECT_EQ(f.sample_rate, 10.0);
    EXPECT_EQ(f.case_label, "a");
}

TEST(LoadField, DistinctErrorReasons) {
    EXPECT_EQ(reason_of("# case=a rate_hz=10 U=1 scale=1\n2,1\n1,2\n"), Reason::unsorted_grid);
    EXPECT_EQ(reason_of("# case=a rate_hz=10 U=1 scale=1\n1,2\n1,2\n3\n"), Reason::ragged_row);
    EXPECT_EQ(reason_of("# case=a rate_hz=10 U=1 scale=1\n1,2\n1,x\n"), Reason::non_numeric);
    EXPECT_EQ(reason_of("case,a\n1,2\n"), Reason::header);
    EXPECT_EQ(reason_of("# case=a rate_hz=10\n1,2\n"), Reason::header);
    EXPECT_EQ(reason_of("# case=a rate_hz=10 U=1 scale=1\n"), Reason::empty);
}

TEST(LoadField, RoundTripIsExact) {
    std::mt19937_64 rng(1);
    auto f = random_field(rng, 17, {0.1, 1.0 / 3.0, 2.0, 37.9});
    f.normalization_scale = 0.1 + 1e-17;
    f.values(3, 2) = 1e-300;
    f.values(4, 1) = -std::nextafter(1.0, 2.0);
    std::ostringstream os;
    write_strain_field(os, f);
    std::istringstream is(os.str());
    EXPECT_EQ(read_strain_field(is), f);
}

TEST(LoadField, SubnormalsReadBackButOverflowDoesNot) {
    std::mt19937_64 rng(2);
    auto f = random_field(rng, 4, {0.0, 38.0});
    f.values(0, 0) = std::numeric_limits<double>::denorm_min();
    f.values(1, 1) = -3.5e-310;
    f.values(2, 0) = std::numeric_limits<double>::max();
    std::ostringstream os;
    write_strain_field(os, f);
    std::istringstream is(os.str());
    EXPECT_EQ(read_strain_field(is), f);
    EXPECT_EQ(reason_of("# case=a rate_hz=10 U=1.5 scale=1\n0,1\n1e400,2\n"), Reason::non_numeric);
}

TEST(LoadField, MissingFileIsIoError) {
    EXPECT_THROW(load_strain_field("/nonexistent/field.csv"), IoError);
}

TEST(Normalize, DivisorIsFifthOfPeak) {
    StrainField f;
    f.z_grid = {1.0, 2.0};
    f.values.resize(2, 2);
    f.values << 4.0, -10.0, 1.0, 3.0;
    const auto n = normalize(f);
    EXPECT_EQ(n.normalization_scale, 2.0);
    EXPECT_EQ(n.values(0, 0), 2.0);
    EXPECT_EQ(n.values.cwiseAbs().maxCoeff(), 5.0);
    EXPECT_EQ(n.values(0, 1), -5.0);
}

TEST(Normalize, IsAFixedPoint) {
    std::mt19937_64 rng(2);
    const auto once = normalize(random_field(rng, 30, {1.0, 2.0, 3.0}));
    const auto twice = normalize(once);
    EXPECT_EQ(twice.normalization_scale / once.normalization_scale, 1.0);
    EXPECT_EQ(twice.values, once.values);
}

TEST(Normalize, ConstantFieldBecomesFive) {
    StrainField f;
    f.z_grid = {1.0, 2.0, 3.0};
    f.values = Eigen::MatrixXd::Constant(4, 3, 0.7);
    const auto n = normalize(f);
    for (Eigen::Index i = 0; i < n.values.size(); ++i) EXPECT_EQ(n.values.data()[i], 5.0);
}

TEST(Normalize, RawValuesRecoverable) {
    std::mt19937_64 rng(3);
    const auto raw = random_field(rng, 50, {1.0, 2.0, 3.0, 4.0});
    const auto n = normalize(normalize(raw));
    const Eigen::MatrixXd back = n.values * n.normalization_scale;
    for (Eigen::Index i = 0; i < raw.values.size(); ++i)
        EXPECT_NEAR(back.data()[i], raw.values.data()[i], 1e-12 * std::abs(raw.values.data()[i]));
}

TEST(Normalize, AllZeroRejected) {
    StrainField f;
    f.z_grid = {1.0};
    f.values = Eigen::MatrixXd::Zero(3, 1);
    EXPECT_THROW(normalize(f), DataError);
}

TEST(Normalize, UsesOnlyStatisticsRows) {
    StrainField f;
    f.z_grid = {1.0};
    f.values.resize(3, 1);
    f.values << 1.0, 2.0, 100.0;
    EXPECT_EQ(normalize(f, RowRange{0, 2}).normalization_scale, 0.4);
}

TEST(Pad, TwentyThreeBecomeTwentyFive) {
    std::mt19937_64 rng(4);
    std::vector<double> grid;
    for (int i = 1; i <= 23; ++i) grid.push_back(i * 38.0 / 24.0);
    const auto p = pad_boundaries(random_field(rng, 40, grid), 38.0);
    ASSERT_EQ(p.values.cols(), 25);
    EXPECT_EQ(p.z_grid.front(), 0.0);
    EXPECT_EQ(p.z_grid.back(), 38.0);
    for (Eigen::Index r = 0; r < p.values.rows(); ++r) {
        EXPECT_EQ(p.values(r, 0), 0.0);
        EXPECT_EQ(p.values(r, 24), 0.0);
    }
}

TEST(Pad, EndpointsAlreadyPresentRejected) {
    std::mt19937_64 rng(5);
    EXPECT_THROW(pad_boundaries(random_field(rng, 3, {0.0, 1.0}), 38.0), DataError);
    EXPECT_THROW(pad_boundaries(random_field(rng, 3, {1.0, 38.0}), 38.0), DataError);
}

TEST(Reconstruction, ShapeAndGridValues) {
    std::mt19937_64 rng(6);
    const auto f = random_field(rng, 150, {0.0, 5.0, 10.0, 20.0, 38.0});
    const SensorLayout layout{{5.0, 10.0, 20.0}, {0.0, 10.0, 38.0}, 38.0};
    const auto b = build_reconstruction_batch(f, layout, {20, 120});
    EXPECT_EQ(b.branch_inputs.rows(), 100);
    EXPECT_EQ(b.branch_inputs.cols(), 3);
    EXPECT_EQ(b.labels.cols(), 3);
    for (Eigen::Index s = 0; s < 100; ++s) {
        EXPECT_EQ(b.branch_inputs(s, 0), f.values(20 + s, 1));
        EXPECT_EQ(b.branch_inputs(s, 2), f.values(20 + s, 3));
        EXPECT_EQ(b.labels(s, 2), f.values(20 + s, 4));
    }
    EXPECT_EQ(b.trunk_coords, (std::vector<double>{0.0, 10.0 / 38.0, 1.0}));
}

TEST(Reconstruction, TinyFieldAgainstHandBatch) {
    StrainField f;
    f.z_grid = {0.0, 1.0, 2.0};
    f.values.resize(4, 3);
    f.values << 0, 1, 2,  //
        0, 3, 5,          //
        0, -1, 1,         //
        0, 4, 0;
    const SensorLayout layout{{0.5, 1.5}, {1.0, 2.0}, 2.0};
    const auto b = build_reconstruction_batch(f, layout, {1, 4});
    Eigen::MatrixXd branch(3, 2), labels(3, 2);
    branch << 1.5, 4.0, -0.5, 0.0, 2.0, 2.0;
    labels << 3, 5, -1, 1, 4, 0;
    EXPECT_EQ(b.branch_inputs, branch);
    EXPECT_EQ(b.labels, labels);
    EXPECT_EQ(b.label_steps, (std::vector<std::size_t>{1, 2, 3}));
}

TEST(Reconstruction, WindowBeyondFieldRejected) {
    std::mt19937_64 rng(7);
    const auto f = random_field(rng, 10, {0.0, 1.0});
    EXPECT_THROW(build_reconstruction_batch(f, {{0.5}, {1.0}, 1.0}, {5, 11}), ConfigError);
}

TEST(Forecast, CountsAndWidth) {
    std::mt19937_64 rng(8);
    const auto f = random_field(rng, 30, {0.0, 1.0, 2.0});
    const auto b = build_forecast_batch(f, {{0.0, 1.0}, {2.0}, 2.0}, {10, 20}, 3, 0);
    EXPECT_EQ(b.branch_inputs.rows(), 7);
    EXPECT_EQ(b.branch_inputs.cols(), 6);
    EXPECT_THROW(build_forecast_batch(f, {{0.0}, {2.0}, 2.0}, {10, 20}, 8, 2), ConfigError);
}

TEST(Forecast, FiveStepToyAgainstHandStacks) {
    StrainField f;
    f.z_grid = {0.0, 1.0};
    f.values.resize(5, 2);
    f.values << 1, 10, 2, 20, 3, 30, 4, 40, 5, 50;
    const auto b = build_forecast_batch(f, {{0.0, 1.0}, {1.0}, 1.0}, {0, 5}, 2, 0);
    Eigen::MatrixXd branch(3, 4), labels(3, 1);
    branch << 1, 10, 2, 20,  //
        2, 20, 3, 30,        //
        3, 30, 4, 40;
    labels << 30, 40, 50;
    EXPECT_EQ(b.branch_inputs, branch);
    EXPECT_EQ(b.labels, labels);
}

TEST(Forecast, LookBackOneEqualsShiftedReconstruction) {
    std::mt19937_64 rng(9);
    const auto f = random_field(rng, 60, {0.0, 3.0, 7.5, 12.0});
    const SensorLayout layout{{1.0, 6.5, 11.0}, {0.0, 3.0, 10.0}, 12.0};
    const auto fc = build_forecast_batch(f, layout, {10, 50}, 1, 0);
    const auto rec_in = build_reconstruction_batch(f, layout, {10, 49});
    const auto rec_out = build_reconstruction_batch(f, layout, {11, 50});
    EXPECT_EQ(fc.branch_inputs, rec_in.branch_inputs);
    EXPECT_EQ(fc.labels, rec_out.labels);
}

TEST(Forecast, BranchNeverSeesTheLabelStep) {
    // Encode the step index in every value so each branch entry names its source row.
    StrainField f;
    f.z_grid = {0.0, 1.0};
    f.values.resize(40, 2);
    for (Eigen::Index r = 0; r < 40; ++r) f.values.row(r).setConstant(static_cast<double>(r));
    for (int lb : {1, 2, 5})
        for (int h : {0, 1, 3}) {
            const auto b = build_forecast_batch(f, {{0.3, 0.9}, {0.5}, 1.0}, {5, 35}, lb, h);
            for (Eigen::Index s = 0; s < b.branch_inputs.rows(); ++s) {
                const double label_step = b.labels(s, 0);
                EXPECT_EQ(label_step, static_cast<double>(b.label_steps[static_cast<std::size_t>(s)]));
                EXPECT_LT(b.branch_inputs.row(s).maxCoeff(), label_step - h);
                EXPECT_GE(b.branch_inputs.row(s).minCoeff(), 5.0);
            }
            EXPECT_LT(b.label_steps.back(), 35u);
        }
}

TEST(SplitWindows, TableWindowLengths) {
    StrainField f;
    f.z_grid = {0.0, 1.0};
    f.values = Eigen::MatrixXd::Ones(45000, 2);
    const auto s2430 = split_windows(f, ndp_case_windows(2430));
    EXPECT_EQ(s2430.train.size(), 20000u);
    EXPECT_EQ(s2430.test.size(), 10000u);
    const auto s2500 = split_windows(f, ndp_case_windows(2500));
    EXPECT_EQ(s2500.train.size(), 13000u);
    EXPECT_EQ(s2500.test.size(), 6000u);
}

TEST(SplitWindows, TestWindowDoesNotInfluenceScale) {
    std::mt19937_64 rng(10);
    auto f = random_field(rng, 100, {0.0, 1.0});
    WindowSpec spec{{0, 60}, {60, 100}, 1, 0};
    const auto a = split_windows(f, spec);
    f.values.middleRows(60, 40) *= 1000.0;
    const auto b = split_windows(f, spec);
    EXPECT_EQ(a.divisor, b.divisor);
    EXPECT_EQ(a.train.rows.end, a.test.rows.begin);
    EXPECT_FALSE(a.train.rows.contains(a.test.rows.begin));
}

TEST(SplitWindows, OverlapAndRangeRejected) {
    std::mt19937_64 rng(11);
    const auto f = random_field(rng, 100, {0.0, 1.0});
    EXPECT_THROW(split_windows(f, {{0, 60}, {50, 100}, 1, 0}), ConfigError);
    EXPECT_THROW(split_windows(f, {{0, 60}, {60, 101}, 1, 0}), ConfigError);
    EXPECT_THROW(split_windows(f, {{0, 5}, {60, 100}, 5, 0}), ConfigError);
}

TEST(Interpolate, LinearBetweenNodesWithSlope) {
    StrainField f;
    f.z_grid = {0.0, 2.0, 3.0};
    f.values.resize(1, 3);
    f.values << 1.0, 5.0, -1.0;
    const auto a = interpolate(f, 0, 0.5);
    EXPECT_DOUBLE_EQ(a.value, 2.0);
    EXPECT_DOUBLE_EQ(a.slope, 2.0);
    const auto b = interpolate(f, 0, 2.5);
    EXPECT_DOUBLE_EQ(b.value, 2.0);
    EXPECT_DOUBLE_EQ(b.slope, -6.0);
    EXPECT_EQ(interpolate(f, 0, 3.0).value, -1.0);
    EXPECT_THROW(interpolate(f, 0, 3.5), DataError);
}

TEST(NdpLayout, TwentyFiveAscendingLocations) {
    const auto z = ndp_training_locations();
    ASSERT_EQ(z.size(), 25u);
    EXPECT_EQ(z.front(), 0.0);
    EXPECT_EQ(z.back(), 38.0);
    for (std::size_t i = 1; i < z.size(); ++i) EXPECT_GT(z[i], z[i - 1]);
    for (double v : z) EXPECT_GT(std::abs(v - (38.0 - 31.191)), 1e-9);
}

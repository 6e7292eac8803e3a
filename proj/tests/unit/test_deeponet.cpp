#include "checks.hpp"
#include "oracles.hpp"
#include "riserop/dataflow.hpp"
#include "riserop/deeponet.hpp"
#include "riserop/diagnostics.hpp"
#include "riserop/synth.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace riserop;
using deeponet::DeepONetModel;

namespace {

DeepONetModel small_model(int observers, int latent, std::uint64_t seed, bool trunk_time = false) {
    deeponet::ModelConfig cfg;
    cfg.branch_hidden = {8, 8};
    cfg.trunk_hidden = {8, 8};
    cfg.latent = latent;
    cfg.trunk_time = trunk_time;
    deeponet::Metadata meta;
    meta.observers = observers;
    return deeponet::make_model(cfg, meta, seed);
}

void zero_last_layer(nn::Mlp& net) {
    net.params.layers.back().weight.setZero();
    net.params.layers.back().bias.setZero();
}

SampleBatch toy_batch(std::mt19937_64& rng, int n, int m, int p) {
    SampleBatch b;
    b.branch_inputs = checks::random_matrix(rng, n, m);
    for (int j = 0; j < p; ++j) b.trunk_coords.push_back((j + 0.5) / p);
    b.labels = checks::random_matrix(rng, n, p);
    for (int s = 0; s < n; ++s) b.times.push_back(static_cast<double>(s) / n);
    return b;
}

} // namespace

TEST(Forward, ZeroBranchGivesBias) {
    auto m = small_model(3, 4, 1);
    zero_last_layer(m.branch);
    m.bias = 0.5;
    const std::vector<double> z{0.0, 0.3, 1.0};
    const auto y = deeponet::forward(m, Eigen::Vector3d(1, 2, 3), z);
    for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], 0.5);
}

TEST(Forward, ForcedSubnetworkOutputs) {
    auto m = small_model(1, 2, 1);
    zero_last_layer(m.branch);
    zero_last_layer(m.trunk);
    m.branch.params.layers.back().bias << 1.0, 2.0;
    m.trunk.params.layers.back().bias << 3.0, 4.0;
    m.bias = -1.0;
    const std::vector<double> z{0.25};
    EXPECT_EQ(deeponet::forward(m, Eigen::VectorXd::Constant(1, 0.7), z)[0], 10.0);
}

TEST(Forward, MatchesDoubleLoopOracle) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const auto m = oracle::random_model(rng, 16, 4, trial % 2 == 1);
        EXPECT_LT(checks::operator_formula_error(m, rng, 1, 5), 1e-14);
    }
}

TEST(Forward, RejectsBadInputs) {
    const auto m = small_model(3, 4, 1);
    const std::vector<double> z{0.5};
    EXPECT_THROW(deeponet::forward(m, Eigen::Vector2d(1, 2), z), ShapeError);
    EXPECT_THROW(deeponet::forward(m, Eigen::Vector3d(1, NAN, 2), z), NumericalError);
    const std::vector<double> bad{NAN};
    EXPECT_THROW(deeponet::forward(m, Eigen::Vector3d(1, 2, 3), bad), NumericalError);
}

TEST(Forward, LinearInBranchOutput) {
    std::mt19937_64 rng(5);
    const auto m = oracle::random_model(rng);
    const Eigen::MatrixXd cols = checks::random_matrix(rng, m.branch_width(), 4);
    const std::vector<double> z{0.1, 0.4, 0.9};
    const auto base = deeponet::evaluate(m, cols, z, std::vector<double>(4, 0.0)).pred;
    for (double alpha : {2.0, 0.5, -3.7}) {
        auto scaled = m;
        scaled.branch.params.layers.back().weight *= alpha;
        scaled.branch.params.layers.back().bias *= alpha;
        const auto pred = deeponet::evaluate(scaled, cols, z, std::vector<double>(4, 0.0)).pred;
        const Eigen::MatrixXd expected = (alpha * (base.array() - m.bias)).matrix();
        EXPECT_LT(((pred.array() - m.bias).matrix() - expected).cwiseAbs().maxCoeff(), 1e-13);
    }
}

TEST(Forward, DefinedAtAnyCoordinate) {
    std::mt19937_64 rng(8);
    const auto m = small_model(2, 5, 3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> z(200);
    for (auto& v : z) v = u(rng);
    const Eigen::Vector2d in(0.3, -0.2);
    const auto y = deeponet::forward(m, in, z);
    for (std::size_t j = 0; j < z.size(); ++j)
        EXPECT_NEAR(y[static_cast<Eigen::Index>(j)], oracle::deeponet_point(m, {0.3, -0.2}, z[j]), 1e-14);
}

TEST(LossMse, Examples) {
    const std::vector<double> a{1.0, 2.0, 3.0};
    EXPECT_EQ(deeponet::loss_mse(a, a), 0.0);
    const std::vector<double> shifted{1.5, 2.5, 3.5};
    EXPECT_EQ(deeponet::loss_mse(shifted, a), 0.25);
    const std::vector<double> p{1.0, 2.0}, l{0.0, 0.0};
    EXPECT_EQ(deeponet::loss_mse(p, l), 2.5);
    EXPECT_THROW(deeponet::loss_mse(std::vector<double>{}, std::vector<double>{}), DataError);
    EXPECT_THROW(deeponet::loss_mse(p, a), ShapeError);
}

TEST(Gradient, EndToEndMatchesFiniteDifferences) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 12; ++trial) {
        const auto m = oracle::random_model(rng, 8, 3, trial % 3 == 2);
        const auto rep = checks::deeponet_gradient_check(m, rng);
        EXPECT_LT(rep.worst_param, 1e-6) << "trial " << trial;
        EXPECT_LT(rep.worst_input, 1e-6) << "trial " << trial;
    }
}

TEST(Train, ZeroIterationsReturnsModelUnchanged) {
    std::mt19937_64 rng(1);
    const auto m = small_model(3, 4, 2);
    const auto b = toy_batch(rng, 10, 3, 4);
    const auto r = deeponet::train(m, b, {});
    EXPECT_EQ(deeponet::flatten(r.model), deeponet::flatten(m));
    EXPECT_TRUE(r.history.train.empty());
}

TEST(Train, LearnsAConstant) {
    std::mt19937_64 rng(2);
    auto b = toy_batch(rng, 20, 3, 5);
    b.labels.setConstant(0.37);
    deeponet::TrainConfig cfg;
    cfg.iterations = 2000;
    cfg.adam.lr = 1e-2; // at 1e-3 the branch variation is still decaying at step 2000
    const auto r = deeponet::train(small_model(3, 4, 3), b, cfg);
    EXPECT_LT(deeponet::evaluate_mse(r.model, b), 1e-6);
}

TEST(Train, SingleModeRiserLossDropsHundredfold) {
    synth::RiserConfig rc;
    rc.n_modes = 4;
    rc.z_points = 101;
    synth::ForcingSpec f;
    const double w1 = synth::modal_frequencies(rc)[0];
    f.terms.push_back({1, 5000.0, 0.9 * w1, 0.0});
    auto field = dataflow::normalize(synth::simulate(rc, f, 4.0));
    dataflow::SensorLayout layout;
    layout.training = dataflow::ndp_training_locations(rc.length);
    layout.observers = {layout.training[5], layout.training[12], layout.training[19]};
    const auto b = dataflow::build_reconstruction_batch(field, layout, {200, 800}, 3);

    deeponet::ModelConfig mc;
    mc.branch_hidden = {20, 20};
    mc.trunk_hidden = {20, 20};
    mc.latent = 20;
    deeponet::TrainConfig cfg;
    cfg.iterations = 20000;
    cfg.log_stride = 1000;
    const auto r = deeponet::train(deeponet::make_model(mc, {}, 4), b, cfg);
    ASSERT_GE(r.history.train.size(), 2u);
    EXPECT_LE(r.history.train.back().mse * 100.0, r.history.train.front().mse);
}

TEST(Train, HistoryIsStrictlyIncreasingAndIncludesEnds) {
    std::mt19937_64 rng(3);
    const auto b = toy_batch(rng, 16, 2, 3);
    deeponet::TrainConfig cfg;
    cfg.iterations = 250;
    cfg.log_stride = 100;
    const auto r = deeponet::train(small_model(2, 4, 1), b, cfg, &b);
    std::vector<long> its;
    for (const auto& h : r.history.train) its.push_back(h.iteration);
    EXPECT_EQ(its, (std::vector<long>{0, 100, 200, 250}));
    EXPECT_EQ(r.history.test.size(), r.history.train.size());
}

TEST(Train, BitReproducible) {
    std::mt19937_64 rng(4);
    const auto b = toy_batch(rng, 30, 2, 3);
    for (std::size_t batch_size : {std::size_t{0}, std::size_t{7}}) {
        deeponet::TrainConfig cfg;
        cfg.iterations = 120;
        cfg.batch_size = batch_size;
        cfg.seed = 11;
        const auto r1 = deeponet::train(small_model(2, 4, 5), b, cfg);
        const auto r2 = deeponet::train(small_model(2, 4, 5), b, cfg);
        EXPECT_EQ(deeponet::flatten(r1.model), deeponet::flatten(r2.model));
    }
}

TEST(Train, TimeAwareTrunkTrains) {
    std::mt19937_64 rng(5);
    const auto b = toy_batch(rng, 12, 2, 3);
    deeponet::TrainConfig cfg;
    cfg.iterations = 300;
    const auto r = deeponet::train(small_model(2, 4, 6, true), b, cfg);
    EXPECT_LT(r.history.train.back().mse, r.history.train.front().mse);
}

TEST(Train, DivergenceGuardAborts) {
    std::mt19937_64 rng(6);
    const auto b = toy_batch(rng, 12, 2, 3);
    deeponet::TrainConfig cfg;
    cfg.iterations = 50;
    cfg.divergence_factor = 0.5; // any loss above half the initial one counts as divergence
    EXPECT_THROW(deeponet::train(small_model(2, 4, 6), b, cfg), NumericalError);
}

TEST(Train, RejectsInconsistentBatch) {
    std::mt19937_64 rng(7);
    auto b = toy_batch(rng, 12, 3, 3);
    deeponet::TrainConfig cfg;
    cfg.iterations = 5;
    EXPECT_THROW(deeponet::train(small_model(2, 4, 6), b, cfg), ShapeError);
    b.labels(0, 0) = NAN;
    EXPECT_THROW(deeponet::train(small_model(3, 4, 6), b, cfg), NumericalError);
    EXPECT_THROW(deeponet::train(small_model(3, 4, 6), SampleBatch{}, cfg), DataError);
}

TEST(FineTune, ZeroIterationsIsIdentity) {
    std::mt19937_64 rng(8);
    const auto m = small_model(2, 4, 7);
    EXPECT_EQ(deeponet::flatten(deeponet::fine_tune(m, toy_batch(rng, 5, 2, 3), 0)), deeponet::flatten(m));
}

TEST(FineTune, TransferAndFineTuneOnNearbyCase) {
    synth::CaseOptions opt;
    opt.riser.z_points = 200;
    const auto source = synth::make_case_at_velocity(1.5, 7, "source", opt);
    const auto target = synth::make_case_at_velocity(1.4, 7, "target", opt);
    const auto train = dataflow::build_reconstruction_batch(source.field, source.layout, source.windows.train, 5);
    const auto target_train = dataflow::build_reconstruction_batch(target.field, target.layout, target.windows.train, 5);
    const auto target_test = dataflow::build_reconstruction_batch(target.field, target.layout, target.windows.test, 2);

    deeponet::ModelConfig mc;
    mc.branch_hidden = {30, 30, 30};
    mc.trunk_hidden = {30, 30, 30};
    mc.latent = 30;
    deeponet::TrainConfig cfg;
    cfg.iterations = 3000;
    const auto model = deeponet::train(deeponet::make_model(mc, {}, 2), train, cfg).model;
    const auto zero_shot = deeponet::predict(model, target_test);
    const double nmse0 = diagnostics::nmse(zero_shot, target_test.labels);
    EXPECT_TRUE(std::isfinite(nmse0));
    const auto tuned = deeponet::fine_tune(model, target_train, 1000);
    EXPECT_LE(deeponet::evaluate_mse(tuned, target_test), diagnostics::mse(zero_shot, target_test.labels));
}

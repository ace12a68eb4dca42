#include <gtest/gtest.h>

#include <sstream>

#include "gpmhe/benchmark.hpp"
#include "gpmhe/io.hpp"
#include "gpmhe/learned_dynamics.hpp"
#include "test_support.hpp"

using namespace gpmhe;
using namespace gpmhe::testing;

namespace {

KernelParams fixed(double sf2, double ls, double sn2, Eigen::Index dim) {
    KernelParams p;
    p.signal_variance = sf2;
    p.lengthscales = Vector::Constant(dim, ls);
    p.noise_variance = sn2;
    return p;
}

Trajectory random_trajectory(std::mt19937_64 &rng, Eigen::Index steps, Eigen::Index n, Eigen::Index m,
                             Eigen::Index p) {
    return {random_matrix(steps, n, rng), random_matrix(steps, m, rng), random_matrix(steps, p, rng)};
}

// Small nonlinear 2-state, 1-input system sampled on random points.
LearnedDynamics small_model(std::mt19937_64 &rng, double sn2 = 1e-3) {
    std::vector<Trajectory> trajs;
    for (int k = 0; k < 3; ++k) {
        Trajectory t{Matrix(12, 2), Matrix(12, 1), Matrix(12, 1)};
        Vector x = random_vector(2, rng, 0.5);
        for (int i = 0; i < 12; ++i) {
            const double u = std::sin(0.7 * i + k);
            t.states.row(i) = x.transpose();
            t.inputs(i, 0) = u;
            t.outputs(i, 0) = x[0] * x[1] + 0.3 * u;
            x = vec({0.9 * x[0] + 0.2 * std::sin(x[1]), 0.8 * x[1] - 0.1 * x[0] * x[0] + 0.3 * u});
        }
        trajs.push_back(t);
    }
    TrainingOptions opt;
    opt.fixed_params = fixed(1.0, 0.8, sn2, 3);
    return LearnedDynamics::train(build_dataset(trajs), opt);
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

TEST(Dataset, MinimalTrajectoryGivesOnePair) {
    Trajectory t{Matrix(2, 2), Matrix(2, 1), Matrix(2, 1)};
    t.states << 1, 2, 3, 4;
    t.inputs << 5, 6;
    t.outputs << 7, 8;
    const auto data = build_dataset({t});
    ASSERT_EQ(data.size(), 1u);
    EXPECT_EQ(data.inputs.row(0), Eigen::RowVector3d(1, 2, 5));
    EXPECT_EQ(data.state_targets.row(0), Eigen::RowVector2d(3, 4));
    EXPECT_EQ(data.output_targets(0, 0), 7.0);
}

TEST(Dataset, OfflineProtocolGivesNinetyPairs) {
    const auto spec = reactor1_spec();
    ASSERT_EQ(spec.offline.initial_states.size(), 3u);
    EXPECT_EQ(spec.offline.steps, 31);
    EXPECT_EQ(spec.offline.initial_states[0], vec({3.0, 1.0}));
    EXPECT_EQ(spec.offline.initial_states[1], vec({1.0, 3.0}));
    EXPECT_EQ(spec.offline.initial_states[2], vec({2.0, 4.0}));
    const auto data = generate_offline_data(spec, make_reactor1(), 7);
    EXPECT_EQ(data.size(), 90u);
    EXPECT_EQ(data, generate_offline_data(spec, make_reactor1(), 7));
}

TEST(Dataset, RecordedStatesAreNoiseFreeSamples) {
    // The recorded next state is the simulated state itself, not a noisy copy.
    const auto data = generate_offline_data(reactor1_spec(), make_reactor1(), 3);
    const auto &t = data.trajectories.front();
    EXPECT_EQ(data.state_targets.row(0), t.states.row(1));
    EXPECT_EQ(data.inputs.row(1).head(2), t.states.row(1));
}

TEST(Dataset, ConcatMatchesConcatenatedTrajectories) {
    std::mt19937_64 rng(1);
    const auto a = random_trajectory(rng, 5, 2, 1, 1);
    const auto b = random_trajectory(rng, 7, 2, 1, 1);
    EXPECT_EQ(concat(build_dataset({a}), build_dataset({b})), build_dataset({a, b}));
    EXPECT_FALSE(concat(build_dataset({b}), build_dataset({a})) == build_dataset({a, b}));
}

TEST(Dataset, RejectsInconsistentTrajectories) {
    std::mt19937_64 rng(2);
    EXPECT_THROW(build_dataset({random_trajectory(rng, 5, 2, 0, 1), random_trajectory(rng, 5, 3, 0, 1)}),
                 std::invalid_argument);
    EXPECT_THROW(build_dataset({random_trajectory(rng, 1, 2, 0, 1)}), std::invalid_argument);
}

TEST(Dataset, CsvRoundTrip) {
    std::mt19937_64 rng(3);
    const auto data = build_dataset({random_trajectory(rng, 6, 2, 1, 1), random_trajectory(rng, 4, 2, 1, 1)});
    std::stringstream ss;
    write_dataset_csv(ss, data);
    EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "t,x1,x2,u1,y1,trajectory_id");
    EXPECT_EQ(read_dataset_csv(ss), data);
}

// ---------------------------------------------------------------------------
// Means, variances and Jacobians
// ---------------------------------------------------------------------------

TEST(LearnedDynamics, PriorOnlyModel) {
    const auto model = LearnedDynamics::prior_only(2, 1, 1, fixed(2.0, 1.0, 0.1, 3));
    const Vector x = vec({0.4, -1.0}), u = vec({0.2});
    EXPECT_EQ(model.mean_f(x, u), Vector::Zero(2));
    const auto v = model.one_step_variances(x, u);
    EXPECT_DOUBLE_EQ(v.state(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(v.output(0, 0), 2.0);
    const auto j = model.jacobians(x, u);
    EXPECT_EQ(j.A, Matrix::Zero(2, 2));
    EXPECT_EQ(j.C, Matrix::Zero(1, 2));
}

TEST(LearnedDynamics, MeansMatchComponentPosteriors) {
    std::mt19937_64 rng(4);
    const auto model = small_model(rng);
    const Vector x = vec({0.1, 0.3}), u = vec({-0.2});
    const Vector d = vec({0.1, 0.3, -0.2});
    const Vector f = model.mean_f(x, u);
    for (int i = 0; i < 2; ++i) EXPECT_EQ(f[i], model.state_gps()[i].posterior(d).mean);
    EXPECT_EQ(model.mean_h(x, u)[0], model.output_gps()[0].posterior(d).mean);
    const auto pt = model.evaluate(x, u, EvalOrder::kFirst);
    EXPECT_EQ(pt.f, f);
    EXPECT_EQ(pt.var_x[1], model.state_gps()[1].posterior(d).variance);
}

TEST(LearnedDynamics, InterpolatesTrainingData) {
    std::mt19937_64 rng(5);
    const auto model = small_model(rng, 1e-10);
    const auto &gp = model.state_gps()[0];
    for (int k = 0; k < 5; ++k) {
        const Vector d = gp.inputs().row(k).transpose();
        EXPECT_NEAR(model.mean_f(d.head(2), d.tail(1))[0], gp.targets()[k], 1e-3);
        const auto v = model.one_step_variances(d.head(2), d.tail(1));
        EXPECT_LE(v.state(0, 0), 2e-10);
        EXPECT_GE(v.state(0, 0), 0.0);
    }
}

TEST(LearnedDynamics, FarFromDataVarianceIsSignalVariance) {
    std::mt19937_64 rng(6);
    const auto model = small_model(rng);
    const auto v = model.one_step_variances(vec({40.0, -40.0}), vec({30.0}));
    EXPECT_NEAR(v.state(0, 0), 1.0, 1e-6);
    EXPECT_NEAR(v.state(1, 1), 1.0, 1e-6);
    EXPECT_NEAR(v.output(0, 0), 1.0, 1e-6);
}

TEST(LearnedDynamics, DerivativesMatchFiniteDifferences) {
    std::mt19937_64 rng(7);
    const auto model = small_model(rng);
    const Vector x = vec({0.2, -0.1}), u = vec({0.3});
    const auto pt = model.evaluate(x, u, EvalOrder::kSecond);
    const auto j = model.jacobians(x, u);
    EXPECT_EQ(pt.A, j.A);
    EXPECT_LT(rel_error(j.A, fd_jacobian([&](const Vector &z) { return model.mean_f(z, u); }, x)), 1e-5);
    EXPECT_LT(rel_error(j.C, fd_jacobian([&](const Vector &z) { return model.mean_h(z, u); }, x)), 1e-5);
    const auto var_x = [&](const Vector &z) { return Vector(model.one_step_variances(z, u).state.diagonal()); };
    EXPECT_LT(rel_error(pt.var_x_grad, fd_jacobian(var_x, x)), 1e-5);
    for (int i = 0; i < 2; ++i) {
        const auto row = [&](const Vector &z) { return Vector(model.jacobians(z, u).A.row(i).transpose()); };
        EXPECT_LT(rel_error(pt.f_hessians[static_cast<std::size_t>(i)], fd_jacobian(row, x)), 1e-5);
    }
}

TEST(LearnedDynamics, RecoversLinearGain) {
    // x+ = 0.5 x without noise, one two-step trajectory per grid point.
    std::vector<Trajectory> trajs;
    for (int i = 0; i < 41; ++i) {
        const double x = -2.0 + 0.1 * i;
        Trajectory pair{Matrix(2, 1), Matrix(2, 0), Matrix(2, 1)};
        pair.states << x, 0.5 * x;
        pair.outputs << x, 0.5 * x;
        trajs.push_back(pair);
    }
    TrainingOptions opt;
    opt.hyper.seed = 1;
    const auto model = LearnedDynamics::train(build_dataset(trajs), opt);
    for (double x : {-1.0, 0.0, 0.7, 1.5}) EXPECT_NEAR(model.jacobians(vec({x}), Vector()).A(0, 0), 0.5, 5e-2);
}

// ---------------------------------------------------------------------------
// Auxiliary noise
// ---------------------------------------------------------------------------

TEST(AuxiliaryNoise, ExactAndZeroModels) {
    const auto truth = make_reactor1();
    const Vector x = vec({1.2, 0.7}), u, w = Vector::Zero(2), v = Vector::Zero(1);
    const auto exact = residuals(*truth.model, *truth.model, x, u, w, v);
    EXPECT_EQ(exact.w, Vector::Zero(2));
    EXPECT_EQ(exact.v, Vector::Zero(1));
    const auto zero = LearnedDynamics::prior_only(2, 0, 1, fixed(1.0, 1.0, 0.1, 2));
    const auto r = residuals(zero, *truth.model, x, u, w, v);
    EXPECT_EQ(r.w, truth.model->transition(x, u));
    EXPECT_EQ(r.v, truth.model->output(x, u));
}

TEST(AuxiliaryNoise, ReconstructsTrueStep) {
    std::mt19937_64 rng(8);
    const auto truth = make_reactor1();
    const auto data = generate_offline_data(reactor1_spec(), truth, 1);
    TrainingOptions opt;
    opt.fixed_params = fixed(10.0, 3.0, 1e-4, 2);
    const auto model = LearnedDynamics::train(data, opt);
    const Vector x = vec({2.1, 1.4}), u, w = random_vector(2, rng, 0.01), v = random_vector(1, rng, 0.03);
    const auto r = residuals(model, *truth.model, x, u, w, v);
    EXPECT_LT((model.mean_f(x, u) + r.w - truth.model->transition(x, u) - w).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((model.mean_h(x, u) + r.v - truth.model->output(x, u) - v).cwiseAbs().maxCoeff(), 1e-14);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

TEST(ModelJson, RoundTripPreservesPredictions) {
    std::mt19937_64 rng(9);
    const auto model = small_model(rng);
    const auto doc = to_json(model);
    EXPECT_EQ(doc.at("format"), kDynamicsFormat);
    const auto back = learned_dynamics_from_json(nlohmann::json::parse(doc.dump()));
    const Vector x = vec({0.3, 0.2}), u = vec({0.1});
    EXPECT_EQ(back.mean_f(x, u), model.mean_f(x, u));
    EXPECT_EQ(back.one_step_variances(x, u).output, model.one_step_variances(x, u).output);
    EXPECT_EQ(back.state_gps()[1].params(), model.state_gps()[1].params());
}

TEST(ModelJson, RejectsWrongFormat) {
    nlohmann::json doc = {{"format", "something.else"}, {"version", 1}};
    EXPECT_THROW(learned_dynamics_from_json(doc), std::invalid_argument);
}

#include <gtest/gtest.h>

#include <cmath>

#include "gpmhe/learned_dynamics.hpp"
#include "gpmhe/mhe.hpp"
#include "test_support.hpp"

using namespace gpmhe;
using namespace gpmhe::testing;

namespace {

MheConfig base_config(Eigen::Index n, Eigen::Index p, double w = 1e-2, double v = 1e-2) {
    MheConfig cfg;
    cfg.horizon = 5;
    cfg.discount = 0.9;
    cfg.noise = {w * Matrix::Identity(n, n), v * Matrix::Identity(p, p)};
    cfg.caps = UncertaintyCaps::isotropic(cfg.noise, 1e5, 1e5);
    cfg.prior_sigma_init = Matrix::Identity(n, n);
    return cfg;
}

MheWindow random_window(std::mt19937_64 &rng, std::size_t len, Eigen::Index n, Eigen::Index m, Eigen::Index p) {
    MheWindow win;
    for (std::size_t i = 0; i < len; ++i) {
        win.inputs.push_back(random_vector(m, rng));
        win.outputs.push_back(random_vector(p, rng));
    }
    win.prior = random_vector(n, rng);
    win.prior_sigma = random_pd(n, rng, 0.5, 2.0);
    return win;
}

LearnedDynamics smooth_model(std::mt19937_64 &rng) {
    std::vector<Trajectory> trajs;
    for (int k = 0; k < 2; ++k) {
        Trajectory t{Matrix(15, 2), Matrix(15, 1), Matrix(15, 1)};
        Vector x = random_vector(2, rng, 0.5);
        for (int i = 0; i < 15; ++i) {
            const double u = std::cos(0.4 * i + k);
            t.states.row(i) = x.transpose();
            t.inputs(i, 0) = u;
            t.outputs(i, 0) = x[0] + std::sin(x[1]);
            x = vec({0.8 * x[0] + 0.3 * std::tanh(x[1]), 0.9 * x[1] - 0.2 * x[0] + 0.2 * u});
        }
        trajs.push_back(t);
    }
    TrainingOptions opt;
    KernelParams kp;
    kp.signal_variance = 1.0;
    kp.lengthscales = Vector::Constant(3, 1.2);
    kp.noise_variance = 1e-3;
    opt.fixed_params = kp;
    return LearnedDynamics::train(build_dataset(trajs), opt);
}

}  // namespace

// ---------------------------------------------------------------------------
// Cost function
// ---------------------------------------------------------------------------

TEST(MheCost, ScalarHandExample) {
    const auto model = linear_model(Matrix::Constant(1, 1, 0.7), Matrix(1, 0), Matrix::Constant(1, 1, 2.0), Matrix(1, 0));
    auto cfg = base_config(1, 1);
    cfg.cost_mode = CostMode::kConstant;
    const double q = 4.0, r = 9.0, s = 0.25;
    cfg.constant_sigma_x = Matrix::Constant(1, 1, 1.0 / q);
    cfg.constant_sigma_y = Matrix::Constant(1, 1, 1.0 / r);
    MheWindow win;
    win.inputs = {Vector()};
    win.outputs = {vec({1.5})};
    win.prior = vec({0.2});
    win.prior_sigma = Matrix::Constant(1, 1, 1.0 / s);
    const MheProblem problem(model, cfg, win);

    const double x0 = 0.9, w0 = -0.3;
    const double e0 = x0 - 0.2, v0 = 1.5 - 2.0 * x0;
    const double expected = 2.0 * 0.9 * s * e0 * e0 + 2.0 * (q * w0 * w0 + r * v0 * v0);
    const auto ev = problem.evaluate(vec({x0, w0}), GradientMode::kNone);
    EXPECT_NEAR(ev.value, expected, 1e-13);
    EXPECT_NEAR(ev.states(1, 0), 0.7 * x0 + w0, 1e-15);
    EXPECT_NEAR(ev.output_noise(0, 0), v0, 1e-15);
}

TEST(MheCost, ZeroAtNoiseFreeTrajectory) {
    std::mt19937_64 rng(1);
    const auto model = smooth_model(rng);
    auto cfg = base_config(2, 1);
    MheWindow win;
    Vector x = vec({0.2, -0.1});
    win.prior = x;
    win.prior_sigma = Matrix::Identity(2, 2);
    for (int i = 0; i < 4; ++i) {
        const Vector u = vec({0.1 * i});
        win.inputs.push_back(u);
        win.outputs.push_back(model.mean_h(x, u));
        x = model.mean_f(x, u);
    }
    const MheProblem problem(model, cfg, win);
    Vector z = Vector::Zero(problem.num_variables());
    z.head(2) = win.prior;
    EXPECT_LT(problem.value(z), 1e-28);
}

TEST(MheCost, DecisionVectorRoundTrip) {
    std::mt19937_64 rng(2);
    const auto model = smooth_model(rng);
    const auto cfg = base_config(2, 1);
    const auto win = random_window(rng, 4, 2, 1, 1);
    const MheProblem problem(model, cfg, win);
    const Vector z = random_vector(problem.num_variables(), rng, 0.3);
    const Matrix states = problem.simulate(z);
    EXPECT_LT((problem.decision_from_states(states) - z).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(MheCost, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(3);
    const auto model = smooth_model(rng);
    for (auto mode : {CostMode::kConstant, CostMode::kOneStep, CostMode::kPropagated}) {
        for (int trial = 0; trial < 4; ++trial) {
            auto cfg = base_config(2, 1, 1e-2, 5e-2);
            cfg.cost_mode = mode;
            const auto win = random_window(rng, 1 + trial, 2, 1, 1);
            const MheProblem problem(model, cfg, win);
            const Vector z = random_vector(problem.num_variables(), rng, 0.3);

            const auto full = problem.evaluate(z, GradientMode::kFull);
            const auto f = [&](const Vector &q) { return problem.value(q); };
            EXPECT_LT(rel_error(full.gradient, fd_gradient(f, z, 1e-6)), 1e-5) << cost_mode_name(mode);

            const auto frozen = problem.evaluate(z, GradientMode::kFrozenWeights);
            const auto ff = [&](const Vector &q) { return problem.value(q, &frozen.weights); };
            EXPECT_LT(rel_error(frozen.gradient, fd_gradient(ff, z, 1e-6)), 1e-5) << cost_mode_name(mode);
            EXPECT_LT(rel_error(2.0 * frozen.residual_jacobian.transpose() * frozen.residuals, frozen.gradient), 1e-12);
        }
    }
}

TEST(MheCost, PropagatedWeightsRespectCaps) {
    std::mt19937_64 rng(4);
    const auto model = smooth_model(rng);
    auto cfg = base_config(2, 1, 1e-3, 1e-3);
    cfg.caps = UncertaintyCaps::isotropic(cfg.noise, 2e-2, 2e-2);
    cfg.caps.rule = CapRule::kGershgorin;
    const auto win = random_window(rng, 5, 2, 1, 1);
    const MheProblem problem(model, cfg, win);
    const auto ev = problem.evaluate(random_vector(problem.num_variables(), rng), GradientMode::kNone);
    for (std::size_t i = 0; i < win.length(); ++i) {
        EXPECT_TRUE(inverse_sandwich(ev.weights.sigma_x[i], cfg.caps.sigma_x_min, cfg.caps.sigma_x_max));
        EXPECT_TRUE(inverse_sandwich(ev.weights.sigma_y[i], cfg.caps.sigma_y_min, cfg.caps.sigma_y_max));
    }
}

TEST(MheConfig, ValidateRejectsBadSettings) {
    auto cfg = base_config(2, 1);
    EXPECT_NO_THROW(cfg.validate(2, 1));
    cfg.discount = 1.0;
    EXPECT_THROW(cfg.validate(2, 1), std::invalid_argument);
    cfg = base_config(2, 1);
    cfg.horizon = 0;
    EXPECT_THROW(cfg.validate(2, 1), std::invalid_argument);
    cfg = base_config(2, 1);
    cfg.state_box = {vec({1.0, 0.0}), vec({0.0, 1.0})};
    EXPECT_THROW(cfg.validate(2, 1), std::invalid_argument);
}

TEST(MheConfig, ModeNamesRoundTrip) {
    for (auto mode : {CostMode::kPropagated, CostMode::kOneStep, CostMode::kConstant}) {
        EXPECT_EQ(parse_cost_mode(cost_mode_name(mode)), mode);
    }
    for (auto mode : {PriorMode::kUncertainty, PriorMode::kConstant, PriorMode::kEkf}) {
        EXPECT_EQ(parse_prior_mode(prior_mode_name(mode)), mode);
    }
    EXPECT_THROW(parse_cost_mode("bogus"), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Window solver
// ---------------------------------------------------------------------------

TEST(MheSolve, LinearConstantWeightsMatchWls) {
    std::mt19937_64 rng(5);
    Matrix a(2, 2), c(1, 2);
    a << 0.9, 0.2, -0.1, 0.8;
    c << 1.0, 0.5;
    const auto model = linear_model(a, Matrix(2, 0), c, Matrix(1, 0));
    for (int trial = 0; trial < 5; ++trial) {
        auto cfg = base_config(2, 1);
        cfg.cost_mode = CostMode::kConstant;
        cfg.constant_sigma_x = random_pd(2, rng, 0.05, 0.5);
        cfg.constant_sigma_y = Matrix::Constant(1, 1, uniform(rng, 0.05, 0.5));
        const auto win = random_window(rng, 1 + 2 * trial, 2, 0, 1);
        const auto sol = solve(model, cfg, win);
        EXPECT_TRUE(sol.converged) << sol.message;
        EXPECT_LT((sol.z - wls_oracle(a, c, cfg, win)).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(MheSolve, ExactModelRecoversTrueTrajectory) {
    Matrix a(2, 2), c(1, 2);
    a << 0.95, 0.1, 0.0, 0.9;
    c << 1.0, 0.0;
    const auto model = linear_model(a, Matrix(2, 0), c, Matrix(1, 0));
    auto cfg = base_config(2, 1);
    MheWindow win;
    Vector x = vec({1.0, -0.5});
    win.prior = x;
    win.prior_sigma = Matrix::Identity(2, 2);
    for (int i = 0; i < 5; ++i) {
        win.inputs.push_back(Vector());
        win.outputs.push_back(c * x);
        x = a * x;
    }
    const auto sol = solve(model, cfg, win);
    EXPECT_TRUE(sol.converged) << sol.message;
    EXPECT_LT((sol.estimate - x).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE(sol.cost, 1e-12);
}

TEST(MheSolve, StaysInsideStateBox) {
    std::mt19937_64 rng(6);
    const auto model = smooth_model(rng);
    auto cfg = base_config(2, 1);
    cfg.state_box = {vec({-0.2, -0.2}), vec({0.2, 0.2})};
    for (int trial = 0; trial < 5; ++trial) {
        auto win = random_window(rng, 4, 2, 1, 1);
        const auto sol = solve(model, cfg, win);
        for (Eigen::Index i = 0; i < sol.states.rows(); ++i) {
            EXPECT_TRUE(cfg.state_box.contains(sol.states.row(i).transpose())) << sol.states;
        }
    }
}

TEST(MheSolve, EmptyWindowReturnsProjectedPrior) {
    std::mt19937_64 rng(7);
    const auto model = smooth_model(rng);
    auto cfg = base_config(2, 1);
    cfg.state_box = {vec({0.0, 0.0}), vec({1.0, 1.0})};
    MheWindow win;
    win.prior = vec({-3.0, 0.5});
    win.prior_sigma = Matrix::Identity(2, 2);
    const auto sol = solve(model, cfg, win);
    EXPECT_TRUE(sol.prior_projected);
    EXPECT_TRUE(cfg.state_box.strictly_contains(sol.estimate));
    EXPECT_NEAR(sol.estimate[1], 0.5, 1e-15);
}

// ---------------------------------------------------------------------------
// Sequential estimator
// ---------------------------------------------------------------------------

TEST(MheEstimator, WindowGrowsToHorizon) {
    std::mt19937_64 rng(8);
    const auto model = smooth_model(rng);
    auto cfg = base_config(2, 1);
    cfg.horizon = 3;
    MheEstimator est(model, cfg, vec({0.1, 0.1}));
    EXPECT_EQ(est.estimate(), vec({0.1, 0.1}));
    for (int t = 1; t <= 6; ++t) {
        est.step(vec({0.0}), vec({0.3}));
        EXPECT_EQ(est.time(), t);
        EXPECT_EQ(est.last_solution().process_noise.rows(), std::min(t, 3));
    }
    EXPECT_EQ(est.diagnostics().size(), 6u);
}

TEST(MheEstimator, HorizonOneUsesPreviousEstimateAsPrior) {
    std::mt19937_64 rng(9);
    const auto model = smooth_model(rng);
    auto cfg = base_config(2, 1);
    cfg.horizon = 1;
    cfg.cost_mode = CostMode::kConstant;
    cfg.prior_mode = PriorMode::kConstant;
    MheEstimator est(model, cfg, vec({0.1, 0.1}));
    est.step(vec({0.0}), vec({0.3}));
    const Vector first = est.estimate();
    est.step(vec({0.1}), vec({0.2}));

    MheWindow win;
    win.inputs = {vec({0.1})};
    win.outputs = {vec({0.2})};
    win.prior = first;
    win.prior_sigma = cfg.prior_sigma_init;
    EXPECT_LT((solve(model, cfg, win).estimate - est.estimate()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(MheEstimator, InitialPriorUsesConfiguredUncertainty) {
    std::mt19937_64 rng(10);
    const auto model = smooth_model(rng);
    auto cfg = base_config(2, 1);
    cfg.prior_sigma_init = 1e-8 * Matrix::Identity(2, 2);
    MheEstimator tight(model, cfg, vec({0.1, 0.1}));
    cfg.prior_sigma_init = 1e4 * Matrix::Identity(2, 2);
    MheEstimator loose(model, cfg, vec({0.1, 0.1}));
    tight.step(vec({0.0}), vec({1.5}));
    loose.step(vec({0.0}), vec({1.5}));
    // A tight prior pins x(0); a loose one lets the output move it.
    EXPECT_LT((tight.last_solution().states.row(0).transpose() - vec({0.1, 0.1})).norm(), 1e-5);
    EXPECT_GT((loose.last_solution().states.row(0).transpose() - vec({0.1, 0.1})).norm(), 1e-2);
}

TEST(MheEstimator, Deterministic) {
    std::mt19937_64 rng(11);
    const auto model = smooth_model(rng);
    const auto cfg = base_config(2, 1);
    MheEstimator a(model, cfg, vec({0.1, 0.1})), b(model, cfg, vec({0.1, 0.1}));
    for (int t = 0; t < 8; ++t) {
        const Vector u = vec({0.1 * t}), y = vec({0.05 * t});
        EXPECT_EQ(a.step(u, y), b.step(u, y));
    }
}

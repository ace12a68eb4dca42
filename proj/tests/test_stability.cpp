#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gpmhe/stability.hpp"
#include "test_support.hpp"

using namespace gpmhe;
using namespace gpmhe::testing;

namespace {

StabilityConfig isotropic_config(Eigen::Index n, double x_min, double x_max, double discount) {
    StabilityConfig cfg;
    const NoiseConfig noise{x_min * Matrix::Identity(n, n), x_min * Matrix::Identity(n, n)};
    cfg.caps = UncertaintyCaps::isotropic(noise, x_max, x_max);
    cfg.discount = discount;
    return cfg;
}

CallbackModel identity_model(double gain) {
    return CallbackModel(
        2, 0, 1, [gain](const Vector &x, const Vector &) -> Vector { return gain * x; },
        [gain](const Vector &x, const Vector &) -> Vector { return vec({gain * x[0]}); },
        [gain](const Vector &, const Vector &) -> Matrix { return gain * Matrix::Identity(2, 2); },
        [gain](const Vector &, const Vector &) -> Matrix { return gain * Matrix::Identity(1, 2); });
}

}  // namespace

// ---------------------------------------------------------------------------
// Generalized eigenvalues and minimal horizon
// ---------------------------------------------------------------------------

TEST(GenEig, SimpleCases) {
    std::mt19937_64 rng(1);
    const Matrix a = random_pd(3, rng);
    EXPECT_NEAR(gen_eig_max(a, a), 1.0, 1e-12);
    EXPECT_NEAR(gen_eig_max(2.0 * Matrix::Identity(2, 2), Matrix::Identity(2, 2)), 2.0, 1e-15);
    Matrix d = Matrix::Zero(2, 2);
    d.diagonal() << 3.0, 8.0;
    EXPECT_NEAR(gen_eig_max(d, 2.0 * Matrix::Identity(2, 2)), 4.0, 1e-15);
}

TEST(GenEig, MatchesDeterminantRoots) {
    std::mt19937_64 rng(2);
    for (int k = 0; k < 50; ++k) {
        const Eigen::Index n = 1 + k % 4;
        const Matrix p1 = random_pd(n, rng), p2 = random_pd(n, rng);
        const double lambda = gen_eig_max(p1, p2);
        Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(p1, p2);
        EXPECT_NEAR(lambda, ges.eigenvalues().maxCoeff(), 1e-9 * lambda);
        EXPECT_NEAR((p1 - lambda * p2).determinant(), 0.0, 1e-8 * p1.norm() * std::pow(lambda * p2.norm(), n - 1));
    }
}

TEST(MinHorizon, HandExamples) {
    // lambda = 1, eta = 0.5: 4 * 0.5^2 = 1 is not < 1, so M = 3.
    auto r = contraction_and_min_horizon(isotropic_config(2, 1e-2, 1e-2, 0.5));
    EXPECT_NEAR(r.lambda, 1.0, 1e-12);
    EXPECT_EQ(r.min_horizon, 3);
    // lambda = 2: 8 * 0.5^M < 1 first at M = 4.
    r = contraction_and_min_horizon(isotropic_config(1, 1e-2, 2e-2, 0.5));
    EXPECT_NEAR(r.lambda, 2.0, 1e-12);
    EXPECT_EQ(r.min_horizon, 4);
}

TEST(MinHorizon, ReactorCapsGive259) {
    const auto r = contraction_and_min_horizon(isotropic_config(2, 1e-5, 1e5, 0.91));
    EXPECT_NEAR(r.lambda, 1e10, 1e-2);
    EXPECT_EQ(r.min_horizon, 259);
    EXPECT_GE(4.0 * r.lambda * std::pow(0.91, 258), 1.0);
    EXPECT_LT(4.0 * r.lambda * std::pow(0.91, 259), 1.0);
}

TEST(MinHorizon, EpsilonWidensUpperCap) {
    // eps = 1e5 doubles lambda: 8e10 * 0.91^M < 1 first at M = 267.
    auto cfg = isotropic_config(2, 1e-5, 1e5, 0.91);
    cfg.caps.epsilon = 1e5;
    const auto r = contraction_and_min_horizon(cfg);
    EXPECT_NEAR(r.lambda, 2e10, 1e-1);
    EXPECT_EQ(r.min_horizon, 267);
}

TEST(MinHorizon, MonotoneInDiscount) {
    int prev = 0;
    for (double eta : {0.3, 0.5, 0.7, 0.9, 0.95, 0.99}) {
        const int m = contraction_and_min_horizon(isotropic_config(2, 1e-3, 1.0, eta)).min_horizon;
        EXPECT_GE(m, prev);
        prev = m;
    }
}

TEST(ContractionRate, DefinitionHolds) {
    const double mu = contraction_rate(3.0, 0.6, 5);
    EXPECT_NEAR(std::pow(mu, 5), 4.0 * 3.0 * std::pow(0.6, 5), 1e-12);
    const auto r = contraction_and_min_horizon(isotropic_config(2, 1e-2, 2e-2, 0.5));
    EXPECT_LT(contraction_rate(r.lambda, 0.5, r.min_horizon), 1.0);
    EXPECT_GE(contraction_rate(r.lambda, 0.5, r.min_horizon - 1), 1.0);
}

TEST(StabilityConfig, Validation) {
    auto cfg = isotropic_config(2, 1e-2, 1.0, 0.5);
    EXPECT_NO_THROW(cfg.validate());
    cfg.discount = 1.5;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = isotropic_config(2, 1e-2, 1.0, 0.5);
    cfg.grid = 1;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Model mismatch
// ---------------------------------------------------------------------------

TEST(AlphaMax, ZeroForExactModel) {
    auto cfg = isotropic_config(2, 1e-2, 1.0, 0.5);
    cfg.refinements = 200;
    const auto model = identity_model(0.7);
    const Box box{vec({-1.0, -1.0}), vec({1.0, 1.0})};
    const auto a = estimate_alpha_max(model, model, box, Box{}, cfg);
    EXPECT_EQ(a.alpha, 0.0);
    EXPECT_EQ(a.samples, static_cast<std::size_t>(21 * 21 + 200));
}

TEST(AlphaMax, GridFindsCornerMaximum) {
    auto cfg = isotropic_config(2, 1e-2, 1.0, 0.5);
    cfg.refinements = 0;
    const Box box{vec({-1.0, -2.0}), vec({1.0, 2.0})};
    // Mismatch f = x, h = x1: largest at the corners.
    const auto a = estimate_alpha_max(identity_model(0.0), identity_model(1.0), box, Box{}, cfg);
    EXPECT_NEAR(a.alpha1, std::sqrt(5.0 / 1e-2), 1e-12);
    EXPECT_NEAR(a.alpha2, std::sqrt(1.0 / 1e-2), 1e-12);
    EXPECT_EQ(a.alpha, a.alpha1);
}

TEST(AlphaMax, RefinementNeverLowersEstimate) {
    const CallbackModel bump(
        1, 0, 1, [](const Vector &x, const Vector &) -> Vector { return vec({std::exp(-50.0 * (x[0] - 0.013) * (x[0] - 0.013))}); },
        [](const Vector &x, const Vector &) -> Vector { return x; },
        [](const Vector &, const Vector &) -> Matrix { return Matrix::Zero(1, 1); },
        [](const Vector &, const Vector &) -> Matrix { return Matrix::Identity(1, 1); });
    const CallbackModel zero(
        1, 0, 1, [](const Vector &, const Vector &) -> Vector { return Vector::Zero(1); },
        [](const Vector &x, const Vector &) -> Vector { return x; },
        [](const Vector &, const Vector &) -> Matrix { return Matrix::Zero(1, 1); },
        [](const Vector &, const Vector &) -> Matrix { return Matrix::Identity(1, 1); });
    auto cfg = isotropic_config(1, 1.0, 2.0, 0.5);
    const Box box{vec({-1.0}), vec({1.0})};
    cfg.refinements = 0;
    const double coarse = estimate_alpha_max(bump, zero, box, Box{}, cfg).alpha;
    cfg.refinements = 5000;
    const double fine = estimate_alpha_max(bump, zero, box, Box{}, cfg).alpha;
    EXPECT_GE(fine, coarse);
    EXPECT_LE(fine, 1.0);
    EXPECT_GT(fine, 0.999);
}

// ---------------------------------------------------------------------------
// pRES bound
// ---------------------------------------------------------------------------

namespace {

RunRecord zero_noise_run(int steps, double x0, double xhat0, double gain) {
    RunRecord run;
    run.states.resize(steps + 1, 2);
    run.estimates.resize(steps + 1, 2);
    run.inputs.resize(steps + 1, 0);
    run.outputs.resize(steps + 1, 1);
    run.process_noise = Matrix::Zero(steps, 2);
    run.output_noise = Matrix::Zero(steps + 1, 1);
    for (int t = 0; t <= steps; ++t) {
        const double g = std::pow(gain, t);
        run.states.row(t) << g * x0, g * x0;
        run.estimates.row(t) << g * xhat0, g * xhat0;
        run.outputs(t, 0) = g * x0;
    }
    return run;
}

MheConfig bound_config() {
    MheConfig cfg;
    cfg.horizon = 3;
    cfg.discount = 0.5;
    cfg.noise = {1e-2 * Matrix::Identity(2, 2), 1e-2 * Matrix::Identity(1, 1)};
    cfg.caps = UncertaintyCaps::isotropic(cfg.noise, 1e-2, 1e-2);
    cfg.prior_sigma_init = Matrix::Identity(2, 2);
    return cfg;
}

}  // namespace

TEST(PresBound, ExactEstimatesHaveZeroLhs) {
    const auto model = identity_model(0.8);
    const auto run = zero_noise_run(10, 1.0, 1.0, 0.8);
    const auto report = check_pres_bound(run, model, bound_config(), 0.5, 0.0);
    ASSERT_EQ(report.rows.size(), 11u);
    EXPECT_TRUE(report.applicable);
    EXPECT_EQ(report.violations, 0);
    for (const auto &row : report.rows) EXPECT_EQ(row.lhs, 0.0);
}

TEST(PresBound, HandTerms) {
    const auto model = identity_model(0.8);
    const auto run = zero_noise_run(4, 1.0, 0.5, 0.8);
    const double mu = 0.25;
    const auto report = check_pres_bound(run, model, bound_config(), mu, 0.1);
    // e0 = |(0.5, 0.5)| in the identity metric; lhs in the sigma_x_max metric.
    for (const auto &row : report.rows) {
        const double err = 0.5 * std::pow(0.8, row.t);
        EXPECT_NEAR(row.lhs, std::sqrt(2.0) * err / 0.1, 1e-12);
        EXPECT_NEAR(row.initial_term, 6.0 * std::pow(0.5, row.t) * std::sqrt(0.5), 1e-12);
        EXPECT_NEAR(row.alpha_term, 12.0 / (1.0 - std::sqrt(0.5)) * 0.1, 1e-12);
        EXPECT_EQ(row.w_term, 0.0);
        EXPECT_EQ(row.v_term, 0.0);
        EXPECT_EQ(row.satisfied, row.lhs <= row.rhs() * (1.0 + 1e-12) + 1e-12);
    }
}

TEST(PresBound, CountsViolations) {
    const auto model = identity_model(0.8);
    // Estimates that drift away from a decaying truth.
    auto run = zero_noise_run(6, 1.0, 1.0, 0.8);
    for (int t = 1; t <= 6; ++t) run.estimates.row(t) << 10.0 * t, 10.0 * t;
    const auto report = check_pres_bound(run, model, bound_config(), 0.5, 0.0);
    EXPECT_EQ(report.violations, 6);
    std::ostringstream csv;
    report.write_csv(csv);
    EXPECT_EQ(csv.str().rfind("t,lhs,initial_term,w_term,v_term,alpha_term,satisfied\n", 0), 0u);
}

TEST(PresBound, NotApplicableWhenRateAboveOne) {
    const auto model = identity_model(0.8);
    auto run = zero_noise_run(3, 1.0, 0.0, 0.8);
    const auto report = check_pres_bound(run, model, bound_config(), 1.2, 0.0);
    EXPECT_FALSE(report.applicable);
    EXPECT_EQ(report.violations, 0);
}

TEST(PresBound, RejectsInconsistentRecord) {
    auto run = zero_noise_run(3, 1.0, 1.0, 0.8);
    run.estimates.conservativeResize(2, 2);
    EXPECT_THROW(check_pres_bound(run, identity_model(0.8), bound_config(), 0.5, 0.0), std::invalid_argument);
}

// Offline data generation, online Monte Carlo evaluation and result tables.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <json.hpp>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gpmhe/filters.hpp"
#include "gpmhe/learned_dynamics.hpp"
#include "gpmhe/reactors.hpp"
#include "gpmhe/stability.hpp"

namespace gpmhe {

struct OfflineProtocol {
    std::vector<Vector> initial_states;
    int steps = 31;
    Matrix sigma_w;
    Matrix sigma_v;
};

struct OnlineProtocol {
    int steps = 150;
    int runs = 20;
    Box initial_box;        // x(0) ~ U(box)
    Vector initial_estimate;
};

/// Weights shared by every constant-weight MHE scheme (GP and exact model).
struct ConstantWeights {
    Matrix prior_sigma;  // P^{-1}
    Matrix sigma_x;      // Q^{-1}
    Matrix sigma_y;      // R^{-1}
};

struct ExperimentSpec {
    std::string system = "reactor1";
    OfflineProtocol offline;
    OnlineProtocol online;
    /// Shared MHE settings (horizon, discount, noise, caps, box, prior).
    MheConfig mhe;
    ConstantWeights constant_weights;
    TrainingOptions training;
    UtParams ut;
    /// Filter initial covariance; defaults to mhe.prior_sigma_init.
    std::optional<Matrix> filter_covariance;
    std::vector<std::string> estimators;
    std::uint64_t seed = 0;
    /// Worker threads for Monte Carlo runs (0 = hardware concurrency).
    int threads = 0;

    void validate() const;
};

/// Names accepted in ExperimentSpec::estimators.
const std::vector<std::string> &estimator_names();

/// Paper configurations with desk-scale run counts.
ExperimentSpec reactor1_spec();
ExperimentSpec reactor2_spec();
ExperimentSpec default_spec(const std::string &system);

/// Offline trajectories with noise-free recorded states; uses `seed`.
RegressionDataset generate_offline_data(const ExperimentSpec &spec, const TruthModel &truth, std::uint64_t seed);

/// One realization of the true system: x(0..T), y(0..T), w(0..T-1), v(0..T).
RunRecord simulate_truth(const TruthModel &truth, const Vector &x0, int steps, std::mt19937_64 &rng);

std::unique_ptr<StateEstimator> make_estimator(const std::string &name, const ExperimentSpec &spec,
                                               const DynamicsModel &learned, const TruthModel &truth);

/// MHE configuration used by a named MHE estimator.
MheConfig estimator_mhe_config(const std::string &name, const ExperimentSpec &spec);

struct RunResult {
    std::string estimator;
    int run = 0;
    double mse = 0.0;
    double tau_mean = 0.0;  // seconds per estimate
    double tau_std = 0.0;
    bool finite = true;
    int weight_checks = 0;
    int weight_violations = 0;
    int unconverged_steps = 0;
    Matrix estimates;  // (T + 1) x n
};

/// Feeds the run's inputs/outputs to the estimator and records x_hat(0..T).
RunResult run_online(const ExperimentSpec &spec, const std::string &estimator, const DynamicsModel &learned,
                     const TruthModel &truth, const RunRecord &record);

/// (1 / nT) sum_{i=1..T} |x(i) - x_hat(i)|^2; row 0 is excluded.
double mse(const Matrix &states, const Matrix &estimates);

struct EstimatorSummary {
    std::string estimator;
    int runs = 0;
    double mse_mean = 0.0;
    double mse_std = 0.0;
    double tau_mean = 0.0;
    double tau_std = 0.0;
    int diverged_runs = 0;  // mse > 1
    int weight_violations = 0;
};

struct ResultTable {
    std::vector<EstimatorSummary> summary;
    std::vector<RunResult> runs;

    const EstimatorSummary &at(const std::string &estimator) const;
    /// estimator,runs,mse_mean,mse_std,diverged_runs,weight_violations,tau_mean,tau_std
    void write_summary_csv(std::ostream &out) const;
    /// estimator,run,mse,finite,unconverged_steps,weight_violations,tau_mean,tau_std
    void write_runs_csv(std::ostream &out) const;
    nlohmann::json to_json() const;
};

/// Population mean/std of the per-run values.
EstimatorSummary summarize(const std::string &estimator, const std::vector<RunResult> &runs);

struct MonteCarloOutput {
    ResultTable table;
    std::vector<RunRecord> records;
};

/// Runs the roster over spec.online.runs realizations. Run r draws its
/// initial state and noise from seed_seq{seed, r}; every estimator sees the
/// same realization.
MonteCarloOutput monte_carlo(const ExperimentSpec &spec, const DynamicsModel &learned, const TruthModel &truth);

/// Offline data, training and Monte Carlo in one call.
struct BenchmarkOutput {
    RegressionDataset data;
    std::shared_ptr<LearnedDynamics> model;
    MonteCarloOutput results;
};
BenchmarkOutput run_benchmark(const ExperimentSpec &spec);

/// Trains the learned model from the spec's offline protocol.
LearnedDynamics train_model(const ExperimentSpec &spec, const RegressionDataset &data);

}  // namespace gpmhe

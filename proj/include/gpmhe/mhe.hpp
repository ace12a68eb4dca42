// Moving horizon estimation over a learned (or exact) model.
//
// At time t the window holds u(j), y(j) for j in [t - M_t, t - 1] with
// M_t = min(t, M). Decision variables are z = (x(t-M_t), w(0), ..., w(M_t-1));
// states follow by forward simulation x(i+1) = f(x(i), u(i)) + w(i) and the
// output noise is eliminated as v(i) = y(i) - h(x(i), u(i)). The cost is
//
//   2 eta^{M_t} |x(0) - prior|^2_{inv(S_prior)}
//     + sum_i 2 eta^{M_t-1-i} (|w(i)|^2_{inv(S_x(i))} + |v(i)|^2_{inv(S_y(i))})
//
// with stage weights chosen by CostMode.
#pragma once

#include <deque>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gpmhe/model.hpp"
#include "gpmhe/uncertainty.hpp"

namespace gpmhe {

enum class CostMode {
    kPropagated,  // capped linearized propagation along the window
    kOneStep,     // sigma_w + one-step variances, no propagation, no cap
    kConstant,    // fixed matrices
};

enum class PriorMode {
    kUncertainty,  // stored uncertainty of the estimate that became the prior
    kConstant,     // fixed prior covariance
    kEkf,          // Riccati (predictor form) recursion along the estimates
};

const char *cost_mode_name(CostMode mode);
CostMode parse_cost_mode(const std::string &name);
const char *prior_mode_name(PriorMode mode);
PriorMode parse_prior_mode(const std::string &name);

struct Box {
    Vector lo;
    Vector hi;

    bool empty() const { return lo.size() == 0; }
    bool contains(const Vector &x, double tol = 0.0) const;
    bool strictly_contains(const Vector &x) const;
    /// Clamps into [lo + margin, hi - margin] with margin = fraction * (hi - lo).
    Vector project_interior(const Vector &x, double fraction = 1e-3) const;
    void validate(std::size_t dim) const;
};

struct SolverOptions {
    double kkt_tolerance = 1e-8;
    int max_iterations = 200;
    double barrier_initial = 1e-2;
    double barrier_final = 1e-8;
    double barrier_factor = 10.0;
    double damping_initial = 1e-8;
    double damping_factor = 10.0;
    /// Re-evaluate weights at each iterate and hold them fixed within the
    /// Gauss-Newton step. When false the gradient includes the derivative of
    /// the weights w.r.t. the trajectory.
    bool freeze_weights_per_iteration = true;
};

struct MheConfig {
    int horizon = 15;
    double discount = 0.91;
    NoiseConfig noise;
    UncertaintyCaps caps;
    Box state_box;
    std::optional<Box> process_noise_box;
    std::optional<Box> output_noise_box;
    /// Covariance whose inverse weights the prior while t <= M.
    Matrix prior_sigma_init;
    CostMode cost_mode = CostMode::kPropagated;
    PriorMode prior_mode = PriorMode::kUncertainty;
    /// Constant-mode stage covariances; default to sigma_w and sigma_v.
    std::optional<Matrix> constant_sigma_x;
    std::optional<Matrix> constant_sigma_y;
    /// Constant prior covariance; defaults to prior_sigma_init.
    std::optional<Matrix> constant_prior_sigma;
    /// While the window still starts at x_hat(0), propagate the stored
    /// uncertainty of each new estimate from prior_sigma_init instead of zero.
    /// Propagated cost mode only; the stage weights always start from zero.
    bool anchor_initial_uncertainty = false;
    SolverOptions solver;

    Matrix stage_sigma_x() const { return constant_sigma_x.value_or(noise.sigma_w); }
    Matrix stage_sigma_y() const { return constant_sigma_y.value_or(noise.sigma_v); }
    void validate(std::size_t n, std::size_t p) const;
};

struct MheWindow {
    std::vector<Vector> inputs;   // u(t-M_t) .. u(t-1)
    std::vector<Vector> outputs;  // y(t-M_t) .. y(t-1)
    Vector prior;
    Matrix prior_sigma;
    std::optional<Vector> warm_start;  // z

    std::size_t length() const { return outputs.size(); }
};

/// Stage weights along the window.
struct StageWeights {
    std::vector<Matrix> sigma_x;
    std::vector<Matrix> sigma_y;
    std::vector<char> x_capped;
    std::vector<char> y_capped;
};

enum class GradientMode { kNone, kFrozenWeights, kFull };

struct CostEvaluation {
    double value = 0.0;
    double prior_term = 0.0;
    Matrix states;        // (M_t + 1) x n
    Matrix output_noise;  // M_t x p
    StageWeights weights;
    Vector residuals;              // J = |residuals|^2
    Matrix residual_jacobian;      // d residuals / dz
    std::vector<Matrix> state_sensitivity;  // d x(i) / dz, (M_t + 1) entries
    std::vector<Matrix> output_sensitivity; // d v(i) / dz, M_t entries
    Vector gradient;               // dJ/dz
};

/// Cost and derivatives of one window problem.
class MheProblem {
public:
    MheProblem(const DynamicsModel &model, const MheConfig &config, const MheWindow &window);

    Eigen::Index num_variables() const { return nz_; }
    std::size_t length() const { return len_; }

    /// Weights are computed at z unless `frozen` is given.
    CostEvaluation evaluate(const Vector &z, GradientMode mode, const StageWeights *frozen = nullptr) const;
    double value(const Vector &z, const StageWeights *frozen = nullptr) const;

    /// Forward simulation only.
    Matrix simulate(const Vector &z) const;

    /// Decision vector reproducing the given state trajectory ((M_t+1) x n).
    Vector decision_from_states(const Matrix &states) const;

    const MheConfig &config() const { return config_; }
    const MheWindow &window() const { return window_; }
    const DynamicsModel &model() const { return model_; }

private:
    StageWeights weights_from(const std::vector<ModelPoint> &points, const std::vector<Matrix> *sens,
                              std::vector<std::vector<Matrix>> *dsx,
                              std::vector<std::vector<Matrix>> *dsy) const;

    const DynamicsModel &model_;
    const MheConfig &config_;
    const MheWindow &window_;
    std::size_t n_, p_, len_;
    Eigen::Index nz_;
    Matrix prior_factor_;  // lower Cholesky factor of the prior covariance
};

struct MheSolution {
    Matrix states;        // (M_t + 1) x n
    Matrix process_noise; // M_t x n
    Matrix output_noise;  // M_t x p
    Vector z;
    double cost = 0.0;
    double kkt_residual = 0.0;
    double barrier = 0.0;
    int iterations = 0;
    bool converged = false;
    bool max_iterations_reached = false;
    bool prior_projected = false;
    std::string message;
    Vector estimate;        // x(t|t)
    Matrix estimate_sigma;  // uncertainty attached to the estimate
    StageWeights weights;
};

/// Barrier Gauss-Newton solve of one window.
MheSolution solve(const DynamicsModel &model, const MheConfig &config, const MheWindow &window);

/// Sequential estimator: keeps the measurement window, the prior ring
/// buffer and the warm start.
class MheEstimator {
public:
    MheEstimator(const DynamicsModel &model, MheConfig config, const Vector &initial_estimate);

    /// Feeds u(t-1), y(t-1) and returns x(t).
    const Vector &step(const Vector &u_prev, const Vector &y_prev);

    int time() const { return t_; }
    const Vector &estimate() const { return estimate_; }
    const Matrix &estimate_sigma() const { return estimate_sigma_; }
    const MheSolution &last_solution() const { return last_; }
    const MheConfig &config() const { return config_; }
    bool prior_was_projected() const { return prior_projected_; }

    /// Per-step diagnostics: t,iterations,kkt_residual,cost,barrier,converged
    void write_diagnostics_csv(std::ostream &out) const;

    struct Diagnostics {
        int t;
        int iterations;
        double kkt_residual;
        double cost;
        double barrier;
        bool converged;
    };
    const std::vector<Diagnostics> &diagnostics() const { return diagnostics_; }

private:
    struct PriorEntry {
        int t;
        Vector estimate;
        Matrix sigma;
    };

    Matrix ekf_predict(const Matrix &sigma, const Vector &x, const Vector &u) const;

    const DynamicsModel &model_;
    MheConfig config_;
    int t_ = 0;
    Vector estimate_;
    Matrix estimate_sigma_;
    std::deque<Vector> inputs_;
    std::deque<Vector> outputs_;
    std::deque<PriorEntry> priors_;
    std::optional<Vector> previous_z_;
    std::size_t previous_len_ = 0;
    MheSolution last_;
    std::vector<Diagnostics> diagnostics_;
    bool prior_projected_ = false;
};

}  // namespace gpmhe

// Learned state-space model: n state GPs and p output GPs over the shared
// regression input d = (x, u).
#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "gpmhe/gp.hpp"
#include "gpmhe/model.hpp"

namespace gpmhe {

/// One offline record: row t of each matrix is time step t.
struct Trajectory {
    Matrix states;   // T x n
    Matrix inputs;   // T x m (m may be 0)
    Matrix outputs;  // T x p

    Eigen::Index length() const { return states.rows(); }
    bool operator==(const Trajectory &other) const;
};

/// Regression data assembled from trajectories.
///
/// Row k of `inputs` is d(t) = (x(t), u(t)); row k of `state_targets` is
/// x(t+1) and row k of `output_targets` is y(t), for t = 0..T-2 of each
/// trajectory. The last output sample of each trajectory is dropped so state
/// and output GPs share one input matrix.
struct RegressionDataset {
    std::vector<Trajectory> trajectories;
    Matrix inputs;          // N x (n+m)
    Matrix state_targets;   // N x n
    Matrix output_targets;  // N x p
    std::size_t state_dim = 0;
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;

    std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
    bool operator==(const RegressionDataset &other) const;
};

RegressionDataset build_dataset(std::vector<Trajectory> trajectories);
RegressionDataset concat(const RegressionDataset &a, const RegressionDataset &b);

/// CSV with header `t,x1..xn,u1..um,y1..yp,trajectory_id`; one row per step.
void write_dataset_csv(std::ostream &out, const RegressionDataset &data);
RegressionDataset read_dataset_csv(std::istream &in);

struct TrainingOptions {
    HyperparameterOptions hyper;
    /// Overrides optimization with fixed hyperparameters for every GP.
    std::optional<KernelParams> fixed_params;
};

class LearnedDynamics final : public DynamicsModel {
public:
    LearnedDynamics(std::size_t n, std::size_t m, std::size_t p, std::vector<GpModel> state_gps,
                    std::vector<GpModel> output_gps);

    /// Fits one GP per state and output component (hyperparameters from
    /// log-marginal-likelihood maximization unless fixed).
    static LearnedDynamics train(const RegressionDataset &data, const TrainingOptions &options = {});

    /// Zero-data model: every GP is its prior.
    static LearnedDynamics prior_only(std::size_t n, std::size_t m, std::size_t p,
                                      const KernelParams &params);

    std::size_t state_dim() const override { return n_; }
    std::size_t input_dim() const override { return m_; }
    std::size_t output_dim() const override { return p_; }
    ModelPoint evaluate(const Vector &x, const Vector &u, EvalOrder order) const override;

    Vector mean_f(const Vector &x, const Vector &u) const;
    Vector mean_h(const Vector &x, const Vector &u) const;

    struct OneStepVariances {
        Matrix state;   // n x n diagonal
        Matrix output;  // p x p diagonal
    };
    OneStepVariances one_step_variances(const Vector &x, const Vector &u) const;

    struct Jacobians {
        Matrix A;  // n x n
        Matrix C;  // p x n
    };
    Jacobians jacobians(const Vector &x, const Vector &u) const;

    const std::vector<GpModel> &state_gps() const { return state_gps_; }
    const std::vector<GpModel> &output_gps() const { return output_gps_; }

private:
    Vector regression_input(const Vector &x, const Vector &u) const;

    std::size_t n_, m_, p_;
    std::vector<GpModel> state_gps_;
    std::vector<GpModel> output_gps_;
};

/// Auxiliary noise making the learned system reproduce the true one:
///   w_check = f(x,u) - mean_f + w,  v_check = h(x,u) - mean_h + v.
struct AuxiliaryNoise {
    Vector w;
    Vector v;
};
AuxiliaryNoise residuals(const DynamicsModel &learned, const DynamicsModel &truth,
                         const Vector &x, const Vector &u, const Vector &w, const Vector &v);

}  // namespace gpmhe

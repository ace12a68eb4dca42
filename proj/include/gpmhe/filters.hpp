// GP-based EKF/UKF baselines and the common estimator interface used by the
// benchmark harness.
#pragma once

#include <memory>
#include <string>

#include "gpmhe/mhe.hpp"

namespace gpmhe {

struct FilterState {
    Vector mean;
    Matrix covariance;
    /// Set when the innovation covariance needed regularization.
    bool regularized = false;
};

struct UtParams {
    double alpha = 1.0;
    double beta = 2.0;
    double kappa = 0.0;

    double lambda(std::size_t n) const;
    void validate(std::size_t n) const;
};

struct SigmaWeights {
    Vector mean;
    Vector covariance;
};
SigmaWeights ut_weights(std::size_t n, const UtParams &ut);

/// 2n+1 sigma points as columns: mean, mean +/- columns of sqrt((n+lambda) P).
/// The square root is a Cholesky factor with jitter escalation.
Matrix sigma_points(const Vector &mean, const Matrix &cov, const UtParams &ut);

/// Symmetrizes and floors the eigenvalues at 1e-12.
Matrix condition_covariance(const Matrix &cov);

FilterState ekf_predict(const FilterState &state, const Vector &u, const DynamicsModel &model,
                        const NoiseConfig &noise);
/// Joseph-form measurement update at the current mean.
FilterState ekf_update(const FilterState &state, const Vector &u, const Vector &y, const DynamicsModel &model,
                       const NoiseConfig &noise);
/// Predict with u(t-1), then update with y(t).
FilterState gp_ekf_step(const FilterState &state, const Vector &u_prev, const Vector &u, const Vector &y,
                        const DynamicsModel &model, const NoiseConfig &noise);

FilterState ukf_predict(const FilterState &state, const Vector &u, const DynamicsModel &model,
                        const NoiseConfig &noise, const UtParams &ut);
FilterState ukf_update(const FilterState &state, const Vector &u, const Vector &y, const DynamicsModel &model,
                       const NoiseConfig &noise, const UtParams &ut);
FilterState gp_ukf_step(const FilterState &state, const Vector &u_prev, const Vector &u, const Vector &y,
                        const DynamicsModel &model, const NoiseConfig &noise, const UtParams &ut);

/// Uniform driver interface. Filters consume y(t) when producing x(t); the
/// moving horizon schemes only use outputs up to t-1.
class StateEstimator {
public:
    virtual ~StateEstimator() = default;
    virtual std::string name() const = 0;
    /// Called once with u(0), y(0); returns the estimate of x(0).
    virtual Vector begin(const Vector &u0, const Vector &y0) = 0;
    /// Returns the estimate of x(t).
    virtual Vector advance(const Vector &u_prev, const Vector &y_prev, const Vector &u_now,
                           const Vector &y_now) = 0;
};

class EkfEstimator final : public StateEstimator {
public:
    EkfEstimator(const DynamicsModel &model, NoiseConfig noise, const Vector &x0, const Matrix &p0);
    std::string name() const override { return "gp_ekf"; }
    Vector begin(const Vector &u0, const Vector &y0) override;
    Vector advance(const Vector &u_prev, const Vector &y_prev, const Vector &u_now, const Vector &y_now) override;
    const FilterState &state() const { return state_; }

private:
    const DynamicsModel &model_;
    NoiseConfig noise_;
    FilterState state_;
};

class UkfEstimator final : public StateEstimator {
public:
    UkfEstimator(const DynamicsModel &model, NoiseConfig noise, const Vector &x0, const Matrix &p0,
                 UtParams ut = {});
    std::string name() const override { return "gp_ukf"; }
    Vector begin(const Vector &u0, const Vector &y0) override;
    Vector advance(const Vector &u_prev, const Vector &y_prev, const Vector &u_now, const Vector &y_now) override;
    const FilterState &state() const { return state_; }

private:
    const DynamicsModel &model_;
    NoiseConfig noise_;
    UtParams ut_;
    FilterState state_;
};

class MheDriver final : public StateEstimator {
public:
    MheDriver(std::string name, const DynamicsModel &model, MheConfig config, const Vector &x0);
    std::string name() const override { return name_; }
    Vector begin(const Vector &u0, const Vector &y0) override;
    Vector advance(const Vector &u_prev, const Vector &y_prev, const Vector &u_now, const Vector &y_now) override;
    const MheEstimator &estimator() const { return mhe_; }

private:
    std::string name_;
    MheEstimator mhe_;
};

}  // namespace gpmhe

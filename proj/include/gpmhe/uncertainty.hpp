// Weighting-matrix recursion: PSD-min, capped propagation of the GP
// uncertainty along a trajectory, and the sandwich bounds on the result.
#pragma once

#include <vector>

#include "gpmhe/model.hpp"

namespace gpmhe {

/// Online noise covariances (diagonal, strictly positive).
struct NoiseConfig {
    Matrix sigma_w;  // n x n
    Matrix sigma_v;  // p x p

    void validate() const;
};

/// Which comparison decides between candidate and cap.
enum class CapRule {
    kExact,       // eigenvalue test on candidate - cap
    kGershgorin,  // Gershgorin bound of candidate against lambda_min(cap)
};

struct UncertaintyCaps {
    Matrix sigma_x_max;
    Matrix sigma_y_max;
    Matrix sigma_x_min;  // defaults to sigma_w
    Matrix sigma_y_min;  // defaults to sigma_v
    double epsilon = 0.0;
    /// Omit the min entirely and keep the raw candidate.
    bool disable_cap = false;
    CapRule rule = CapRule::kExact;

    /// sigma_x_max = x_max * I, sigma_y_max = y_max * I, minima = noise.
    static UncertaintyCaps isotropic(const NoiseConfig &noise, double x_max, double y_max);

    /// Checks sigma_x_max >= sigma_w > 0 and sigma_y_max >= sigma_v > 0.
    void validate(const NoiseConfig &noise) const;
};

/// A if A - B <= 0 (largest eigenvalue <= 1e-12), otherwise B.
Matrix psd_min(const Matrix &a, const Matrix &b);

/// Upper bound on the largest eigenvalue: max_i (a_ii + sum_{j != i} |a_ij|).
double gershgorin_upper_bound(const Matrix &a);

/// Candidate if its Gershgorin bound is <= lambda_min(cap), otherwise cap.
/// Returns the cap at least as often as psd_min does.
Matrix psd_min_gershgorin(const Matrix &candidate, const Matrix &cap);

/// Applies the configured rule; `capped` reports whether the cap was taken.
Matrix apply_cap(const Matrix &candidate, const Matrix &cap, const UncertaintyCaps &caps,
                 bool *capped = nullptr);

/// min{ sigma_w + diag(var_x) + A prev A^T, sigma_x_max }.
Matrix propagate_x(const Matrix &prev, const Vector &var_x, const Matrix &a, const NoiseConfig &noise,
                   const UncertaintyCaps &caps, bool *capped = nullptr);

/// min{ sigma_v + diag(var_y) + C prev_x C^T, sigma_y_max }. Consumes the
/// previous *state* uncertainty.
Matrix propagate_y(const Matrix &prev_x, const Vector &var_y, const Matrix &c, const NoiseConfig &noise,
                   const UncertaintyCaps &caps, bool *capped = nullptr);

struct PropagatedUncertainty {
    std::vector<Matrix> sigma_x;
    std::vector<Matrix> sigma_y;
    /// Candidates before the min, for diagnostics.
    std::vector<Matrix> sigma_x_candidate;
    std::vector<Matrix> sigma_y_candidate;
    /// Last element of sigma_x: the uncertainty attached to the state that
    /// follows the window.
    Matrix prior_sigma;
};

/// Runs the recursion along states[0..L-1] (with matching inputs) starting
/// from sigma_init (zero at a window start).
PropagatedUncertainty propagate_window(const DynamicsModel &model, const std::vector<Vector> &states,
                                       const std::vector<Vector> &inputs, const NoiseConfig &noise,
                                       const UncertaintyCaps &caps, const Matrix &sigma_init);

/// True when lower <= m <= upper in the PSD order, up to `tol` on eigenvalues.
bool psd_between(const Matrix &m, const Matrix &lower, const Matrix &upper, double tol = 1e-9);

/// True when inv(upper) <= inv(m) <= inv(lower), up to `tol` on eigenvalues.
bool inverse_sandwich(const Matrix &m, const Matrix &lower, const Matrix &upper, double tol = 1e-9);

}  // namespace gpmhe

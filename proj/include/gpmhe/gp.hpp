// Scalar-output Gaussian-process regression with a squared-exponential ARD
// kernel and zero prior mean.
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "gpmhe/types.hpp"

namespace gpmhe {

/// Hyperparameters of k(d, d') = sf2 * exp(-0.5 * sum_i (d_i - d'_i)^2 / l_i^2)
/// plus the likelihood noise variance.
struct KernelParams {
    double signal_variance = 1.0;
    Vector lengthscales;
    double noise_variance = 1e-2;

    std::size_t input_dim() const { return static_cast<std::size_t>(lengthscales.size()); }

    /// Throws std::invalid_argument unless every entry is finite and > 0 and
    /// lengthscales has `dim` entries.
    void validate(std::size_t dim) const;

    /// [log sf2, log l_1 .. log l_D, log sn2]
    Vector to_log() const;
    static KernelParams from_log(const Vector &log_params);

    bool operator==(const KernelParams &other) const;
};

double se_kernel(const Vector &a, const Vector &b, const KernelParams &params);

/// Posterior mean/variance at one query. `raw_variance` is the value before
/// clamping round-off negatives to zero.
struct PosteriorPoint {
    double mean = 0.0;
    double variance = 0.0;
    double raw_variance = 0.0;
};

/// Posterior quantities with derivatives w.r.t. the query point, as needed by
/// the linearized uncertainty propagation and its gradient.
struct PosteriorDerivatives {
    double mean = 0.0;
    Vector mean_gradient;
    Matrix mean_hessian;  // only filled when requested
    double variance = 0.0;
    Vector variance_gradient;  // zero when the variance was clamped
    bool variance_clamped = false;
};

class GpModel {
public:
    /// Empty model (N = 0): prior mean 0, prior variance sf2.
    explicit GpModel(KernelParams params);

    /// Conditions the prior on (inputs, targets). Inputs are N x D with
    /// D == params.input_dim(). Jitter escalates 1e-10 -> 1e-6 (relative to
    /// sf2) if the plain Cholesky factorization fails; beyond that throws
    /// NumericalError.
    static GpModel fit(const Matrix &inputs, const Vector &targets, const KernelParams &params);

    PosteriorPoint posterior(const Vector &query) const;
    Vector posterior_mean_gradient(const Vector &query) const;
    PosteriorDerivatives posterior_derivatives(const Vector &query, bool with_hessian) const;

    /// Row k(query, D); length N.
    Vector cross_covariance(const Vector &query) const;

    const KernelParams &params() const { return params_; }
    const Matrix &inputs() const { return inputs_; }
    const Vector &targets() const { return targets_; }
    const Vector &weights() const { return weights_; }
    /// Lower-triangular L with L L^T = K + (sn2 + jitter) I.
    Matrix gram_factor() const;
    double jitter() const { return jitter_; }
    std::size_t size() const { return static_cast<std::size_t>(inputs_.rows()); }
    std::size_t input_dim() const { return params_.input_dim(); }

private:
    GpModel() = default;
    void check_query(const Vector &query) const;

    KernelParams params_;
    Matrix inputs_;  // N x D, column-major = structure-of-arrays for the SIMD kernels
    Vector targets_;
    Vector inv_sq_lengthscales_;
    Eigen::LLT<Matrix> llt_;
    Vector weights_;
    double jitter_ = 0.0;
};

/// K(inputs, inputs) without the noise term.
Matrix kernel_matrix(const Matrix &inputs, const KernelParams &params);

struct LogMarginalLikelihood {
    double value = 0.0;
    Vector gradient;  // w.r.t. KernelParams::to_log() coordinates
    double jitter = 0.0;
};

LogMarginalLikelihood log_marginal_likelihood(const Matrix &inputs, const Vector &targets,
                                              const KernelParams &params);

struct HyperparameterOptions {
    int starts = 8;
    std::uint64_t seed = 0;
    int max_iterations = 200;
    double gradient_tolerance = 1e-6;
    bool optimize_lengthscales = true;
    /// Lengthscale bounds as multiples of the per-dimension input spread.
    double lengthscale_lower_factor = 1e-2;
    double lengthscale_upper_factor = 1e2;
    /// Starting lengthscales; defaults to the per-dimension input spread.
    std::optional<Vector> initial_lengthscales;
};

struct HyperparameterResult {
    KernelParams params;
    double log_likelihood = 0.0;
    int best_start = 0;
    /// False when no start improved on its initial point (best start returned).
    bool improved = true;
};

/// Multi-start ascent of the log marginal likelihood in log-hyperparameter
/// space (BFGS direction, Armijo backtracking, box bounds scaled to the data).
HyperparameterResult optimize_hyperparameters(const Matrix &inputs, const Vector &targets,
                                              const HyperparameterOptions &options = {});

}  // namespace gpmhe

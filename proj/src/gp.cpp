#include "gpmhe/gp.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <span>

#include "gpmhe/simd/se_kernel.hpp"

namespace gpmhe {
namespace {

constexpr std::array<double, 6> kJitterLadder = {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};

Vector inverse_squares(const Vector &lengthscales) {
    return lengthscales.array().square().inverse().matrix();
}

bool all_finite(const Matrix &m) { return m.allFinite(); }

}  // namespace

// ---------------------------------------------------------------------------
// KernelParams
// ---------------------------------------------------------------------------

void KernelParams::validate(std::size_t dim) const {
    if (input_dim() != dim) {
        throw std::invalid_argument("KernelParams: expected " + std::to_string(dim) +
                                    " lengthscales, got " + std::to_string(input_dim()));
    }
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(signal_variance) || !positive(noise_variance)) {
        throw std::invalid_argument("KernelParams: variances must be finite and positive");
    }
    for (Eigen::Index i = 0; i < lengthscales.size(); ++i) {
        if (!positive(lengthscales[i])) {
            throw std::invalid_argument("KernelParams: lengthscales must be finite and positive");
        }
    }
}

Vector KernelParams::to_log() const {
    Vector out(lengthscales.size() + 2);
    out[0] = std::log(signal_variance);
    out.segment(1, lengthscales.size()) = lengthscales.array().log().matrix();
    out[out.size() - 1] = std::log(noise_variance);
    return out;
}

KernelParams KernelParams::from_log(const Vector &log_params) {
    if (log_params.size() < 2) throw std::invalid_argument("KernelParams::from_log: too short");
    KernelParams p;
    const Eigen::Index dim = log_params.size() - 2;
    p.signal_variance = std::exp(log_params[0]);
    p.lengthscales = log_params.segment(1, dim).array().exp().matrix();
    p.noise_variance = std::exp(log_params[log_params.size() - 1]);
    return p;
}

bool KernelParams::operator==(const KernelParams &other) const {
    return signal_variance == other.signal_variance && noise_variance == other.noise_variance &&
           lengthscales.size() == other.lengthscales.size() && lengthscales == other.lengthscales;
}

double se_kernel(const Vector &a, const Vector &b, const KernelParams &params) {
    if (a.size() != b.size() || static_cast<std::size_t>(a.size()) != params.input_dim()) {
        throw std::invalid_argument("se_kernel: dimension mismatch");
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double diff = (a[i] - b[i]) / params.lengthscales[i];
        acc += diff * diff;
    }
    return params.signal_variance * std::exp(-0.5 * acc);
}

Matrix kernel_matrix(const Matrix &inputs, const KernelParams &params) {
    const auto n = static_cast<std::size_t>(inputs.rows());
    const Vector inv_sq = inverse_squares(params.lengthscales);
    Matrix k(inputs.rows(), inputs.rows());
    Vector query(inputs.cols());
    Vector row(inputs.rows());
    for (Eigen::Index j = 0; j < inputs.rows(); ++j) {
        query = inputs.row(j).transpose();
        simd::se_cross_covariance(std::span<const double>(query.data(), query.size()),
                                  std::span<const double>(inputs.data(), inputs.size()), n,
                                  std::span<const double>(inv_sq.data(), inv_sq.size()),
                                  params.signal_variance, std::span<double>(row.data(), n));
        k.col(j) = row;
    }
    return symmetrized(k);
}

// ---------------------------------------------------------------------------
// GpModel
// ---------------------------------------------------------------------------

GpModel::GpModel(KernelParams params) : params_(std::move(params)) {
    params_.validate(params_.input_dim());
    inputs_ = Matrix(0, static_cast<Eigen::Index>(params_.input_dim()));
    targets_ = Vector(0);
    weights_ = Vector(0);
    inv_sq_lengthscales_ = inverse_squares(params_.lengthscales);
}

GpModel GpModel::fit(const Matrix &inputs, const Vector &targets, const KernelParams &params) {
    params.validate(static_cast<std::size_t>(inputs.cols()));
    if (inputs.rows() != targets.size()) {
        throw std::invalid_argument("GpModel::fit: inputs and targets disagree on N");
    }
    if (!all_finite(inputs) || !targets.allFinite()) {
        throw std::invalid_argument("GpModel::fit: non-finite training data");
    }
    GpModel model(params);
    if (inputs.rows() == 0) return model;

    model.inputs_ = inputs;
    model.targets_ = targets;
    const Matrix base = kernel_matrix(inputs, params);
    for (double rel : kJitterLadder) {
        const double jitter = rel * params.signal_variance;
        Matrix gram = base;
        gram.diagonal().array() += params.noise_variance + jitter;
        model.llt_.compute(gram);
        if (model.llt_.info() == Eigen::Success) {
            model.jitter_ = jitter;
            model.weights_ = model.llt_.solve(targets);
            if (model.weights_.allFinite()) return model;
        }
    }
    throw NumericalError("GpModel::fit: Gram matrix not positive definite after jitter 1e-6 * sf2 (N=" +
                         std::to_string(inputs.rows()) + ", sn2=" +
                         std::to_string(params.noise_variance) + ")");
}

void GpModel::check_query(const Vector &query) const {
    if (static_cast<std::size_t>(query.size()) != input_dim()) {
        throw std::invalid_argument("GpModel: query has dimension " +
                                    std::to_string(query.size()) + ", model expects " +
                                    std::to_string(input_dim()));
    }
}

Vector GpModel::cross_covariance(const Vector &query) const {
    check_query(query);
    const auto n = size();
    Vector row(static_cast<Eigen::Index>(n));
    if (n == 0) return row;
    simd::se_cross_covariance(std::span<const double>(query.data(), query.size()),
                              std::span<const double>(inputs_.data(), inputs_.size()), n,
                              std::span<const double>(inv_sq_lengthscales_.data(),
                                                      inv_sq_lengthscales_.size()),
                              params_.signal_variance, std::span<double>(row.data(), n));
    return row;
}

PosteriorPoint GpModel::posterior(const Vector &query) const {
    check_query(query);
    PosteriorPoint out;
    if (size() == 0) {
        out.variance = out.raw_variance = params_.signal_variance;
        return out;
    }
    const Vector k = cross_covariance(query);
    out.mean = k.dot(weights_);
    const Vector v = llt_.matrixL().solve(k);
    out.raw_variance = params_.signal_variance - v.squaredNorm();
    out.variance = std::max(out.raw_variance, 0.0);
    return out;
}

Vector GpModel::posterior_mean_gradient(const Vector &query) const {
    check_query(query);
    if (size() == 0) return Vector::Zero(query.size());
    const Vector k = cross_covariance(query);
    // d k_i / d q = -k_i * (q - d_i) ./ l^2
    const Matrix scaled =
        ((-inputs_).rowwise() + query.transpose()).array().rowwise() *
        inv_sq_lengthscales_.transpose().array();
    return -scaled.transpose() * k.cwiseProduct(weights_);
}

PosteriorDerivatives GpModel::posterior_derivatives(const Vector &query, bool with_hessian) const {
    check_query(query);
    const Eigen::Index dim = query.size();
    PosteriorDerivatives out;
    out.mean_gradient = Vector::Zero(dim);
    out.variance_gradient = Vector::Zero(dim);
    if (with_hessian) out.mean_hessian = Matrix::Zero(dim, dim);
    if (size() == 0) {
        out.variance = params_.signal_variance;
        return out;
    }
    const Vector k = cross_covariance(query);
    const Matrix scaled =
        ((-inputs_).rowwise() + query.transpose()).array().rowwise() *
        inv_sq_lengthscales_.transpose().array();
    const Vector ak = k.cwiseProduct(weights_);
    out.mean = k.dot(weights_);
    out.mean_gradient = -scaled.transpose() * ak;
    if (with_hessian) {
        out.mean_hessian = scaled.transpose() * ak.asDiagonal() * scaled;
        out.mean_hessian.diagonal() -= ak.sum() * inv_sq_lengthscales_;
        out.mean_hessian = symmetrized(out.mean_hessian);
    }
    const Vector v = llt_.matrixL().solve(k);
    const double raw = params_.signal_variance - v.squaredNorm();
    out.variance = std::max(raw, 0.0);
    out.variance_clamped = raw < 0.0;
    if (!out.variance_clamped) {
        const Vector beta = llt_.matrixU().solve(v);
        out.variance_gradient = 2.0 * scaled.transpose() * beta.cwiseProduct(k);
    }
    return out;
}

Matrix GpModel::gram_factor() const {
    if (size() == 0) return Matrix(0, 0);
    return llt_.matrixL();
}

// ---------------------------------------------------------------------------
// Log marginal likelihood
// ---------------------------------------------------------------------------

LogMarginalLikelihood log_marginal_likelihood(const Matrix &inputs, const Vector &targets,
                                              const KernelParams &params) {
    params.validate(static_cast<std::size_t>(inputs.cols()));
    if (inputs.rows() < 1 || inputs.rows() != targets.size()) {
        throw std::invalid_argument("log_marginal_likelihood: need N >= 1 matching targets");
    }
    const Eigen::Index n = inputs.rows();
    const Eigen::Index dim = inputs.cols();
    const Matrix kf = kernel_matrix(inputs, params);

    Eigen::LLT<Matrix> llt;
    double jitter = -1.0;
    for (double rel : kJitterLadder) {
        Matrix gram = kf;
        gram.diagonal().array() += params.noise_variance + rel * params.signal_variance;
        llt.compute(gram);
        if (llt.info() == Eigen::Success) {
            jitter = rel * params.signal_variance;
            break;
        }
    }
    if (jitter < 0.0) throw NumericalError("log_marginal_likelihood: factorization failed");

    const Vector alpha = llt.solve(targets);
    const Matrix l = llt.matrixL();
    LogMarginalLikelihood out;
    out.jitter = jitter;
    out.value = -0.5 * targets.dot(alpha) - l.diagonal().array().log().sum() -
                0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

    const Matrix k_inv = llt.solve(Matrix::Identity(n, n));
    const Matrix w = alpha * alpha.transpose() - k_inv;
    out.gradient = Vector::Zero(dim + 2);
    out.gradient[0] = 0.5 * (w.array() * kf.array()).sum();
    for (Eigen::Index a = 0; a < dim; ++a) {
        const double inv_l2 = 1.0 / (params.lengthscales[a] * params.lengthscales[a]);
        double acc = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = 0; i < n; ++i) {
                const double diff = inputs(i, a) - inputs(j, a);
                acc += w(i, j) * kf(i, j) * diff * diff * inv_l2;
            }
        }
        out.gradient[a + 1] = 0.5 * acc;
    }
    out.gradient[dim + 1] = 0.5 * params.noise_variance * w.trace();
    return out;
}

}  // namespace gpmhe

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "gpmhe/uncertainty.hpp"

namespace gpmhe {
namespace {

void check_symmetric(const Matrix &m, const char *what) {
    if (m.rows() != m.cols()) throw std::invalid_argument(std::string(what) + ": matrix not square");
    if (m.size() > 0 && (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
        throw std::invalid_argument(std::string(what) + ": matrix not symmetric");
    }
}

void check_positive_diagonal(const Matrix &m, const char *what) {
    if (m.rows() != m.cols() || m.rows() == 0) throw std::invalid_argument(std::string(what) + ": bad shape");
    const Matrix off = m - Matrix(m.diagonal().asDiagonal());
    if (off.cwiseAbs().maxCoeff() != 0.0) throw std::invalid_argument(std::string(what) + ": not diagonal");
    if (!(m.diagonal().array() > 0.0).all()) {
        throw std::invalid_argument(std::string(what) + ": diagonal must be positive");
    }
}

double max_eigenvalue(const Matrix &m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

double min_eigenvalue(const Matrix &m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// Eigenvalues lambda of m v = lambda b v for symmetric m and PD b.
Vector generalized_eigenvalues(const Matrix &m, const Matrix &b) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(symmetrized(m), symmetrized(b),
                                                        Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success) throw NumericalError("generalized eigenproblem failed");
    return es.eigenvalues();
}

}  // namespace

void NoiseConfig::validate() const {
    check_positive_diagonal(sigma_w, "sigma_w");
    check_positive_diagonal(sigma_v, "sigma_v");
}

UncertaintyCaps UncertaintyCaps::isotropic(const NoiseConfig &noise, double x_max, double y_max) {
    UncertaintyCaps caps;
    caps.sigma_x_max = x_max * Matrix::Identity(noise.sigma_w.rows(), noise.sigma_w.cols());
    caps.sigma_y_max = y_max * Matrix::Identity(noise.sigma_v.rows(), noise.sigma_v.cols());
    caps.sigma_x_min = noise.sigma_w;
    caps.sigma_y_min = noise.sigma_v;
    return caps;
}

void UncertaintyCaps::validate(const NoiseConfig &noise) const {
    noise.validate();
    if (sigma_x_max.rows() != noise.sigma_w.rows() || sigma_y_max.rows() != noise.sigma_v.rows() ||
        sigma_x_min.rows() != noise.sigma_w.rows() || sigma_y_min.rows() != noise.sigma_v.rows()) {
        throw std::invalid_argument("UncertaintyCaps: dimension mismatch with noise config");
    }
    check_symmetric(sigma_x_max, "sigma_x_max");
    check_symmetric(sigma_y_max, "sigma_y_max");
    if (min_eigenvalue(sigma_x_max - noise.sigma_w) < -1e-12 ||
        min_eigenvalue(sigma_y_max - noise.sigma_v) < -1e-12) {
        throw std::invalid_argument("UncertaintyCaps: caps must dominate the noise covariances");
    }
    if (epsilon < 0.0) throw std::invalid_argument("UncertaintyCaps: epsilon must be >= 0");
}

Matrix psd_min(const Matrix &a, const Matrix &b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("psd_min: shape mismatch");
    check_symmetric(a, "psd_min");
    check_symmetric(b, "psd_min");
    return max_eigenvalue(a - b) <= 1e-12 ? a : b;
}

double gershgorin_upper_bound(const Matrix &a) {
    double bound = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double radius = a.row(i).cwiseAbs().sum() - std::abs(a(i, i));
        bound = std::max(bound, a(i, i) + radius);
    }
    return bound;
}

Matrix psd_min_gershgorin(const Matrix &candidate, const Matrix &cap) {
    if (candidate.rows() != cap.rows() || candidate.cols() != cap.cols()) {
        throw std::invalid_argument("psd_min_gershgorin: shape mismatch");
    }
    return gershgorin_upper_bound(candidate) <= min_eigenvalue(cap) ? candidate : cap;
}

Matrix apply_cap(const Matrix &candidate, const Matrix &cap, const UncertaintyCaps &caps, bool *capped) {
    Matrix out;
    if (caps.disable_cap) {
        out = candidate;
    } else if (caps.rule == CapRule::kGershgorin) {
        out = psd_min_gershgorin(candidate, cap);
    } else {
        out = psd_min(candidate, cap);
    }
    if (capped) *capped = !caps.disable_cap && (out.array() != candidate.array()).any();
    return out;
}

Matrix propagate_x(const Matrix &prev, const Vector &var_x, const Matrix &a, const NoiseConfig &noise,
                   const UncertaintyCaps &caps, bool *capped) {
    Matrix candidate = noise.sigma_w;
    candidate.diagonal() += var_x;
    candidate += symmetrized(a * prev * a.transpose());
    return apply_cap(candidate, caps.sigma_x_max, caps, capped);
}

Matrix propagate_y(const Matrix &prev_x, const Vector &var_y, const Matrix &c, const NoiseConfig &noise,
                   const UncertaintyCaps &caps, bool *capped) {
    Matrix candidate = noise.sigma_v;
    candidate.diagonal() += var_y;
    candidate += symmetrized(c * prev_x * c.transpose());
    return apply_cap(candidate, caps.sigma_y_max, caps, capped);
}

PropagatedUncertainty propagate_window(const DynamicsModel &model, const std::vector<Vector> &states,
                                       const std::vector<Vector> &inputs, const NoiseConfig &noise,
                                       const UncertaintyCaps &caps, const Matrix &sigma_init) {
    if (states.empty() || states.size() != inputs.size()) {
        throw std::invalid_argument("propagate_window: need matching, non-empty states and inputs");
    }
    PropagatedUncertainty out;
    UncertaintyCaps uncapped = caps;
    uncapped.disable_cap = true;
    Matrix prev = sigma_init;
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto pt = model.evaluate(states[i], inputs[i], EvalOrder::kFirst);
        out.sigma_x_candidate.push_back(propagate_x(prev, pt.var_x, pt.A, noise, uncapped));
        out.sigma_y_candidate.push_back(propagate_y(prev, pt.var_y, pt.C, noise, uncapped));
        out.sigma_x.push_back(apply_cap(out.sigma_x_candidate.back(), caps.sigma_x_max, caps));
        out.sigma_y.push_back(apply_cap(out.sigma_y_candidate.back(), caps.sigma_y_max, caps));
        prev = out.sigma_x.back();
    }
    out.prior_sigma = out.sigma_x.back();
    return out;
}

bool psd_between(const Matrix &m, const Matrix &lower, const Matrix &upper, double tol) {
    return min_eigenvalue(m - lower) >= -tol && max_eigenvalue(m - upper) <= tol;
}

bool inverse_sandwich(const Matrix &m, const Matrix &lower, const Matrix &upper, double tol) {
    // inv(upper) <= inv(m) <= inv(lower)  <=>  lower <= m <= upper, checked
    // scale-free through the generalized eigenvalues of m against each bound.
    const Vector lo = generalized_eigenvalues(m, lower);
    const Vector hi = generalized_eigenvalues(m, upper);
    return lo.minCoeff() >= 1.0 - tol && hi.maxCoeff() <= 1.0 + tol;
}

}  // namespace gpmhe

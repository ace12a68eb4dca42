#include <Eigen/Eigenvalues>
#include <cmath>

#include "gpmhe/filters.hpp"

namespace gpmhe {
namespace {

constexpr double kEigenFloor = 1e-12;

Matrix innovation_inverse(Matrix s, bool &regularized) {
    s = symmetrized(s);
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) {
        s.diagonal().array() += 1e-10;
        llt.compute(s);
        regularized = true;
        if (llt.info() != Eigen::Success) throw NumericalError("filter: innovation covariance not PD");
    }
    return llt.solve(Matrix::Identity(s.rows(), s.cols()));
}

}  // namespace

double UtParams::lambda(std::size_t n) const {
    const double nn = static_cast<double>(n);
    return alpha * alpha * (nn + kappa) - nn;
}

void UtParams::validate(std::size_t n) const {
    if (!(lambda(n) > -static_cast<double>(n))) throw std::invalid_argument("UtParams: need lambda > -n");
}

SigmaWeights ut_weights(std::size_t n, const UtParams &ut) {
    ut.validate(n);
    const double nn = static_cast<double>(n);
    const double lam = ut.lambda(n);
    const auto count = static_cast<Eigen::Index>(2 * n + 1);
    SigmaWeights w{Vector::Constant(count, 0.5 / (nn + lam)), Vector::Constant(count, 0.5 / (nn + lam))};
    w.mean[0] = lam / (nn + lam);
    w.covariance[0] = lam / (nn + lam) + (1.0 - ut.alpha * ut.alpha + ut.beta);
    return w;
}

Matrix sigma_points(const Vector &mean, const Matrix &cov, const UtParams &ut) {
    const auto n = mean.size();
    const Matrix scaled = (static_cast<double>(n) + ut.lambda(static_cast<std::size_t>(n))) * symmetrized(cov);
    Eigen::LLT<Matrix> llt(scaled);
    double jitter = 1e-12 * std::max(1.0, scaled.diagonal().cwiseAbs().maxCoeff());
    while (llt.info() != Eigen::Success) {
        if (jitter > 1e-4 * std::max(1.0, scaled.diagonal().cwiseAbs().maxCoeff())) {
            throw NumericalError("sigma_points: covariance square root failed");
        }
        llt.compute(scaled + jitter * Matrix::Identity(n, n));
        jitter *= 10.0;
    }
    const Matrix root = llt.matrixL();
    Matrix pts(n, 2 * n + 1);
    pts.col(0) = mean;
    for (Eigen::Index i = 0; i < n; ++i) {
        pts.col(1 + i) = mean + root.col(i);
        pts.col(1 + n + i) = mean - root.col(i);
    }
    return pts;
}

Matrix condition_covariance(const Matrix &cov) {
    const Matrix sym = symmetrized(cov);
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.eigenvalues().minCoeff() >= kEigenFloor) return sym;
    const Vector ev = es.eigenvalues().cwiseMax(kEigenFloor);
    return symmetrized(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

FilterState ekf_predict(const FilterState &state, const Vector &u, const DynamicsModel &model,
                        const NoiseConfig &noise) {
    const auto pt = model.evaluate(state.mean, u, EvalOrder::kFirst);
    Matrix q = noise.sigma_w;
    q.diagonal() += pt.var_x;
    FilterState out = state;
    out.mean = pt.f;
    out.covariance = condition_covariance(pt.A * state.covariance * pt.A.transpose() + q);
    return out;
}

FilterState ekf_update(const FilterState &state, const Vector &u, const Vector &y, const DynamicsModel &model,
                       const NoiseConfig &noise) {
    const auto pt = model.evaluate(state.mean, u, EvalOrder::kFirst);
    Matrix r = noise.sigma_v;
    r.diagonal() += pt.var_y;
    const Matrix &p = state.covariance;
    FilterState out = state;
    const Matrix s_inv = innovation_inverse(pt.C * p * pt.C.transpose() + r, out.regularized);
    const Matrix k = p * pt.C.transpose() * s_inv;
    out.mean = state.mean + k * (y - pt.h);
    const Matrix ikc = Matrix::Identity(p.rows(), p.cols()) - k * pt.C;
    out.covariance = condition_covariance(ikc * p * ikc.transpose() + k * r * k.transpose());
    return out;
}

FilterState gp_ekf_step(const FilterState &state, const Vector &u_prev, const Vector &u, const Vector &y,
                        const DynamicsModel &model, const NoiseConfig &noise) {
    return ekf_update(ekf_predict(state, u_prev, model, noise), u, y, model, noise);
}

FilterState ukf_predict(const FilterState &state, const Vector &u, const DynamicsModel &model,
                        const NoiseConfig &noise, const UtParams &ut) {
    const auto n = state.mean.size();
    const auto w = ut_weights(static_cast<std::size_t>(n), ut);
    const Matrix pts = sigma_points(state.mean, state.covariance, ut);
    Matrix prop(n, pts.cols());
    for (Eigen::Index i = 0; i < pts.cols(); ++i) prop.col(i) = model.transition(pts.col(i), u);
    const Vector mean = prop * w.mean;
    const Matrix dev = prop.colwise() - mean;
    // One-step variance at the regression input (the current mean), as in the EKF.
    const auto pt = model.evaluate(state.mean, u, EvalOrder::kFirst);
    Matrix q = noise.sigma_w;
    q.diagonal() += pt.var_x;
    FilterState out = state;
    out.mean = mean;
    out.covariance = condition_covariance(dev * w.covariance.asDiagonal() * dev.transpose() + q);
    return out;
}

FilterState ukf_update(const FilterState &state, const Vector &u, const Vector &y, const DynamicsModel &model,
                       const NoiseConfig &noise, const UtParams &ut) {
    const auto n = state.mean.size();
    const auto p = y.size();
    const auto w = ut_weights(static_cast<std::size_t>(n), ut);
    const Matrix pts = sigma_points(state.mean, state.covariance, ut);
    Matrix z(p, pts.cols());
    for (Eigen::Index i = 0; i < pts.cols(); ++i) z.col(i) = model.output(pts.col(i), u);
    const Vector z_mean = z * w.mean;
    const Matrix dz = z.colwise() - z_mean;
    const Matrix dx = pts.colwise() - state.mean;
    const auto pt = model.evaluate(state.mean, u, EvalOrder::kFirst);
    Matrix r = noise.sigma_v;
    r.diagonal() += pt.var_y;
    const Matrix pzz = dz * w.covariance.asDiagonal() * dz.transpose() + r;
    const Matrix pxz = dx * w.covariance.asDiagonal() * dz.transpose();
    FilterState out = state;
    const Matrix pzz_inv = innovation_inverse(pzz, out.regularized);
    const Matrix k = pxz * pzz_inv;
    out.mean = state.mean + k * (y - z_mean);
    out.covariance = condition_covariance(state.covariance - k * symmetrized(pzz) * k.transpose());
    return out;
}

FilterState gp_ukf_step(const FilterState &state, const Vector &u_prev, const Vector &u, const Vector &y,
                        const DynamicsModel &model, const NoiseConfig &noise, const UtParams &ut) {
    return ukf_update(ukf_predict(state, u_prev, model, noise, ut), u, y, model, noise, ut);
}

EkfEstimator::EkfEstimator(const DynamicsModel &model, NoiseConfig noise, const Vector &x0, const Matrix &p0)
    : model_(model), noise_(std::move(noise)), state_{x0, condition_covariance(p0)} {
    noise_.validate();
}

Vector EkfEstimator::begin(const Vector &u0, const Vector &y0) {
    state_ = ekf_update(state_, u0, y0, model_, noise_);
    return state_.mean;
}

Vector EkfEstimator::advance(const Vector &u_prev, const Vector &, const Vector &u_now, const Vector &y_now) {
    state_ = gp_ekf_step(state_, u_prev, u_now, y_now, model_, noise_);
    return state_.mean;
}

UkfEstimator::UkfEstimator(const DynamicsModel &model, NoiseConfig noise, const Vector &x0, const Matrix &p0,
                           UtParams ut)
    : model_(model), noise_(std::move(noise)), ut_(ut), state_{x0, condition_covariance(p0)} {
    noise_.validate();
    ut_.validate(model.state_dim());
}

Vector UkfEstimator::begin(const Vector &u0, const Vector &y0) {
    state_ = ukf_update(state_, u0, y0, model_, noise_, ut_);
    return state_.mean;
}

Vector UkfEstimator::advance(const Vector &u_prev, const Vector &, const Vector &u_now, const Vector &y_now) {
    state_ = gp_ukf_step(state_, u_prev, u_now, y_now, model_, noise_, ut_);
    return state_.mean;
}

MheDriver::MheDriver(std::string name, const DynamicsModel &model, MheConfig config, const Vector &x0)
    : name_(std::move(name)), mhe_(model, std::move(config), x0) {}

Vector MheDriver::begin(const Vector &, const Vector &) { return mhe_.estimate(); }

Vector MheDriver::advance(const Vector &u_prev, const Vector &y_prev, const Vector &, const Vector &) {
    return mhe_.step(u_prev, y_prev);
}

}  // namespace gpmhe

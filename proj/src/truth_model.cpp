#include <cmath>

#include "gpmhe/model.hpp"

namespace gpmhe {
namespace {

double fd_step(double value) { return 1e-5 * std::max(1.0, std::abs(value)); }

}  // namespace

CallbackModel::CallbackModel(std::size_t n, std::size_t m, std::size_t p, Map f, Map h,
                             JacobianMap df, JacobianMap dh)
    : n_(n), m_(m), p_(p), f_(std::move(f)), h_(std::move(h)), df_(std::move(df)),
      dh_(std::move(dh)) {
    if (!f_ || !h_) throw std::invalid_argument("CallbackModel: f and h are required");
}

Matrix CallbackModel::jacobian(const Map &map, const JacobianMap &analytic, const Vector &x,
                               const Vector &u, std::size_t rows) const {
    if (analytic) return analytic(x, u);
    Matrix jac(static_cast<Eigen::Index>(rows), x.size());
    Vector xp = x;
    Vector xm = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double step = fd_step(x[j]);
        xp[j] = x[j] + step;
        xm[j] = x[j] - step;
        jac.col(j) = (map(xp, u) - map(xm, u)) / (2.0 * step);
        xp[j] = xm[j] = x[j];
    }
    return jac;
}

ModelPoint CallbackModel::evaluate(const Vector &x, const Vector &u, EvalOrder order) const {
    if (static_cast<std::size_t>(x.size()) != n_ || static_cast<std::size_t>(u.size()) != m_) {
        throw std::invalid_argument("CallbackModel::evaluate: dimension mismatch");
    }
    const auto n = static_cast<Eigen::Index>(n_);
    const auto p = static_cast<Eigen::Index>(p_);
    ModelPoint pt;
    pt.f = f_(x, u);
    pt.h = h_(x, u);
    if (order == EvalOrder::kValue) return pt;

    pt.A = jacobian(f_, df_, x, u, n_);
    pt.C = jacobian(h_, dh_, x, u, p_);
    pt.var_x = Vector::Zero(n);
    pt.var_y = Vector::Zero(p);
    if (order == EvalOrder::kFirst) return pt;

    pt.var_x_grad = Matrix::Zero(n, n);
    pt.var_y_grad = Matrix::Zero(p, n);
    pt.f_hessians.assign(n_, Matrix::Zero(n, n));
    pt.h_hessians.assign(p_, Matrix::Zero(n, n));
    Vector xp = x;
    Vector xm = x;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double step = fd_step(x[j]);
        xp[j] = x[j] + step;
        xm[j] = x[j] - step;
        const Matrix da = (jacobian(f_, df_, xp, u, n_) - jacobian(f_, df_, xm, u, n_)) / (2.0 * step);
        const Matrix dc = (jacobian(h_, dh_, xp, u, p_) - jacobian(h_, dh_, xm, u, p_)) / (2.0 * step);
        for (Eigen::Index i = 0; i < n; ++i) pt.f_hessians[i].col(j) = da.row(i).transpose();
        for (Eigen::Index i = 0; i < p; ++i) pt.h_hessians[i].col(j) = dc.row(i).transpose();
        xp[j] = xm[j] = x[j];
    }
    for (auto &hess : pt.f_hessians) hess = symmetrized(hess);
    for (auto &hess : pt.h_hessians) hess = symmetrized(hess);
    return pt;
}

}  // namespace gpmhe

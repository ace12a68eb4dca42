#include "gpmhe/learned_dynamics.hpp"

namespace gpmhe {

LearnedDynamics::LearnedDynamics(std::size_t n, std::size_t m, std::size_t p,
                                 std::vector<GpModel> state_gps, std::vector<GpModel> output_gps)
    : n_(n), m_(m), p_(p), state_gps_(std::move(state_gps)), output_gps_(std::move(output_gps)) {
    if (state_gps_.size() != n_ || output_gps_.size() != p_) {
        throw std::invalid_argument("LearnedDynamics: expected n state GPs and p output GPs");
    }
    const Matrix *shared = nullptr;
    auto check = [&](const GpModel &gp) {
        if (gp.input_dim() != n_ + m_) {
            throw std::invalid_argument("LearnedDynamics: GP input dimension must equal n + m");
        }
        if (shared == nullptr) {
            shared = &gp.inputs();
        } else if (gp.inputs().rows() != shared->rows() || (gp.size() > 0 && gp.inputs() != *shared)) {
            throw std::invalid_argument("LearnedDynamics: all GPs must share the regression inputs");
        }
    };
    for (const auto &gp : state_gps_) check(gp);
    for (const auto &gp : output_gps_) check(gp);
}

LearnedDynamics LearnedDynamics::train(const RegressionDataset &data, const TrainingOptions &options) {
    const auto n = static_cast<Eigen::Index>(data.state_dim);
    const auto p = static_cast<Eigen::Index>(data.output_dim);
    std::vector<GpModel> state_gps;
    std::vector<GpModel> output_gps;
    auto fit_one = [&](const Vector &targets, std::uint64_t component) {
        if (options.fixed_params) return GpModel::fit(data.inputs, targets, *options.fixed_params);
        HyperparameterOptions hyper = options.hyper;
        hyper.seed = options.hyper.seed + component;
        const auto best = optimize_hyperparameters(data.inputs, targets, hyper);
        return GpModel::fit(data.inputs, targets, best.params);
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        state_gps.push_back(fit_one(data.state_targets.col(i), static_cast<std::uint64_t>(i)));
    }
    for (Eigen::Index j = 0; j < p; ++j) {
        output_gps.push_back(fit_one(data.output_targets.col(j), static_cast<std::uint64_t>(n + j)));
    }
    return LearnedDynamics(data.state_dim, data.input_dim, data.output_dim, std::move(state_gps),
                           std::move(output_gps));
}

LearnedDynamics LearnedDynamics::prior_only(std::size_t n, std::size_t m, std::size_t p,
                                            const KernelParams &params) {
    std::vector<GpModel> state_gps(n, GpModel(params));
    std::vector<GpModel> output_gps(p, GpModel(params));
    return LearnedDynamics(n, m, p, std::move(state_gps), std::move(output_gps));
}

Vector LearnedDynamics::regression_input(const Vector &x, const Vector &u) const {
    if (static_cast<std::size_t>(x.size()) != n_ || static_cast<std::size_t>(u.size()) != m_) {
        throw std::invalid_argument("LearnedDynamics: x/u dimension mismatch");
    }
    Vector d(static_cast<Eigen::Index>(n_ + m_));
    d << x, u;
    return d;
}

ModelPoint LearnedDynamics::evaluate(const Vector &x, const Vector &u, EvalOrder order) const {
    const Vector d = regression_input(x, u);
    const auto n = static_cast<Eigen::Index>(n_);
    const auto p = static_cast<Eigen::Index>(p_);
    ModelPoint pt;
    pt.f.resize(n);
    pt.h.resize(p);
    if (order == EvalOrder::kValue) {
        for (Eigen::Index i = 0; i < n; ++i) pt.f[i] = state_gps_[i].posterior(d).mean;
        for (Eigen::Index j = 0; j < p; ++j) pt.h[j] = output_gps_[j].posterior(d).mean;
        return pt;
    }

    const bool second = order == EvalOrder::kSecond;
    pt.A.resize(n, n);
    pt.C.resize(p, n);
    pt.var_x.resize(n);
    pt.var_y.resize(p);
    if (second) {
        pt.var_x_grad.resize(n, n);
        pt.var_y_grad.resize(p, n);
        pt.f_hessians.reserve(n_);
        pt.h_hessians.reserve(p_);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto der = state_gps_[i].posterior_derivatives(d, second);
        pt.f[i] = der.mean;
        pt.A.row(i) = der.mean_gradient.head(n).transpose();
        pt.var_x[i] = der.variance;
        if (second) {
            pt.var_x_grad.row(i) = der.variance_gradient.head(n).transpose();
            pt.f_hessians.push_back(der.mean_hessian.topLeftCorner(n, n));
        }
    }
    for (Eigen::Index j = 0; j < p; ++j) {
        const auto der = output_gps_[j].posterior_derivatives(d, second);
        pt.h[j] = der.mean;
        pt.C.row(j) = der.mean_gradient.head(n).transpose();
        pt.var_y[j] = der.variance;
        if (second) {
            pt.var_y_grad.row(j) = der.variance_gradient.head(n).transpose();
            pt.h_hessians.push_back(der.mean_hessian.topLeftCorner(n, n));
        }
    }
    return pt;
}

Vector LearnedDynamics::mean_f(const Vector &x, const Vector &u) const {
    return evaluate(x, u, EvalOrder::kValue).f;
}

Vector LearnedDynamics::mean_h(const Vector &x, const Vector &u) const {
    return evaluate(x, u, EvalOrder::kValue).h;
}

LearnedDynamics::OneStepVariances LearnedDynamics::one_step_variances(const Vector &x,
                                                                      const Vector &u) const {
    const Vector d = regression_input(x, u);
    Vector vx(static_cast<Eigen::Index>(n_));
    Vector vy(static_cast<Eigen::Index>(p_));
    for (std::size_t i = 0; i < n_; ++i) vx[static_cast<Eigen::Index>(i)] = state_gps_[i].posterior(d).variance;
    for (std::size_t j = 0; j < p_; ++j) vy[static_cast<Eigen::Index>(j)] = output_gps_[j].posterior(d).variance;
    return {vx.asDiagonal(), vy.asDiagonal()};
}

LearnedDynamics::Jacobians LearnedDynamics::jacobians(const Vector &x, const Vector &u) const {
    const Vector d = regression_input(x, u);
    const auto n = static_cast<Eigen::Index>(n_);
    Jacobians out{Matrix(n, n), Matrix(static_cast<Eigen::Index>(p_), n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        out.A.row(i) = state_gps_[static_cast<std::size_t>(i)].posterior_mean_gradient(d).head(n).transpose();
    }
    for (std::size_t j = 0; j < p_; ++j) {
        out.C.row(static_cast<Eigen::Index>(j)) = output_gps_[j].posterior_mean_gradient(d).head(n).transpose();
    }
    return out;
}

AuxiliaryNoise residuals(const DynamicsModel &learned, const DynamicsModel &truth,
                         const Vector &x, const Vector &u, const Vector &w, const Vector &v) {
    const auto lp = learned.evaluate(x, u, EvalOrder::kValue);
    const auto tp = truth.evaluate(x, u, EvalOrder::kValue);
    return {tp.f - lp.f + w, tp.h - lp.h + v};
}

}  // namespace gpmhe

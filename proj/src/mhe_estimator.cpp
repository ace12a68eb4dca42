#include <ostream>

#include "gpmhe/mhe.hpp"

namespace gpmhe {

MheEstimator::MheEstimator(const DynamicsModel &model, MheConfig config, const Vector &initial_estimate)
    : model_(model), config_(std::move(config)) {
    config_.validate(model.state_dim(), model.output_dim());
    if (static_cast<std::size_t>(initial_estimate.size()) != model.state_dim()) {
        throw std::invalid_argument("MheEstimator: initial estimate size");
    }
    estimate_ = initial_estimate;
    if (!config_.state_box.empty() && !config_.state_box.strictly_contains(estimate_)) {
        estimate_ = config_.state_box.project_interior(estimate_);
        prior_projected_ = true;
    }
    estimate_sigma_ = config_.prior_sigma_init;
    priors_.push_back({0, estimate_, estimate_sigma_});
}

Matrix MheEstimator::ekf_predict(const Matrix &sigma, const Vector &x, const Vector &u) const {
    const auto pt = model_.evaluate(x, u, EvalOrder::kFirst);
    Matrix q = config_.stage_sigma_x();
    q.diagonal() += pt.var_x;
    Matrix r = config_.stage_sigma_y();
    r.diagonal() += pt.var_y;
    const Matrix s = symmetrized(pt.C * sigma * pt.C.transpose() + r);
    const Matrix gain = pt.A * sigma * pt.C.transpose() * s.inverse();
    return symmetrized(pt.A * sigma * pt.A.transpose() + q - gain * pt.C * sigma * pt.A.transpose());
}

const Vector &MheEstimator::step(const Vector &u_prev, const Vector &y_prev) {
    const auto n = static_cast<Eigen::Index>(model_.state_dim());
    const auto horizon = static_cast<std::size_t>(config_.horizon);
    ++t_;
    inputs_.push_back(u_prev);
    outputs_.push_back(y_prev);
    const bool shifted = inputs_.size() > horizon;
    if (shifted) {
        inputs_.pop_front();
        outputs_.pop_front();
    }
    const std::size_t len = inputs_.size();
    const int prior_time = t_ - static_cast<int>(len);
    while (!priors_.empty() && priors_.front().t < prior_time) priors_.pop_front();
    if (priors_.empty() || priors_.front().t != prior_time) throw std::logic_error("MheEstimator: prior buffer");
    const PriorEntry &entry = priors_.front();

    MheWindow window;
    window.inputs.assign(inputs_.begin(), inputs_.end());
    window.outputs.assign(outputs_.begin(), outputs_.end());
    window.prior = entry.estimate;
    window.prior_sigma = config_.prior_mode == PriorMode::kConstant
                             ? config_.constant_prior_sigma.value_or(config_.prior_sigma_init)
                             : entry.sigma;

    // Shifted warm start from the previous window.
    if (previous_z_) {
        Vector z = Vector::Zero(n * static_cast<Eigen::Index>(len + 1));
        const Vector &prev = *previous_z_;
        if (shifted && previous_len_ == len) {
            z.head(n) = last_.states.row(1).transpose();
            z.segment(n, n * static_cast<Eigen::Index>(len - 1)) = prev.segment(2 * n, n * static_cast<Eigen::Index>(len - 1));
        } else {
            z.head(prev.size()) = prev;
        }
        window.warm_start = z;
    }

    last_ = solve(model_, config_, window);
    prior_projected_ = prior_projected_ || last_.prior_projected;
    previous_z_ = last_.z;
    previous_len_ = len;

    const Vector x_prev = priors_.back().estimate;
    const Matrix sigma_prev = priors_.back().sigma;
    estimate_ = last_.estimate;
    switch (config_.prior_mode) {
        case PriorMode::kUncertainty:
            estimate_sigma_ = last_.estimate_sigma;
            if (entry.t == 0 && config_.anchor_initial_uncertainty && config_.cost_mode == CostMode::kPropagated) {
                std::vector<Vector> xs;
                for (std::size_t i = 0; i < len; ++i) xs.push_back(last_.states.row(static_cast<Eigen::Index>(i)).transpose());
                estimate_sigma_ = propagate_window(model_, xs, window.inputs, config_.noise, config_.caps,
                                                   config_.prior_sigma_init)
                                      .prior_sigma;
            }
            break;
        case PriorMode::kConstant: estimate_sigma_ = window.prior_sigma; break;
        case PriorMode::kEkf: estimate_sigma_ = ekf_predict(sigma_prev, x_prev, u_prev); break;
    }
    priors_.push_back({t_, estimate_, estimate_sigma_});
    diagnostics_.push_back({t_, last_.iterations, last_.kkt_residual, last_.cost, last_.barrier, last_.converged});
    return estimate_;
}

void MheEstimator::write_diagnostics_csv(std::ostream &out) const {
    out << "t,iterations,kkt_residual,cost,barrier,converged\n";
    for (const auto &d : diagnostics_) {
        out << d.t << ',' << d.iterations << ',' << d.kkt_residual << ',' << d.cost << ',' << d.barrier << ','
            << (d.converged ? 1 : 0) << '\n';
    }
}

}  // namespace gpmhe

#include <cmath>
#include <limits>
#include <vector>

#include "gpmhe/mhe.hpp"

namespace gpmhe {
namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 60;
constexpr int kMaxDampingRetries = 12;
constexpr double kRoundoff = 1e-12;  // relative merit resolution
constexpr double kBoundaryFraction = 0.99;  // a step may close at most this share of any slack

// Log-barrier over every box-constrained quantity of the window.
class Barrier {
public:
    Barrier(const MheConfig &config, std::size_t len) : config_(config), len_(len) {}

    bool active() const {
        return !config_.state_box.empty() || config_.process_noise_box || config_.output_noise_box;
    }

    // Distances to every active bound (lower and upper), stacked.
    Vector slacks(const Matrix &states, const Vector &z, const Matrix &output_noise) const {
        std::vector<double> out;
        const auto n = states.cols();
        auto add = [&](const Box &box, const Vector &q) {
            for (Eigen::Index k = 0; k < q.size(); ++k) {
                out.push_back(q[k] - box.lo[k]);
                out.push_back(box.hi[k] - q[k]);
            }
        };
        for (Eigen::Index i = 0; i < states.rows(); ++i) {
            if (!config_.state_box.empty()) add(config_.state_box, states.row(i).transpose());
        }
        for (std::size_t i = 0; i < len_; ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            if (config_.process_noise_box) add(*config_.process_noise_box, z.segment(n * (r + 1), n));
            if (config_.output_noise_box) add(*config_.output_noise_box, output_noise.row(r).transpose());
        }
        return Eigen::Map<Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
    }

    bool feasible(const Matrix &states, const Vector &z, const Matrix &output_noise) const {
        const Vector s = slacks(states, z, output_noise);
        return s.size() == 0 || (s.array() > 0.0).all();
    }

    double value(double mu, const Matrix &states, const Vector &z, const Matrix &output_noise) const {
        if (mu == 0.0) return 0.0;
        double phi = 0.0;
        const auto n = states.cols();
        auto add = [&](const Box &box, const Vector &q) {
            phi -= mu * ((q - box.lo).array().log().sum() + (box.hi - q).array().log().sum());
        };
        for (Eigen::Index i = 0; i < states.rows(); ++i) {
            if (!config_.state_box.empty()) add(config_.state_box, states.row(i).transpose());
        }
        for (std::size_t i = 0; i < len_; ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            if (config_.process_noise_box) add(*config_.process_noise_box, z.segment(n * (r + 1), n));
            if (config_.output_noise_box) add(*config_.output_noise_box, output_noise.row(r).transpose());
        }
        return phi;
    }

    // Gradient and Gauss-Newton-type Hessian mu * sum (1/s_lo^2 + 1/s_hi^2) J^T J.
    void derivatives(double mu, const CostEvaluation &ev, const Vector &z, Vector &grad, Matrix &hess) const {
        if (mu == 0.0) return;
        const auto n = ev.states.cols();
        const Eigen::Index nz = z.size();
        auto add = [&](const Box &box, const Vector &q, const Matrix &jac) {
            const Vector a = (q - box.lo).cwiseInverse();
            const Vector b = (box.hi - q).cwiseInverse();
            grad += mu * jac.transpose() * (b - a);
            const Vector curv = mu * (a.cwiseAbs2() + b.cwiseAbs2());
            hess += jac.transpose() * curv.asDiagonal() * jac;
        };
        for (Eigen::Index i = 0; i < ev.states.rows(); ++i) {
            if (!config_.state_box.empty()) {
                add(config_.state_box, ev.states.row(i).transpose(),
                    ev.state_sensitivity[static_cast<std::size_t>(i)]);
            }
        }
        for (std::size_t i = 0; i < len_; ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            if (config_.process_noise_box) {
                Matrix sel = Matrix::Zero(n, nz);
                sel.middleCols(n * (r + 1), n).setIdentity();
                add(*config_.process_noise_box, z.segment(n * (r + 1), n), sel);
            }
            if (config_.output_noise_box) {
                add(*config_.output_noise_box, ev.output_noise.row(r).transpose(), ev.output_sensitivity[i]);
            }
        }
    }

private:
    const MheConfig &config_;
    std::size_t len_;
};

// Moves every state of the start point at least the interior margin inside the
// state box by adjusting the process noise sequentially:
// w(i) = clamp(f(x(i)) + w(i)) - f(x(i)).
Vector repair_start(const DynamicsModel &model, const MheConfig &config, const MheWindow &window, Vector z) {
    const auto n = static_cast<Eigen::Index>(model.state_dim());
    const Box &box = config.state_box;
    if (box.empty()) return z;
    Vector x = box.project_interior(z.head(n));
    z.head(n) = x;
    for (std::size_t i = 0; i < window.length(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const Vector fx = model.transition(x, window.inputs[i]);
        Vector next = fx + z.segment(n * (r + 1), n);
        next = box.project_interior(next.allFinite() ? next : fx);
        if (!box.strictly_contains(next)) next = box.project_interior(Vector(0.5 * (box.lo + box.hi)));
        z.segment(n * (r + 1), n) = next - fx;
        x = next;
    }
    return z;
}

bool finite_eval(const MheProblem &problem, const Vector &z, GradientMode mode, const StageWeights *frozen,
                 CostEvaluation &out) {
    try {
        out = problem.evaluate(z, mode, frozen);
        return std::isfinite(out.value);
    } catch (const NumericalError &) {
        return false;
    }
}

}  // namespace

MheSolution solve(const DynamicsModel &model, const MheConfig &config, const MheWindow &window_in) {
    const auto n = static_cast<Eigen::Index>(model.state_dim());
    MheWindow window = window_in;
    MheSolution sol;
    if (!config.state_box.empty() && !config.state_box.strictly_contains(window.prior)) {
        window.prior = config.state_box.project_interior(window.prior);
        sol.prior_projected = true;
    }
    const std::size_t len = window.length();
    if (len == 0) {
        sol.states = window.prior.transpose();
        sol.process_noise.resize(0, n);
        sol.output_noise.resize(0, static_cast<Eigen::Index>(model.output_dim()));
        sol.z = window.prior;
        sol.estimate = window.prior;
        sol.estimate_sigma = window.prior_sigma;
        sol.converged = true;
        sol.message = "empty window";
        return sol;
    }

    const MheProblem problem(model, config, window);
    const Barrier barrier(config, len);
    const auto &opt = config.solver;
    const bool freeze = opt.freeze_weights_per_iteration;

    // Start point: warm start when it is feasible, otherwise a repaired one.
    Vector z;
    if (window.warm_start && window.warm_start->size() == problem.num_variables() && window.warm_start->allFinite()) {
        z = *window.warm_start;
    } else {
        z = Vector::Zero(problem.num_variables());
        z.head(n) = window.prior;
    }
    CostEvaluation ev;
    auto feasible_at = [&](const Vector &cand) {
        CostEvaluation probe;
        if (!finite_eval(problem, cand, GradientMode::kNone, nullptr, probe)) return false;
        return barrier.feasible(probe.states, cand, probe.output_noise);
    };
    // Barrier stages restart at a large mu: keep the start a margin away
    // from the bounds (warm starts from the previous window sit on them).
    z = repair_start(model, config, window, z);
    if (!feasible_at(z)) {
        Vector cold = Vector::Zero(problem.num_variables());
        cold.head(n) = window.prior;
        z = repair_start(model, config, window, cold);
    }

    double mu = barrier.active() ? opt.barrier_initial : 0.0;
    int iterations = 0;
    bool converged = false;
    bool failed = false;
    bool noise_limited = false;
    double kkt = std::numeric_limits<double>::infinity();
    std::string message;

    while (true) {
        const bool last_stage = mu <= opt.barrier_final * (1.0 + 1e-12);
        const double stage_tol = last_stage ? opt.kkt_tolerance : std::max(opt.kkt_tolerance, 10.0 * mu);
        bool stage_done = false;
        while (iterations < opt.max_iterations) {
            if (!finite_eval(problem, z, freeze ? GradientMode::kFrozenWeights : GradientMode::kFull, nullptr, ev)) {
                failed = true;
                message = "non-finite cost at iterate";
                break;
            }
            Vector grad = ev.gradient;
            Matrix hess = 2.0 * ev.residual_jacobian.transpose() * ev.residual_jacobian;
            barrier.derivatives(mu, ev, z, grad, hess);
            const double merit0 = ev.value + barrier.value(mu, ev.states, z, ev.output_noise);
            kkt = grad.lpNorm<Eigen::Infinity>() / std::max(1.0, std::abs(merit0));
            if (kkt <= stage_tol) {
                stage_done = true;
                break;
            }
            const StageWeights *frozen = freeze ? &ev.weights : nullptr;
            const Vector slack_floor = (1.0 - kBoundaryFraction) * barrier.slacks(ev.states, z, ev.output_noise);

            bool stepped = false;
            bool stationary = false;
            double damping = 0.0;
            const double scale = std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
            for (int attempt = 0; attempt < kMaxDampingRetries && !stepped && !stationary; ++attempt) {
                Matrix h = hess;
                h.diagonal().array() += damping * scale;
                Eigen::LLT<Matrix> llt(h);
                if (llt.info() != Eigen::Success) {
                    damping = damping == 0.0 ? opt.damping_initial : damping * opt.damping_factor;
                    continue;
                }
                const Vector d = -llt.solve(grad);
                const double slope = grad.dot(d);
                if (!d.allFinite() || slope >= 0.0) {
                    damping = damping == 0.0 ? opt.damping_initial : damping * opt.damping_factor;
                    continue;
                }
                // Newton decrement at the rounding level of the merit: no
                // further decrease can be resolved.
                if (damping == 0.0 && -slope <= kRoundoff * std::max(1.0, std::abs(merit0))) {
                    stationary = true;
                    break;
                }
                double alpha = 1.0;
                double tail_excess = 0.0;  // merit change at the shortest trial step
                for (int bt = 0; bt < kMaxBacktracks; ++bt, alpha *= 0.5) {
                    const Vector trial = z + alpha * d;
                    CostEvaluation tv;
                    if (!finite_eval(problem, trial, GradientMode::kNone, frozen, tv)) continue;
                    if (mu > 0.0 && !(barrier.slacks(tv.states, trial, tv.output_noise).array() >= slack_floor.array()).all()) {
                        continue;
                    }
                    // With frozen weights merit0 is already the frozen cost at z.
                    const double merit = tv.value + barrier.value(mu, tv.states, trial, tv.output_noise);
                    tail_excess = merit - merit0 - alpha * slope;
                    const bool within_roundoff =
                        alpha == 1.0 && merit <= merit0 + kRoundoff * std::max(1.0, std::abs(merit0));
                    if (merit <= merit0 + kArmijo * alpha * slope || within_roundoff) {
                        z = trial;
                        stepped = true;
                        break;
                    }
                    if (alpha * d.lpNorm<Eigen::Infinity>() < 1e-15 * (1.0 + z.lpNorm<Eigen::Infinity>())) break;
                }
                // The predicted decrease is below the evaluation noise seen at
                // vanishing steps: the iterate is stationary to working accuracy.
                if (!stepped && damping == 0.0 && -slope <= std::abs(tail_excess)) {
                    stationary = true;
                    noise_limited = true;
                    break;
                }
                if (!stepped) damping = damping == 0.0 ? opt.damping_initial : damping * opt.damping_factor;
            }
            if (stationary) {
                stage_done = true;
                break;
            }
            ++iterations;
            if (!stepped) {
                failed = true;
                message = "line search failed";
                break;
            }
        }
        if (failed) break;
        if (!stage_done) {
            message = "maximum iterations reached";
            sol.max_iterations_reached = true;
            break;
        }
        if (last_stage) {
            converged = true;
            break;
        }
        mu = std::max(mu / opt.barrier_factor, opt.barrier_final);
    }

    // Report at the final iterate with weights evaluated there.
    ev = problem.evaluate(z, GradientMode::kNone);
    sol.z = z;
    sol.states = ev.states;
    sol.output_noise = ev.output_noise;
    sol.process_noise.resize(static_cast<Eigen::Index>(len), n);
    for (std::size_t i = 0; i < len; ++i) {
        sol.process_noise.row(static_cast<Eigen::Index>(i)) =
            z.segment(n * static_cast<Eigen::Index>(i + 1), n).transpose();
    }
    sol.cost = ev.value;
    sol.kkt_residual = kkt;
    sol.barrier = mu;
    sol.iterations = iterations;
    sol.converged = converged;
    sol.message = converged ? (noise_limited ? "converged to evaluation noise" : "converged") : message;
    sol.estimate = ev.states.row(ev.states.rows() - 1).transpose();
    sol.weights = ev.weights;
    if (config.cost_mode == CostMode::kPropagated) {
        // Bookkeeping copy with the exact PSD-min along the estimated trajectory.
        std::vector<Vector> xs;
        for (std::size_t i = 0; i < len; ++i) xs.push_back(ev.states.row(static_cast<Eigen::Index>(i)).transpose());
        const auto prop = propagate_window(model, xs, window.inputs, config.noise, config.caps,
                                           Matrix::Zero(n, n));
        sol.estimate_sigma = prop.prior_sigma;
    } else {
        sol.estimate_sigma = ev.weights.sigma_x.back();
    }
    return sol;
}

}  // namespace gpmhe

#include <cmath>
#include <limits>
#include <random>

#include "gpmhe/gp.hpp"

namespace gpmhe {
namespace {

struct Bounds {
    Vector lower;
    Vector upper;
};

struct Objective {
    const Matrix &inputs;
    const Vector &targets;

    // Returns -LML and its gradient; +inf when the factorization fails.
    double operator()(const Vector &theta, Vector &gradient) const {
        try {
            const auto lml = log_marginal_likelihood(inputs, targets, KernelParams::from_log(theta));
            gradient = -lml.gradient;
            return std::isfinite(lml.value) ? -lml.value : std::numeric_limits<double>::infinity();
        } catch (const NumericalError &) {
            gradient = Vector::Zero(theta.size());
            return std::numeric_limits<double>::infinity();
        }
    }
};

Vector project(const Vector &theta, const Bounds &b) {
    return theta.cwiseMax(b.lower).cwiseMin(b.upper);
}

// Coordinates that may move: not fixed, and not pinned at a bound by the gradient.
std::vector<bool> free_set(const Vector &theta, const Vector &grad, const Bounds &b,
                           const std::vector<bool> &optimizable) {
    std::vector<bool> out(static_cast<std::size_t>(theta.size()));
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const bool at_lower = theta[i] <= b.lower[i] && grad[i] > 0.0;
        const bool at_upper = theta[i] >= b.upper[i] && grad[i] < 0.0;
        out[static_cast<std::size_t>(i)] = optimizable[static_cast<std::size_t>(i)] && !at_lower && !at_upper;
    }
    return out;
}

double projected_gradient_norm(const Vector &grad, const std::vector<bool> &free) {
    double out = 0.0;
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
        if (free[static_cast<std::size_t>(i)]) out = std::max(out, std::abs(grad[i]));
    }
    return out;
}

struct LocalResult {
    Vector theta;
    double value;
};

LocalResult descend(const Objective &objective, Vector theta, const Bounds &bounds,
                    const std::vector<bool> &optimizable, const HyperparameterOptions &options) {
    const Eigen::Index dim = theta.size();
    Vector grad(dim);
    double value = objective(theta, grad);
    if (!std::isfinite(value)) return {theta, value};

    Matrix inv_hessian = Matrix::Identity(dim, dim);
    int stalls = 0;
    for (int iter = 0; iter < options.max_iterations; ++iter) {
        const auto free = free_set(theta, grad, bounds, optimizable);
        if (projected_gradient_norm(grad, free) < options.gradient_tolerance) break;

        auto masked_direction = [&](const Matrix &h) {
            Vector g = grad;
            for (Eigen::Index i = 0; i < dim; ++i) {
                if (!free[static_cast<std::size_t>(i)]) g[i] = 0.0;
            }
            Vector d = -h * g;
            for (Eigen::Index i = 0; i < dim; ++i) {
                if (!free[static_cast<std::size_t>(i)]) d[i] = 0.0;
            }
            if (d.dot(g) >= 0.0) d = -g;  // not a descent direction; fall back
            return d;
        };

        bool accepted = false;
        Vector next;
        Vector next_grad(dim);
        double next_value = value;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            const Vector direction =
                masked_direction(attempt == 0 ? inv_hessian : Matrix::Identity(dim, dim));
            // Cap the log-space step so one iteration cannot jump many decades.
            double step = std::min(1.0, 3.0 / std::max(direction.lpNorm<Eigen::Infinity>(), 1e-300));
            for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
                next = project(theta + step * direction, bounds);
                next_value = objective(next, next_grad);
                if (std::isfinite(next_value) &&
                    next_value <= value + 1e-4 * grad.dot(next - theta)) {
                    accepted = true;
                    break;
                }
            }
            if (!accepted) inv_hessian.setIdentity();
        }
        if (!accepted) break;

        const Vector s = next - theta;
        const Vector y = next_grad - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const double rho = 1.0 / sy;
            const Matrix eye = Matrix::Identity(dim, dim);
            inv_hessian = (eye - rho * s * y.transpose()) * inv_hessian *
                              (eye - rho * y * s.transpose()) +
                          rho * s * s.transpose();
        } else {
            inv_hessian.setIdentity();
        }
        const double decrease = value - next_value;
        theta = next;
        grad = next_grad;
        value = next_value;
        stalls = decrease <= 1e-12 * (1.0 + std::abs(value)) ? stalls + 1 : 0;
        if (stalls >= 3) break;
    }
    return {theta, value};
}

}  // namespace

HyperparameterResult optimize_hyperparameters(const Matrix &inputs, const Vector &targets,
                                              const HyperparameterOptions &options) {
    if (inputs.rows() < 2 || inputs.rows() != targets.size()) {
        throw std::invalid_argument("optimize_hyperparameters: need N >= 2 matching targets");
    }
    if (options.starts < 1) throw std::invalid_argument("optimize_hyperparameters: starts >= 1");
    const Eigen::Index dim = inputs.cols();

    // Scales: target second moment for the variances, input range for lengthscales.
    double scale = targets.squaredNorm() / static_cast<double>(targets.size());
    if (!(scale > 0.0)) scale = 1.0;
    Vector spread(dim);
    for (Eigen::Index a = 0; a < dim; ++a) {
        const double range = inputs.col(a).maxCoeff() - inputs.col(a).minCoeff();
        spread[a] = range > 0.0 ? range : 1.0;
    }

    KernelParams start;
    start.signal_variance = scale;
    start.lengthscales = options.initial_lengthscales.value_or(spread);
    start.noise_variance = 1e-2 * scale;
    start.validate(static_cast<std::size_t>(dim));
    const Vector theta0 = start.to_log();

    Bounds bounds{Vector(dim + 2), Vector(dim + 2)};
    bounds.lower[0] = std::log(scale) - 10.0;
    bounds.upper[0] = std::log(scale) + 15.0;
    for (Eigen::Index a = 0; a < dim; ++a) {
        bounds.lower[a + 1] = std::log(options.lengthscale_lower_factor * spread[a]);
        bounds.upper[a + 1] = std::log(options.lengthscale_upper_factor * spread[a]);
    }
    bounds.lower[dim + 1] = std::log(scale) - 25.0;
    bounds.upper[dim + 1] = std::log(scale) + 2.0;

    std::vector<bool> optimizable(static_cast<std::size_t>(dim + 2), true);
    if (!options.optimize_lengthscales) {
        for (Eigen::Index a = 0; a < dim; ++a) {
            optimizable[static_cast<std::size_t>(a + 1)] = false;
            bounds.lower[a + 1] = bounds.upper[a + 1] = theta0[a + 1];
        }
    }

    const Objective objective{inputs, targets};
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> jitter(-2.0, 2.0);

    HyperparameterResult best;
    double best_value = std::numeric_limits<double>::infinity();
    double best_start_value = std::numeric_limits<double>::infinity();
    Vector best_start_theta = project(theta0, bounds);
    bool any_improved = false;
    for (int s = 0; s < options.starts; ++s) {
        Vector theta = theta0;
        if (s > 0) {
            for (Eigen::Index i = 0; i < theta.size(); ++i) {
                const double delta = jitter(rng);  // drawn unconditionally: same stream either way
                if (optimizable[static_cast<std::size_t>(i)]) theta[i] += delta;
            }
        }
        theta = project(theta, bounds);
        Vector grad;
        const double start_value = objective(theta, grad);
        if (start_value < best_start_value) {
            best_start_value = start_value;
            best_start_theta = theta;
        }
        const LocalResult local = descend(objective, theta, bounds, optimizable, options);
        if (std::isfinite(local.value) && local.value < start_value) any_improved = true;
        if (local.value < best_value) {
            best_value = local.value;
            best.params = KernelParams::from_log(local.theta);
            best.best_start = s;
        }
    }
    if (!std::isfinite(best_value)) {
        throw NumericalError("optimize_hyperparameters: every start failed to factorize");
    }
    best.improved = any_improved;
    if (!any_improved) {
        best.params = KernelParams::from_log(best_start_theta);
        best_value = best_start_value;
    }
    best.log_likelihood = -best_value;
    return best;
}

}  // namespace gpmhe

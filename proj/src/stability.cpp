#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "gpmhe/stability.hpp"

namespace gpmhe {
namespace {

double weighted_norm(const Vector &e, const Matrix &sigma) {
    Eigen::LLT<Matrix> llt(symmetrized(sigma));
    if (llt.info() != Eigen::Success) throw NumericalError("weighted_norm: covariance not PD");
    return std::sqrt(std::max(0.0, e.dot(llt.solve(e))));
}

}  // namespace

double gen_eig_max(const Matrix &p1, const Matrix &p2) {
    if (p1.rows() != p1.cols() || p1.rows() != p2.rows() || p2.rows() != p2.cols()) {
        throw std::invalid_argument("gen_eig_max: shape mismatch");
    }
    Eigen::LLT<Matrix> l2(symmetrized(p2));
    if (l2.info() != Eigen::Success) throw std::invalid_argument("gen_eig_max: p2 not PD");
    Eigen::LLT<Matrix> l1(symmetrized(p1));
    if (l1.info() != Eigen::Success) throw std::invalid_argument("gen_eig_max: p1 not PD");
    const Matrix l = l2.matrixL();
    const auto tri = l.triangularView<Eigen::Lower>();
    const Matrix half = tri.solve(symmetrized(p1));
    const Matrix whitened = tri.solve(half.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(whitened), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

void StabilityConfig::validate() const {
    if (!(discount >= 0.0 && discount < 1.0)) throw std::invalid_argument("StabilityConfig: discount in [0, 1)");
    if (grid < 2) throw std::invalid_argument("StabilityConfig: grid needs >= 2 points per dimension");
    if (refinements < 0) throw std::invalid_argument("StabilityConfig: refinements >= 0");
}

HorizonResult contraction_and_min_horizon(const StabilityConfig &cfg) {
    cfg.validate();
    const auto n = cfg.caps.sigma_x_max.rows();
    const Matrix shifted = cfg.caps.sigma_x_max + cfg.caps.epsilon * Matrix::Identity(n, n);
    HorizonResult out;
    out.lambda = gen_eig_max(cfg.caps.sigma_x_min.inverse(), shifted.inverse());
    if (cfg.discount == 0.0) {
        out.min_horizon = 1;
        return out;
    }
    // Integer bracketing: 4 lambda eta^M < 1 <= 4 lambda eta^(M-1).
    int m = std::max(1, static_cast<int>(std::floor(std::log(4.0 * out.lambda) / -std::log(cfg.discount))) - 1);
    while (m > 1 && 4.0 * out.lambda * std::pow(cfg.discount, m - 1) < 1.0) --m;
    while (!(4.0 * out.lambda * std::pow(cfg.discount, m) < 1.0)) ++m;
    out.min_horizon = m;
    return out;
}

double contraction_rate(double lambda, double discount, int horizon) {
    if (horizon < 1) throw std::invalid_argument("contraction_rate: horizon >= 1");
    return std::pow(4.0 * lambda, 1.0 / horizon) * discount;
}

AlphaMax estimate_alpha_max(const DynamicsModel &learned, const DynamicsModel &truth, const Box &state_box,
                            const Box &input_box, const StabilityConfig &cfg) {
    cfg.validate();
    const auto n = static_cast<Eigen::Index>(learned.state_dim());
    const auto m = static_cast<Eigen::Index>(learned.input_dim());
    if (state_box.empty()) throw std::invalid_argument("estimate_alpha_max: state box required");
    if (m > 0 && input_box.empty()) throw std::invalid_argument("estimate_alpha_max: input box required");
    const Eigen::Index dim = n + m;
    Vector lo(dim), hi(dim);
    lo.head(n) = state_box.lo;
    hi.head(n) = state_box.hi;
    if (m > 0) {
        lo.tail(m) = input_box.lo;
        hi.tail(m) = input_box.hi;
    }

    AlphaMax out;
    auto visit = [&](const Vector &point) {
        const Vector x = point.head(n);
        const Vector u = point.tail(m);
        const auto lp = learned.evaluate(x, u, EvalOrder::kValue);
        const auto tp = truth.evaluate(x, u, EvalOrder::kValue);
        out.alpha1 = std::max(out.alpha1, weighted_norm(tp.f - lp.f, cfg.caps.sigma_x_min));
        out.alpha2 = std::max(out.alpha2, weighted_norm(tp.h - lp.h, cfg.caps.sigma_y_min));
        ++out.samples;
    };

    // Deterministic tensor grid including the box corners.
    std::vector<int> idx(static_cast<std::size_t>(dim), 0);
    const int g = cfg.grid;
    while (true) {
        Vector point(dim);
        for (Eigen::Index k = 0; k < dim; ++k) {
            point[k] = lo[k] + (hi[k] - lo[k]) * idx[static_cast<std::size_t>(k)] / (g - 1);
        }
        visit(point);
        Eigen::Index k = 0;
        while (k < dim && ++idx[static_cast<std::size_t>(k)] == g) idx[static_cast<std::size_t>(k++)] = 0;
        if (k == dim) break;
    }

    // Latin-hypercube refinement.
    if (cfg.refinements > 0) {
        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const int r = cfg.refinements;
        std::vector<std::vector<int>> strata(static_cast<std::size_t>(dim));
        for (auto &s : strata) {
            s.resize(static_cast<std::size_t>(r));
            std::iota(s.begin(), s.end(), 0);
            std::shuffle(s.begin(), s.end(), rng);
        }
        for (int j = 0; j < r; ++j) {
            Vector point(dim);
            for (Eigen::Index k = 0; k < dim; ++k) {
                const double cell = (strata[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] + unit(rng)) / r;
                point[k] = lo[k] + (hi[k] - lo[k]) * cell;
            }
            visit(point);
        }
    }
    out.alpha = std::max(out.alpha1, out.alpha2);
    return out;
}

double PresBoundRow::rhs() const { return std::max({initial_term, w_term, v_term, alpha_term}); }

void PresBoundReport::write_csv(std::ostream &out) const {
    out << "t,lhs,initial_term,w_term,v_term,alpha_term,satisfied\n";
    out.precision(12);
    for (const auto &r : rows) {
        out << r.t << ',' << r.lhs << ',' << r.initial_term << ',' << r.w_term << ',' << r.v_term << ','
            << r.alpha_term << ',' << (r.satisfied ? 1 : 0) << '\n';
    }
}

PresBoundReport check_pres_bound(const RunRecord &run, const DynamicsModel &learned, const MheConfig &mhe,
                                 double mu, double alpha_max) {
    const auto n = static_cast<Eigen::Index>(learned.state_dim());
    const int steps = static_cast<int>(run.states.rows()) - 1;
    if (steps < 0 || run.estimates.rows() != run.states.rows() || run.process_noise.rows() < steps ||
        run.output_noise.rows() < steps) {
        throw std::invalid_argument("check_pres_bound: inconsistent run record");
    }
    PresBoundReport report;
    report.mu = mu;
    report.applicable = mu < 1.0;
    const int horizon = mhe.horizon;
    const Matrix lhs_sigma = mhe.caps.sigma_x_max + mhe.caps.epsilon * Matrix::Identity(n, n);

    // Model points along the true trajectory, shared by every t.
    std::vector<ModelPoint> points;
    for (int s = 0; s < steps; ++s) {
        const Vector u = run.inputs.rows() > s ? Vector(run.inputs.row(s).transpose()) : Vector();
        points.push_back(learned.evaluate(run.states.row(s).transpose(), u, EvalOrder::kFirst));
    }

    const double root4 = std::pow(std::max(mu, 0.0), 0.25);
    const double gain = report.applicable ? 12.0 / (1.0 - root4) : std::numeric_limits<double>::infinity();
    const double e0 = weighted_norm((run.estimates.row(0) - run.states.row(0)).transpose(), mhe.prior_sigma_init);

    for (int t = 0; t <= steps; ++t) {
        PresBoundRow row;
        row.t = t;
        row.lhs = weighted_norm((run.estimates.row(t) - run.states.row(t)).transpose(), lhs_sigma);
        row.initial_term = 6.0 * std::pow(std::sqrt(std::max(mu, 0.0)), t) * e0;
        row.alpha_term = report.applicable ? gain * alpha_max : gain;

        // Blocks of M times counted back from t - 1, each starting from zero.
        std::vector<Matrix> sx(static_cast<std::size_t>(t)), sy(static_cast<std::size_t>(t));
        for (int block_end = t - 1; block_end >= 0; block_end -= horizon) {
            const int block_start = std::max(0, block_end - horizon + 1);
            Matrix prev = Matrix::Zero(n, n);
            for (int s = block_start; s <= block_end; ++s) {
                const auto &pt = points[static_cast<std::size_t>(s)];
                sy[static_cast<std::size_t>(s)] = propagate_y(prev, pt.var_y, pt.C, mhe.noise, mhe.caps);
                sx[static_cast<std::size_t>(s)] = propagate_x(prev, pt.var_x, pt.A, mhe.noise, mhe.caps);
                prev = sx[static_cast<std::size_t>(s)];
            }
        }
        for (int q = 0; q < t; ++q) {
            const int s = t - q - 1;
            const double decay = gain * std::pow(root4, q);
            const double wn = weighted_norm(run.process_noise.row(s).transpose(), sx[static_cast<std::size_t>(s)]);
            const double vn = weighted_norm(run.output_noise.row(s).transpose(), sy[static_cast<std::size_t>(s)]);
            row.w_term = std::max(row.w_term, report.applicable ? decay * wn : gain);
            row.v_term = std::max(row.v_term, report.applicable ? decay * vn : gain);
        }
        row.satisfied = !report.applicable || row.lhs <= row.rhs() * (1.0 + 1e-12) + 1e-12;
        if (!row.satisfied) ++report.violations;
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace gpmhe

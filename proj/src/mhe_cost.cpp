#include <cmath>

#include "gpmhe/mhe.hpp"

namespace gpmhe {
namespace {

Matrix lower_factor(const Matrix &sigma, const char *what) {
    Eigen::LLT<Matrix> llt(symmetrized(sigma));
    if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + ": weight matrix not PD");
    return llt.matrixL();
}

// Rows of dA/dz for direction k: row r of the result is (H_r s)^T.
Matrix directional_jacobian(const std::vector<Matrix> &hessians, const Vector &s) {
    Matrix out(static_cast<Eigen::Index>(hessians.size()), s.size());
    for (std::size_t r = 0; r < hessians.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = (hessians[r] * s).transpose();
    }
    return out;
}

}  // namespace

const char *cost_mode_name(CostMode mode) {
    switch (mode) {
        case CostMode::kPropagated: return "propagated";
        case CostMode::kOneStep: return "one_step";
        case CostMode::kConstant: return "constant";
    }
    return "?";
}

CostMode parse_cost_mode(const std::string &name) {
    if (name == "propagated") return CostMode::kPropagated;
    if (name == "one_step") return CostMode::kOneStep;
    if (name == "constant") return CostMode::kConstant;
    throw std::invalid_argument("unknown cost mode '" + name + "'");
}

const char *prior_mode_name(PriorMode mode) {
    switch (mode) {
        case PriorMode::kUncertainty: return "uncertainty";
        case PriorMode::kConstant: return "constant";
        case PriorMode::kEkf: return "ekf";
    }
    return "?";
}

PriorMode parse_prior_mode(const std::string &name) {
    if (name == "uncertainty") return PriorMode::kUncertainty;
    if (name == "constant") return PriorMode::kConstant;
    if (name == "ekf") return PriorMode::kEkf;
    throw std::invalid_argument("unknown prior mode '" + name + "'");
}

bool Box::contains(const Vector &x, double tol) const {
    if (empty()) return true;
    return ((x - lo).array() >= -tol).all() && ((hi - x).array() >= -tol).all();
}

bool Box::strictly_contains(const Vector &x) const {
    if (empty()) return true;
    return ((x - lo).array() > 0.0).all() && ((hi - x).array() > 0.0).all();
}

Vector Box::project_interior(const Vector &x, double fraction) const {
    if (empty()) return x;
    const Vector margin = fraction * (hi - lo);
    return x.cwiseMax(lo + margin).cwiseMin(hi - margin);
}

void Box::validate(std::size_t dim) const {
    if (empty()) return;
    if (static_cast<std::size_t>(lo.size()) != dim || static_cast<std::size_t>(hi.size()) != dim) {
        throw std::invalid_argument("Box: dimension mismatch");
    }
    if (!((hi - lo).array() > 0.0).all()) throw std::invalid_argument("Box: need lo < hi");
}

void MheConfig::validate(std::size_t n, std::size_t p) const {
    if (horizon < 1) throw std::invalid_argument("MheConfig: horizon must be >= 1");
    if (!(discount >= 0.0 && discount < 1.0)) throw std::invalid_argument("MheConfig: discount must be in [0, 1)");
    if (static_cast<std::size_t>(noise.sigma_w.rows()) != n || static_cast<std::size_t>(noise.sigma_v.rows()) != p) {
        throw std::invalid_argument("MheConfig: noise dimensions do not match the model");
    }
    if (cost_mode == CostMode::kPropagated) caps.validate(noise);
    else noise.validate();
    state_box.validate(n);
    if (process_noise_box) process_noise_box->validate(n);
    if (output_noise_box) output_noise_box->validate(p);
    if (static_cast<std::size_t>(prior_sigma_init.rows()) != n || prior_sigma_init.cols() != prior_sigma_init.rows()) {
        throw std::invalid_argument("MheConfig: prior_sigma_init must be n x n");
    }
    if (solver.max_iterations < 1 || solver.kkt_tolerance <= 0.0) {
        throw std::invalid_argument("MheConfig: bad solver options");
    }
}

MheProblem::MheProblem(const DynamicsModel &model, const MheConfig &config, const MheWindow &window)
    : model_(model), config_(config), window_(window), n_(model.state_dim()), p_(model.output_dim()),
      len_(window.length()) {
    if (window.inputs.size() != len_) throw std::invalid_argument("MheWindow: inputs/outputs length mismatch");
    if (static_cast<std::size_t>(window.prior.size()) != n_) throw std::invalid_argument("MheWindow: prior size");
    for (const auto &y : window.outputs) {
        if (static_cast<std::size_t>(y.size()) != p_) throw std::invalid_argument("MheWindow: output size");
    }
    nz_ = static_cast<Eigen::Index>(n_ * (len_ + 1));
    prior_factor_ = lower_factor(window.prior_sigma, "prior");
}

Matrix MheProblem::simulate(const Vector &z) const {
    const auto n = static_cast<Eigen::Index>(n_);
    Matrix states(static_cast<Eigen::Index>(len_ + 1), n);
    Vector x = z.head(n);
    states.row(0) = x.transpose();
    for (std::size_t i = 0; i < len_; ++i) {
        x = model_.transition(x, window_.inputs[i]) + z.segment(n * static_cast<Eigen::Index>(i + 1), n);
        states.row(static_cast<Eigen::Index>(i + 1)) = x.transpose();
    }
    return states;
}

Vector MheProblem::decision_from_states(const Matrix &states) const {
    const auto n = static_cast<Eigen::Index>(n_);
    if (states.rows() != static_cast<Eigen::Index>(len_ + 1) || states.cols() != n) {
        throw std::invalid_argument("decision_from_states: shape mismatch");
    }
    Vector z(nz_);
    z.head(n) = states.row(0).transpose();
    for (std::size_t i = 0; i < len_; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        z.segment(n * (r + 1), n) =
            states.row(r + 1).transpose() - model_.transition(states.row(r).transpose(), window_.inputs[i]);
    }
    return z;
}

StageWeights MheProblem::weights_from(const std::vector<ModelPoint> &points, const std::vector<Matrix> *sens,
                                      std::vector<std::vector<Matrix>> *dsx,
                                      std::vector<std::vector<Matrix>> *dsy) const {
    const auto n = static_cast<Eigen::Index>(n_);
    const auto p = static_cast<Eigen::Index>(p_);
    StageWeights out;
    out.x_capped.assign(len_, 0);
    out.y_capped.assign(len_, 0);
    const bool derivs = sens != nullptr;
    if (derivs) {
        dsx->assign(len_, std::vector<Matrix>(static_cast<std::size_t>(nz_), Matrix::Zero(n, n)));
        dsy->assign(len_, std::vector<Matrix>(static_cast<std::size_t>(nz_), Matrix::Zero(p, p)));
    }

    if (config_.cost_mode == CostMode::kConstant) {
        out.sigma_x.assign(len_, config_.stage_sigma_x());
        out.sigma_y.assign(len_, config_.stage_sigma_y());
        return out;
    }

    if (config_.cost_mode == CostMode::kOneStep) {
        for (std::size_t i = 0; i < len_; ++i) {
            Matrix sx = config_.noise.sigma_w;
            sx.diagonal() += points[i].var_x;
            Matrix sy = config_.noise.sigma_v;
            sy.diagonal() += points[i].var_y;
            out.sigma_x.push_back(sx);
            out.sigma_y.push_back(sy);
            if (derivs) {
                const Matrix gx = points[i].var_x_grad * (*sens)[i];  // n x nz
                const Matrix gy = points[i].var_y_grad * (*sens)[i];  // p x nz
                for (Eigen::Index k = 0; k < nz_; ++k) {
                    (*dsx)[i][static_cast<std::size_t>(k)].diagonal() = gx.col(k);
                    (*dsy)[i][static_cast<std::size_t>(k)].diagonal() = gy.col(k);
                }
            }
        }
        return out;
    }

    // Propagated: the recursion restarts from zero at the window start. The
    // in-cost comparison uses the Gershgorin bound.
    UncertaintyCaps caps = config_.caps;
    caps.rule = CapRule::kGershgorin;
    Matrix prev = Matrix::Zero(n, n);
    std::vector<Matrix> dprev(static_cast<std::size_t>(derivs ? nz_ : 0), Matrix::Zero(n, n));
    for (std::size_t i = 0; i < len_; ++i) {
        const auto &pt = points[i];
        bool xc = false, yc = false;
        const Matrix sx = propagate_x(prev, pt.var_x, pt.A, config_.noise, caps, &xc);
        const Matrix sy = propagate_y(prev, pt.var_y, pt.C, config_.noise, caps, &yc);
        out.sigma_x.push_back(sx);
        out.sigma_y.push_back(sy);
        out.x_capped[i] = xc;
        out.y_capped[i] = yc;
        if (derivs) {
            const Matrix &s = (*sens)[i];
            const Matrix gx = pt.var_x_grad * s;
            const Matrix gy = pt.var_y_grad * s;
            std::vector<Matrix> next(static_cast<std::size_t>(nz_));
            for (Eigen::Index k = 0; k < nz_; ++k) {
                const auto kk = static_cast<std::size_t>(k);
                const Vector sk = s.col(k);
                if (!xc) {
                    const Matrix da = directional_jacobian(pt.f_hessians, sk);
                    Matrix d = pt.A * dprev[kk] * pt.A.transpose();
                    const Matrix cross = da * prev * pt.A.transpose();
                    d += cross + cross.transpose();
                    d.diagonal() += gx.col(k);
                    (*dsx)[i][kk] = d;
                    next[kk] = d;
                } else {
                    next[kk] = Matrix::Zero(n, n);
                }
                if (!yc) {
                    const Matrix dc = directional_jacobian(pt.h_hessians, sk);
                    Matrix d = pt.C * dprev[kk] * pt.C.transpose();
                    const Matrix cross = dc * prev * pt.C.transpose();
                    d += cross + cross.transpose();
                    d.diagonal() += gy.col(k);
                    (*dsy)[i][kk] = d;
                }
            }
            dprev = std::move(next);
        }
        prev = sx;
    }
    return out;
}

CostEvaluation MheProblem::evaluate(const Vector &z, GradientMode mode, const StageWeights *frozen) const {
    if (z.size() != nz_) throw std::invalid_argument("MheProblem: decision vector size");
    const auto n = static_cast<Eigen::Index>(n_);
    const auto p = static_cast<Eigen::Index>(p_);
    const bool weights_vary = frozen == nullptr && config_.cost_mode != CostMode::kConstant;
    const bool full = mode == GradientMode::kFull && weights_vary;
    const bool need_first = mode != GradientMode::kNone ||
                            (weights_vary && config_.cost_mode == CostMode::kPropagated);
    EvalOrder order = EvalOrder::kValue;
    if (need_first || weights_vary) order = EvalOrder::kFirst;
    if (full) order = EvalOrder::kSecond;

    CostEvaluation ev;
    ev.states.resize(static_cast<Eigen::Index>(len_ + 1), n);
    ev.output_noise.resize(static_cast<Eigen::Index>(len_), p);
    std::vector<ModelPoint> points;
    points.reserve(len_);
    Vector x = z.head(n);
    ev.states.row(0) = x.transpose();
    const bool sensitivities = mode != GradientMode::kNone;
    if (sensitivities) {
        ev.state_sensitivity.push_back(Matrix::Zero(n, nz_));
        ev.state_sensitivity.back().leftCols(n).setIdentity();
    }
    for (std::size_t i = 0; i < len_; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        points.push_back(model_.evaluate(x, window_.inputs[i], order));
        const auto &pt = points.back();
        ev.output_noise.row(r) = (window_.outputs[i] - pt.h).transpose();
        x = pt.f + z.segment(n * (r + 1), n);
        ev.states.row(r + 1) = x.transpose();
        if (sensitivities) {
            const Matrix &s = ev.state_sensitivity.back();
            ev.output_sensitivity.push_back(-pt.C * s);
            Matrix next = pt.A * s;
            next.middleCols(n * (r + 1), n) += Matrix::Identity(n, n);
            ev.state_sensitivity.push_back(std::move(next));
        }
    }
    if (!ev.states.allFinite() || !ev.output_noise.allFinite()) {
        throw NumericalError("MheProblem: non-finite trajectory");
    }

    std::vector<std::vector<Matrix>> dsx, dsy;
    if (frozen) {
        if (frozen->sigma_x.size() != len_) throw std::invalid_argument("MheProblem: frozen weights length");
        ev.weights = *frozen;
    } else {
        ev.weights = weights_from(points, full ? &ev.state_sensitivity : nullptr, &dsx, &dsy);
    }

    const Eigen::Index nr = n + static_cast<Eigen::Index>(len_) * (n + p);
    ev.residuals.resize(nr);
    if (sensitivities) ev.residual_jacobian = Matrix::Zero(nr, nz_);

    const double eta = config_.discount;
    const auto len = static_cast<int>(len_);
    {
        const double c = 2.0 * std::pow(eta, len);
        const double sc = std::sqrt(c);
        const auto tri = prior_factor_.triangularView<Eigen::Lower>();
        ev.residuals.head(n) = sc * tri.solve(Vector(z.head(n) - window_.prior));
        ev.prior_term = ev.residuals.head(n).squaredNorm();
        if (sensitivities) ev.residual_jacobian.topLeftCorner(n, n) = sc * tri.solve(Matrix::Identity(n, n));
    }
    if (full) ev.gradient = Vector::Zero(nz_);
    Eigen::Index row = n;
    for (std::size_t i = 0; i < len_; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double c = 2.0 * std::pow(eta, len - 1 - static_cast<int>(i));
        const double sc = std::sqrt(c);
        const Vector w = z.segment(n * (r + 1), n);
        const Vector v = ev.output_noise.row(r).transpose();
        Eigen::LLT<Matrix> lx(ev.weights.sigma_x[i]);
        Eigen::LLT<Matrix> ly(ev.weights.sigma_y[i]);
        if (lx.info() != Eigen::Success || ly.info() != Eigen::Success) {
            throw NumericalError("MheProblem: stage weight not PD");
        }
        const Matrix lxm = lx.matrixL();
        const Matrix lym = ly.matrixL();
        const auto tx = lxm.triangularView<Eigen::Lower>();
        const auto ty = lym.triangularView<Eigen::Lower>();
        ev.residuals.segment(row, n) = sc * tx.solve(w);
        ev.residuals.segment(row + n, p) = sc * ty.solve(v);
        if (sensitivities) {
            ev.residual_jacobian.block(row, n * (r + 1), n, n) = sc * tx.solve(Matrix::Identity(n, n));
            ev.residual_jacobian.block(row + n, 0, p, nz_) = sc * ty.solve(ev.output_sensitivity[i]);
        }
        if (full) {
            // d/dz of c a^T inv(S) a through S alone: -c b^T dS b, b = inv(S) a.
            const Vector bx = lx.solve(w);
            const Vector by = ly.solve(v);
            for (Eigen::Index k = 0; k < nz_; ++k) {
                const auto kk = static_cast<std::size_t>(k);
                ev.gradient[k] -= c * (bx.dot(dsx[i][kk] * bx) + by.dot(dsy[i][kk] * by));
            }
        }
        row += n + p;
    }
    ev.value = ev.residuals.squaredNorm();
    if (!std::isfinite(ev.value)) throw NumericalError("MheProblem: non-finite cost");
    if (sensitivities) {
        const Vector g = 2.0 * ev.residual_jacobian.transpose() * ev.residuals;
        if (full) ev.gradient += g;
        else ev.gradient = g;
    }
    return ev;
}

double MheProblem::value(const Vector &z, const StageWeights *frozen) const {
    return evaluate(z, GradientMode::kNone, frozen).value;
}

}  // namespace gpmhe

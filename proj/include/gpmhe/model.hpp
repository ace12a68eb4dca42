// State-space model interface shared by the learned GP model and the true
// benchmark models:
//   x(t+1) = f(x, u) + w,   y(t) = h(x, u) + v.
#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "gpmhe/types.hpp"

namespace gpmhe {

enum class EvalOrder {
    kValue,   // f, h
    kFirst,   // + state Jacobians and one-step variances
    kSecond,  // + state Hessians of f, h and state gradients of the variances
};

/// Everything the estimators need at one point d = (x, u). Derivatives are
/// w.r.t. x only; the input columns never enter the estimators.
struct ModelPoint {
    Vector f;        // n
    Vector h;        // p
    Matrix A;        // n x n, df/dx
    Matrix C;        // p x n, dh/dx
    Vector var_x;    // n, one-step variances of f (zero for exact models)
    Vector var_y;    // p
    std::vector<Matrix> f_hessians;  // n entries, each n x n
    std::vector<Matrix> h_hessians;  // p entries
    Matrix var_x_grad;  // n x n, row i = d var_x[i] / dx
    Matrix var_y_grad;  // p x n
};

class DynamicsModel {
public:
    virtual ~DynamicsModel() = default;

    virtual std::size_t state_dim() const = 0;
    virtual std::size_t input_dim() const = 0;
    virtual std::size_t output_dim() const = 0;

    virtual ModelPoint evaluate(const Vector &x, const Vector &u, EvalOrder order) const = 0;

    Vector transition(const Vector &x, const Vector &u) const {
        return evaluate(x, u, EvalOrder::kValue).f;
    }
    Vector output(const Vector &x, const Vector &u) const {
        return evaluate(x, u, EvalOrder::kValue).h;
    }
};

/// Exact model built from callbacks. Jacobians fall back to central
/// differences when not supplied; Hessians are always central differences of
/// the Jacobians. Variances are identically zero.
class CallbackModel final : public DynamicsModel {
public:
    using Map = std::function<Vector(const Vector &, const Vector &)>;
    using JacobianMap = std::function<Matrix(const Vector &, const Vector &)>;

    CallbackModel(std::size_t n, std::size_t m, std::size_t p, Map f, Map h,
                  JacobianMap df = {}, JacobianMap dh = {});

    std::size_t state_dim() const override { return n_; }
    std::size_t input_dim() const override { return m_; }
    std::size_t output_dim() const override { return p_; }
    ModelPoint evaluate(const Vector &x, const Vector &u, EvalOrder order) const override;

    const Map &f() const { return f_; }
    const Map &h() const { return h_; }

private:
    Matrix jacobian(const Map &map, const JacobianMap &analytic, const Vector &x,
                    const Vector &u, std::size_t rows) const;

    std::size_t n_, m_, p_;
    Map f_, h_;
    JacobianMap df_, dh_;
};

}  // namespace gpmhe

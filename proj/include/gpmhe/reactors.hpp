// Euler-discretized batch reactor benchmarks. Both are autonomous (m = 0).
#pragma once

#include <memory>
#include <string>

#include "gpmhe/mhe.hpp"

namespace gpmhe {

namespace reactor1 {
inline constexpr double kT = 0.1;
inline constexpr double kK1 = 0.16;
inline constexpr double kK2 = 0.0064;

/// 2A -> B; y = x1 + x2.
Vector transition(const Vector &x);
Vector output(const Vector &x);
Matrix jacobian(const Vector &x);
Matrix output_jacobian(const Vector &x);
}  // namespace reactor1

namespace reactor2 {
inline constexpr double kT = 0.25;
inline constexpr double kK1 = 0.5;
inline constexpr double kKm1 = 0.05;
inline constexpr double kK2 = 0.2;
inline constexpr double kKm2 = 0.02;
inline constexpr double kRc = 32.84;

/// A <-> B + C, 2B <-> C; y = Rc (x1 + x2 + x3).
Vector transition(const Vector &x);
Vector output(const Vector &x);
Matrix jacobian(const Vector &x);
Matrix output_jacobian(const Vector &x);
}  // namespace reactor2

struct TruthModel {
    std::string name;
    std::shared_ptr<const CallbackModel> model;
    Box state_box;
    NoiseConfig noise;
};

TruthModel make_reactor1();
TruthModel make_reactor2();
/// "reactor1" or "reactor2".
TruthModel make_truth_model(const std::string &name);

}  // namespace gpmhe

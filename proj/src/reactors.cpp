#include "gpmhe/reactors.hpp"

namespace gpmhe {

namespace reactor1 {

Vector transition(const Vector &x) {
    if (x.size() != 2) throw std::invalid_argument("reactor1: state must have 2 entries");
    Vector out(2);
    out[0] = x[0] + kT * (-2.0 * kK1 * x[0] * x[0] + 2.0 * kK2 * x[1]);
    out[1] = x[1] + kT * (kK1 * x[0] * x[0] - kK2 * x[1]);
    return out;
}

Vector output(const Vector &x) {
    if (x.size() != 2) throw std::invalid_argument("reactor1: state must have 2 entries");
    return Vector::Constant(1, x[0] + x[1]);
}

Matrix jacobian(const Vector &x) {
    Matrix a(2, 2);
    a << 1.0 - 4.0 * kT * kK1 * x[0], 2.0 * kT * kK2,
         2.0 * kT * kK1 * x[0], 1.0 - kT * kK2;
    return a;
}

Matrix output_jacobian(const Vector &) { return Matrix::Ones(1, 2); }

}  // namespace reactor1

namespace reactor2 {

Vector transition(const Vector &x) {
    if (x.size() != 3) throw std::invalid_argument("reactor2: state must have 3 entries");
    const double r1 = kK1 * x[0] - kKm1 * x[1] * x[2];
    const double r2 = kK2 * x[1] * x[1] - kKm2 * x[2];
    Vector out(3);
    out[0] = x[0] + kT * (-r1);
    out[1] = x[1] + kT * (r1 - 2.0 * r2);
    out[2] = x[2] + kT * (r1 + r2);
    return out;
}

Vector output(const Vector &x) {
    if (x.size() != 3) throw std::invalid_argument("reactor2: state must have 3 entries");
    return Vector::Constant(1, kRc * x.sum());
}

Matrix jacobian(const Vector &x) {
    // Rows: d r1/dx and d r2/dx combined per state equation.
    Vector dr1(3), dr2(3);
    dr1 << kK1, -kKm1 * x[2], -kKm1 * x[1];
    dr2 << 0.0, 2.0 * kK2 * x[1], -kKm2;
    Matrix a = Matrix::Identity(3, 3);
    a.row(0) += kT * (-dr1).transpose();
    a.row(1) += kT * (dr1 - 2.0 * dr2).transpose();
    a.row(2) += kT * (dr1 + dr2).transpose();
    return a;
}

Matrix output_jacobian(const Vector &) { return Matrix::Constant(1, 3, kRc); }

}  // namespace reactor2

TruthModel make_reactor1() {
    TruthModel tm;
    tm.name = "reactor1";
    tm.model = std::make_shared<const CallbackModel>(
        2, 0, 1, [](const Vector &x, const Vector &) { return reactor1::transition(x); },
        [](const Vector &x, const Vector &) { return reactor1::output(x); },
        [](const Vector &x, const Vector &) { return reactor1::jacobian(x); },
        [](const Vector &x, const Vector &) { return reactor1::output_jacobian(x); });
    tm.state_box = {Vector::Constant(2, 0.1), Vector::Constant(2, 4.5)};
    tm.noise = {1e-5 * Matrix::Identity(2, 2), 1e-3 * Matrix::Identity(1, 1)};
    return tm;
}

TruthModel make_reactor2() {
    TruthModel tm;
    tm.name = "reactor2";
    tm.model = std::make_shared<const CallbackModel>(
        3, 0, 1, [](const Vector &x, const Vector &) { return reactor2::transition(x); },
        [](const Vector &x, const Vector &) { return reactor2::output(x); },
        [](const Vector &x, const Vector &) { return reactor2::jacobian(x); },
        [](const Vector &x, const Vector &) { return reactor2::output_jacobian(x); });
    tm.state_box = {Vector::Zero(3), Vector::Constant(3, 5.0)};
    tm.noise = {1e-6 * Matrix::Identity(3, 3), 0.0625 * Matrix::Identity(1, 1)};
    return tm;
}

TruthModel make_truth_model(const std::string &name) {
    if (name == "reactor1") return make_reactor1();
    if (name == "reactor2") return make_reactor2();
    throw std::invalid_argument("unknown system '" + name + "'");
}

}  // namespace gpmhe

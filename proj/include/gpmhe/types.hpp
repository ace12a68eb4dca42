// Common numeric types and error classes.
#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace gpmhe {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when a factorization or solve fails beyond the allowed regularization.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string &what) : std::runtime_error(what) {}
};

inline Matrix symmetrized(const Matrix &m) { return 0.5 * (m + m.transpose()); }

}  // namespace gpmhe

#include "gpmhe/simd/se_kernel.hpp"

#include <cmath>

namespace gpmhe::simd::detail {

void se_cross_covariance_scalar(const double *query, std::size_t dim, const double *inputs,
                                std::size_t n, const double *inv_sq_lengthscales,
                                double signal_variance, double *out) {
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            const double diff = query[d] - inputs[d * n + i];
            acc += diff * diff * inv_sq_lengthscales[d];
        }
        out[i] = signal_variance * std::exp(-0.5 * acc);
    }
}

void vexp_scalar(const double *in, std::size_t n, double *out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(in[i]);
}

}  // namespace gpmhe::simd::detail

// Squared-exponential cross-covariance kernels.
//
// The hot loop of every GP evaluation is the row k(d*, D) = [k(d*, d_1) ...
// k(d*, d_N)]. Training inputs are stored structure-of-arrays (one contiguous
// column of N values per input dimension, i.e. an Eigen column-major N x D
// matrix), which lets the vector backends stream each dimension.
//
// Backends:
//   kScalar - reference implementation, std::exp.
//   kAvx2   - 4-wide AVX2/FMA distance accumulation + polynomial exp.
// All backends agree to a few ulps; tests/test_simd_kernels.cpp pins that.
#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace gpmhe::simd {

enum class Backend { kScalar, kAvx2 };

std::string_view backend_name(Backend backend);

/// True when the backend was compiled in and the running CPU supports it.
bool backend_available(Backend backend);

/// Best available backend for this CPU (honours GPMHE_SIMD=scalar).
Backend detect_backend();

/// Backend used by the GP layer. Defaults to detect_backend() on first use.
Backend active_backend();
void set_active_backend(Backend backend);

/// out[i] = signal_variance * exp(-0.5 * sum_d (query[d] - inputs[d*n + i])^2 * inv_sq_lengthscales[d])
///
/// `inputs` holds n points in structure-of-arrays layout (dimension-major),
/// so inputs.size() == query.size() * n and out.size() == n.
void se_cross_covariance(Backend backend, std::span<const double> query,
                         std::span<const double> inputs, std::size_t n,
                         std::span<const double> inv_sq_lengthscales, double signal_variance,
                         std::span<double> out);

inline void se_cross_covariance(std::span<const double> query, std::span<const double> inputs,
                                std::size_t n, std::span<const double> inv_sq_lengthscales,
                                double signal_variance, std::span<double> out) {
    se_cross_covariance(active_backend(), query, inputs, n, inv_sq_lengthscales, signal_variance,
                        out);
}

/// Element-wise exp, exposed for accuracy tests of the vector polynomial.
void vexp(Backend backend, std::span<const double> in, std::span<double> out);

namespace detail {
void se_cross_covariance_scalar(const double *query, std::size_t dim, const double *inputs,
                                std::size_t n, const double *inv_sq_lengthscales,
                                double signal_variance, double *out);
void vexp_scalar(const double *in, std::size_t n, double *out);
#if defined(GPMHE_HAVE_AVX2_TU)
void se_cross_covariance_avx2(const double *query, std::size_t dim, const double *inputs,
                              std::size_t n, const double *inv_sq_lengthscales,
                              double signal_variance, double *out);
void vexp_avx2(const double *in, std::size_t n, double *out);
#endif
}  // namespace detail

}  // namespace gpmhe::simd

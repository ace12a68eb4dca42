// AVX2/FMA backend. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after a runtime CPU check (see se_kernel_dispatch.cpp).
#include "gpmhe/simd/se_kernel.hpp"

#if defined(GPMHE_HAVE_AVX2_TU)

#include <immintrin.h>

#include <cmath>

namespace gpmhe::simd::detail {
namespace {

// exp(x) = 2^k * exp(r), r = x - k ln2, |r| <= ln2/2; exp(r) by a degree-13
// Taylor polynomial (truncation ~4e-18 relative). Inputs below the normal
// range flush to zero; the SE kernel only ever feeds x <= 0.
inline __m256d exp_pd(__m256d x) {
    const __m256d upper = _mm256_set1_pd(709.0);
    const __m256d lower = _mm256_set1_pd(-708.39);
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
    const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
    const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);

    const __m256d underflow = _mm256_cmp_pd(x, lower, _CMP_LT_OQ);
    x = _mm256_min_pd(_mm256_max_pd(x, lower), upper);

    const __m256d k =
        _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(k, ln2_hi, x);
    r = _mm256_fnmadd_pd(k, ln2_lo, r);

    __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);  // 1/13!
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

    // 2^k: place (k + 1023) in the low mantissa bits via the 2^52 trick, then
    // shift it into the exponent field.
    const __m256d biased = _mm256_add_pd(k, _mm256_set1_pd(1023.0 + 4503599627370496.0));
    const __m256i bits = _mm256_slli_epi64(_mm256_castpd_si256(biased), 52);
    const __m256d scale = _mm256_castsi256_pd(bits);

    const __m256d result = _mm256_mul_pd(p, scale);
    return _mm256_andnot_pd(underflow, result);
}

}  // namespace

void se_cross_covariance_avx2(const double *query, std::size_t dim, const double *inputs,
                              std::size_t n, const double *inv_sq_lengthscales,
                              double signal_variance, double *out) {
    const __m256d neg_half = _mm256_set1_pd(-0.5);
    const __m256d sf2 = _mm256_set1_pd(signal_variance);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d acc = _mm256_setzero_pd();
        for (std::size_t d = 0; d < dim; ++d) {
            const __m256d diff =
                _mm256_sub_pd(_mm256_set1_pd(query[d]), _mm256_loadu_pd(inputs + d * n + i));
            acc = _mm256_fmadd_pd(_mm256_mul_pd(diff, diff),
                                  _mm256_set1_pd(inv_sq_lengthscales[d]), acc);
        }
        _mm256_storeu_pd(out + i, _mm256_mul_pd(sf2, exp_pd(_mm256_mul_pd(neg_half, acc))));
    }
    for (; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            const double diff = query[d] - inputs[d * n + i];
            acc = std::fma(diff * diff, inv_sq_lengthscales[d], acc);
        }
        out[i] = signal_variance * std::exp(-0.5 * acc);
    }
}

void vexp_avx2(const double *in, std::size_t n, double *out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp_pd(_mm256_loadu_pd(in + i)));
    for (; i < n; ++i) out[i] = std::exp(in[i]);
}

}  // namespace gpmhe::simd::detail

#endif

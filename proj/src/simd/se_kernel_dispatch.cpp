#include "gpmhe/simd/se_kernel.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace gpmhe::simd {
namespace {

constexpr int kUnset = -1;
std::atomic<int> g_active{kUnset};

bool cpu_has_avx2() {
#if defined(GPMHE_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

void check_sizes(std::span<const double> query, std::span<const double> inputs, std::size_t n,
                 std::span<const double> inv_sq_lengthscales, std::span<double> out) {
    if (inv_sq_lengthscales.size() != query.size() || inputs.size() != query.size() * n ||
        out.size() != n) {
        throw std::invalid_argument("se_cross_covariance: inconsistent buffer sizes");
    }
}

}  // namespace

std::string_view backend_name(Backend backend) {
    switch (backend) {
        case Backend::kScalar: return "scalar";
        case Backend::kAvx2: return "avx2";
    }
    return "unknown";
}

bool backend_available(Backend backend) {
    switch (backend) {
        case Backend::kScalar: return true;
        case Backend::kAvx2: {
            static const bool has = cpu_has_avx2();
            return has;
        }
    }
    return false;
}

Backend detect_backend() {
    if (const char *env = std::getenv("GPMHE_SIMD"); env && std::string(env) == "scalar") {
        return Backend::kScalar;
    }
    return backend_available(Backend::kAvx2) ? Backend::kAvx2 : Backend::kScalar;
}

Backend active_backend() {
    int value = g_active.load(std::memory_order_relaxed);
    if (value == kUnset) {
        value = static_cast<int>(detect_backend());
        g_active.store(value, std::memory_order_relaxed);
    }
    return static_cast<Backend>(value);
}

void set_active_backend(Backend backend) {
    if (!backend_available(backend)) {
        throw std::invalid_argument("SIMD backend not available: " +
                                    std::string(backend_name(backend)));
    }
    g_active.store(static_cast<int>(backend), std::memory_order_relaxed);
}

void se_cross_covariance(Backend backend, std::span<const double> query,
                         std::span<const double> inputs, std::size_t n,
                         std::span<const double> inv_sq_lengthscales, double signal_variance,
                         std::span<double> out) {
    check_sizes(query, inputs, n, inv_sq_lengthscales, out);
    switch (backend) {
#if defined(GPMHE_HAVE_AVX2_TU)
        case Backend::kAvx2:
            if (backend_available(Backend::kAvx2)) {
                detail::se_cross_covariance_avx2(query.data(), query.size(), inputs.data(), n,
                                                 inv_sq_lengthscales.data(), signal_variance,
                                                 out.data());
                return;
            }
            break;
#endif
        default: break;
    }
    detail::se_cross_covariance_scalar(query.data(), query.size(), inputs.data(), n,
                                       inv_sq_lengthscales.data(), signal_variance, out.data());
}

void vexp(Backend backend, std::span<const double> in, std::span<double> out) {
    if (in.size() != out.size()) throw std::invalid_argument("vexp: size mismatch");
#if defined(GPMHE_HAVE_AVX2_TU)
    if (backend == Backend::kAvx2 && backend_available(Backend::kAvx2)) {
        detail::vexp_avx2(in.data(), in.size(), out.data());
        return;
    }
#endif
    detail::vexp_scalar(in.data(), in.size(), out.data());
}

}  // namespace gpmhe::simd

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gpmhe/simd/se_kernel.hpp"

using namespace gpmhe::simd;

namespace {

struct Instance {
    std::vector<double> query, inputs, inv_sq;
    std::size_t n;
    double sf2;
};

Instance random_instance(std::mt19937_64 &rng, std::size_t dim, std::size_t n) {
    std::normal_distribution<double> normal(0.0, 2.0);
    std::uniform_real_distribution<double> ls(0.2, 5.0);
    Instance in{{}, {}, {}, n, 1.7};
    for (std::size_t d = 0; d < dim; ++d) {
        in.query.push_back(normal(rng));
        const double l = ls(rng);
        in.inv_sq.push_back(1.0 / (l * l));
    }
    for (std::size_t i = 0; i < dim * n; ++i) in.inputs.push_back(normal(rng));
    return in;
}

std::vector<double> run(Backend b, const Instance &in) {
    std::vector<double> out(in.n);
    se_cross_covariance(b, in.query, in.inputs, in.n, in.inv_sq, in.sf2, out);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Scalar reference
// ---------------------------------------------------------------------------

TEST(SeKernelScalar, MatchesClosedForm) {
    // Two points in 2-D, lengthscales (1, 2): distances (0,0) and (2,2).
    const std::vector<double> query{0.0, 0.0};
    const std::vector<double> inputs{0.0, 2.0, 0.0, 2.0};  // dimension-major
    const std::vector<double> inv_sq{1.0, 0.25};
    std::vector<double> out(2);
    se_cross_covariance(Backend::kScalar, query, inputs, 2, inv_sq, 1.0, out);
    EXPECT_DOUBLE_EQ(out[0], 1.0);
    EXPECT_NEAR(out[1], std::exp(-2.5), 1e-16);
}

TEST(SeKernelScalar, EmptyInputIsNoop) {
    std::vector<double> out;
    const std::vector<double> query{1.0};
    EXPECT_NO_THROW(se_cross_covariance(Backend::kScalar, query, {}, 0, query, 1.0, out));
}

TEST(SeKernelScalar, RejectsMismatchedSpans) {
    const std::vector<double> query{0.0, 0.0};
    const std::vector<double> inputs{0.0, 1.0, 2.0};
    const std::vector<double> inv_sq{1.0, 1.0};
    std::vector<double> out(2);
    EXPECT_THROW(se_cross_covariance(Backend::kScalar, query, inputs, 2, inv_sq, 1.0, out), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// AVX2 against the scalar reference
// ---------------------------------------------------------------------------

TEST(SeKernelAvx2, AgreesWithScalar) {
    if (!backend_available(Backend::kAvx2)) GTEST_SKIP() << "AVX2 not available";
    std::mt19937_64 rng(11);
    // Sizes straddle the 4-wide blocks and the remainder loop.
    for (std::size_t n : {1u, 3u, 4u, 5u, 17u, 90u, 257u}) {
        for (std::size_t dim : {1u, 2u, 3u, 6u}) {
            const auto in = random_instance(rng, dim, n);
            const auto ref = run(Backend::kScalar, in);
            const auto vec = run(Backend::kAvx2, in);
            // Rounding in the squared distance is amplified by the exponent.
            for (std::size_t i = 0; i < n; ++i) {
                const double tol = 1e-15 * (1.0 + std::abs(std::log(ref[i]))) * ref[i];
                EXPECT_NEAR(vec[i], ref[i], tol) << "n=" << n << " dim=" << dim;
            }
        }
    }
}

TEST(SeKernelAvx2, ExpMatchesStdExp) {
    if (!backend_available(Backend::kAvx2)) GTEST_SKIP() << "AVX2 not available";
    std::vector<double> in;
    for (double x = -745.0; x <= 0.0; x += 0.0137) in.push_back(x);
    in.push_back(-1e-300);
    in.push_back(0.0);
    std::vector<double> out(in.size());
    vexp(Backend::kAvx2, in, out);
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double ref = std::exp(in[i]);
        if (ref < 1e-300) {
            EXPECT_NEAR(out[i], ref, 1e-300) << in[i];
        } else {
            EXPECT_NEAR(out[i], ref, 3e-16 * ref) << in[i];
        }
    }
}

TEST(SeKernelAvx2, FarPointsUnderflowToZero) {
    if (!backend_available(Backend::kAvx2)) GTEST_SKIP() << "AVX2 not available";
    const std::vector<double> query{0.0};
    const std::vector<double> inputs{1e3, -1e3, 1e200, 0.0, 0.5};
    const std::vector<double> inv_sq{1.0};
    std::vector<double> out(5);
    se_cross_covariance(Backend::kAvx2, query, inputs, 5, inv_sq, 2.0, out);
    EXPECT_EQ(out[0], 0.0);
    EXPECT_EQ(out[1], 0.0);
    EXPECT_EQ(out[2], 0.0);
    EXPECT_DOUBLE_EQ(out[3], 2.0);
    EXPECT_NEAR(out[4], 2.0 * std::exp(-0.125), 1e-15);
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

TEST(SeKernelDispatch, ActiveBackendIsAvailable) {
    EXPECT_TRUE(backend_available(Backend::kScalar));
    EXPECT_TRUE(backend_available(active_backend()));
    const Backend saved = active_backend();
    set_active_backend(Backend::kScalar);
    EXPECT_EQ(active_backend(), Backend::kScalar);
    set_active_backend(saved);
    EXPECT_EQ(backend_name(Backend::kScalar), "scalar");
}

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>

namespace fxcast::detail {

/// exp(x) via cephes-style range reduction + rational approximation (~1 ulp).
/// Inlines and pipelines much better than the libm call inside softmax loops,
/// and is smooth enough for finite-difference gradient checks.
inline double fexp(double x) {
    constexpr double kLog2e = 1.4426950408889634073599;
    constexpr double kC1 = 6.93145751953125e-1;     // ln2 high part
    constexpr double kC2 = 1.42860682030941723212e-6; // ln2 low part
    if (x > 709.0) return std::numeric_limits<double>::infinity();
    if (x < -745.0) return 0.0;

    double n = std::floor(kLog2e * x + 0.5);
    const double r = (x - n * kC1) - n * kC2;
    const double rr = r * r;

    double p = 1.26177193074810590878e-4;
    p = p * rr + 3.02994407707441961300e-2;
    p = p * rr + 9.99999999999999999910e-1;
    p *= r;

    double q = 3.00198505138664455042e-6;
    q = q * rr + 2.52448340349684104192e-3;
    q = q * rr + 2.27265548208155028766e-1;
    q = q * rr + 2.00000000000000000005e0;

    const double y = 1.0 + 2.0 * p / (q - p);

    // scale by 2^n through the exponent bits
    const auto biased = static_cast<std::int64_t>(n) + 1023;
    std::uint64_t bits = static_cast<std::uint64_t>(biased) << 52;
    double scale;
    std::memcpy(&scale, &bits, sizeof scale);
    return y * scale;
}

// Accumulating GEMM kernels, row-major. Small matrices dominate here, so the
// goal is clean vectorizable inner loops, not blocking.

/// c[m×n] += a[m×k] · b[k×n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

/// c[m×k] += a[m×n] · b[k×n]ᵀ
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                    std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * n;
        double* ci = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* bp = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += ai[j] * bp[j];
            ci[p] += acc;
        }
    }
}

/// c[k×n] += a[m×k]ᵀ · b[m×n]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            double* cp = c + p * n;
            for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
        }
    }
}

} // namespace fxcast::detail

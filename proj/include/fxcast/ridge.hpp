#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fxcast/errors.hpp"
#include "fxcast/tensor.hpp"

namespace fxcast {

/// Ridge regression solved in closed form from the normal equations
/// (XᵀX + λI)w = Xᵀy with an unpenalized intercept (the intercept row/column
/// of λI is zero). weights has F+1 entries, last = intercept (0 when the
/// intercept is disabled).
struct RidgeModel {
    std::vector<double> weights;
    double lambda = 0.0;
    std::vector<std::string> feature_names;

    double predict_row(const double* x, std::size_t f) const {
        double acc = weights.back(); // intercept slot
        for (std::size_t j = 0; j < f; ++j) acc += weights[j] * x[j];
        return acc;
    }
};

namespace detail {

/// In-place Cholesky solve of G w = rhs for symmetric positive definite G.
/// Returns false when a pivot collapses (singular / indefinite system).
inline bool cholesky_solve(std::vector<double>& g, std::vector<double>& rhs, std::size_t n) {
    // decompose G = L Lᵀ (lower triangle stored in g)
    for (std::size_t j = 0; j < n; ++j) {
        double diag = g[j * n + j];
        for (std::size_t k = 0; k < j; ++k) diag -= g[j * n + k] * g[j * n + k];
        if (!(diag > 0.0) || !std::isfinite(diag)) return false;
        const double root = std::sqrt(diag);
        g[j * n + j] = root;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = g[i * n + j];
            for (std::size_t k = 0; k < j; ++k) v -= g[i * n + k] * g[j * n + k];
            g[i * n + j] = v / root;
        }
    }
    // forward then backward substitution
    for (std::size_t i = 0; i < n; ++i) {
        double v = rhs[i];
        for (std::size_t k = 0; k < i; ++k) v -= g[i * n + k] * rhs[k];
        rhs[i] = v / g[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
        double v = rhs[i];
        for (std::size_t k = i + 1; k < n; ++k) v -= g[k * n + i] * rhs[k];
        rhs[i] = v / g[i * n + i];
    }
    return true;
}

} // namespace detail

/// Fit ridge coefficients. X is [n x f] row-major, y has n entries.
inline RidgeModel ridge_fit(const Tensor& X, const std::vector<double>& y, double lambda,
                            bool intercept = true,
                            std::vector<std::string> feature_names = {}) {
    if (X.rank() != 2) throw DimensionError("ridge_fit: X must be [n x f]");
    const std::size_t n = X.dim(0);
    const std::size_t f = X.dim(1);
    if (n < 1) throw ParameterError("ridge_fit: need at least one row");
    if (y.size() != n) {
        throw DimensionError("ridge_fit: y has " + std::to_string(y.size()) + " entries for " +
                             std::to_string(n) + " rows");
    }
    if (lambda < 0.0) throw ParameterError("ridge_fit: lambda must be >= 0");

    const std::size_t p = f + (intercept ? 1 : 0);
    const double* px = X.data();

    // G = AᵀA + λI (intercept unpenalized), rhs = Aᵀy, A = [X | 1]
    std::vector<double> g(p * p, 0.0), rhs(p, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const double* xr = px + r * f;
        for (std::size_t i = 0; i < f; ++i) {
            const double xi = xr[i];
            for (std::size_t j = i; j < f; ++j) g[i * p + j] += xi * xr[j];
            rhs[i] += xi * y[r];
        }
        if (intercept) {
            for (std::size_t i = 0; i < f; ++i) g[i * p + f] += xr[i];
            g[f * p + f] += 1.0;
            rhs[f] += y[r];
        }
    }
    for (std::size_t i = 0; i < f; ++i) g[i * p + i] += lambda;
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < i; ++j) g[i * p + j] = g[j * p + i];
    }

    std::vector<double> g_copy = g, rhs_copy = rhs;
    if (!detail::cholesky_solve(g, rhs, p)) {
        if (lambda == 0.0) {
            throw NumericalError(
                "ridge_fit: singular system at lambda = 0; use lambda > 0");
        }
        throw NumericalError("ridge_fit: factorization failed");
    }

    // residual check on the normal equations
    double max_res = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        double acc = -rhs_copy[i];
        for (std::size_t j = 0; j < p; ++j) acc += g_copy[i * p + j] * rhs[j];
        max_res = std::max(max_res, std::fabs(acc));
    }
    if (max_res > 1e-8) {
        throw NumericalError("ridge_fit: normal-equation residual " + std::to_string(max_res) +
                             " exceeds 1e-8 (ill-conditioned system)");
    }

    RidgeModel m;
    m.lambda = lambda;
    m.feature_names = std::move(feature_names);
    m.weights.assign(f + 1, 0.0);
    for (std::size_t i = 0; i < f; ++i) m.weights[i] = rhs[i];
    if (intercept) m.weights[f] = rhs[f];
    return m;
}

} // namespace fxcast

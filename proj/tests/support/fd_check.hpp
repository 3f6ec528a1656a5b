#pragma once

// Test-only gradient oracle: central finite differences over tensor
// coordinates. Independent of the tape — the callable must recompute the
// scalar objective from detached tensors so no recording happens.

#include <cmath>
#include <cstddef>
#include <functional>

#include "fxcast/tensor.hpp"

namespace fdtest {

inline double central_diff(double* slot, double h, const std::function<double()>& f) {
    const double orig = *slot;
    *slot = orig + h;
    const double fp = f();
    *slot = orig - h;
    const double fm = f();
    *slot = orig;
    return (fp - fm) / (2.0 * h);
}

struct FdWorst {
    double scaled_err = 0.0;
    std::size_t index = 0;
    double ad = 0.0;
    double fd = 0.0;
};

/// Worst scaled error between an autodiff gradient and central differences:
///   err_i = |ad_i - fd_i| / (max(|ad_i|, |fd_i|) + floor)
/// The floor turns the test into an absolute comparison where the true
/// gradient is ~0 (finite differences are pure roundoff noise there).
inline FdWorst max_scaled_err(const fxcast::Tensor& ad, fxcast::Tensor& param,
                              const std::function<double()>& f, double h = 1e-5,
                              double floor = 1e-3) {
    FdWorst worst;
    double* slots = param.mutable_data();
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double fd = central_diff(slots + i, h, f);
        const double av = ad[i];
        const double err = std::fabs(av - fd) / (std::max(std::fabs(av), std::fabs(fd)) + floor);
        if (err > worst.scaled_err) {
            worst.scaled_err = err;
            worst.index = i;
            worst.ad = av;
            worst.fd = fd;
        }
    }
    return worst;
}

} // namespace fdtest

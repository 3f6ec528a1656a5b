#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fxcast/errors.hpp"
#include "fxcast/tensor.hpp"

namespace fxcast {

/// Adam optimizer state for a fixed list of parameters. First and second
/// moment buffers mirror the parameter shapes; step counts completed updates.
struct AdamState {
    int step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static AdamState for_params(const std::vector<Tensor*>& params, double lr = 1e-3,
                                double beta1 = 0.9, double beta2 = 0.999,
                                double epsilon = 1e-8) {
        AdamState s;
        s.lr = lr;
        s.beta1 = beta1;
        s.beta2 = beta2;
        s.epsilon = epsilon;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const Tensor* p : params) {
            s.m.emplace_back(p->numel(), 0.0);
            s.v.emplace_back(p->numel(), 0.0);
        }
        return s;
    }
};

/// One bias-corrected Adam update, in place on the parameter tensors.
inline void adam_step(AdamState& state, const std::vector<Tensor*>& params,
                      const std::vector<Tensor>& grads) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw DimensionError("adam_step: parameter/gradient/state counts disagree");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, state.step);
    const double bc2 = 1.0 - std::pow(state.beta2, state.step);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        if (g.shape() != p.shape()) {
            throw DimensionError("adam_step: gradient shape " + shape_str(g.shape()) +
                                 " does not match parameter shape " + shape_str(p.shape()));
        }
        if (state.m[i].size() != p.numel()) {
            throw DimensionError("adam_step: state shape does not match parameter " +
                                 shape_str(p.shape()));
        }
        double* pw = p.mutable_data();
        const double* pg = g.data();
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        const std::size_t n = p.numel();
        for (std::size_t j = 0; j < n; ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * pg[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * pg[j] * pg[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            pw[j] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

} // namespace fxcast

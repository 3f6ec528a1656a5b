#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <unordered_map>
#include <vector>

#include "fxcast/math_detail.hpp"
#include "fxcast/tape.hpp"
#include "fxcast/tensor.hpp"

namespace fxcast {

// ---------------------------------------------------------------------------
// broadccasting machinery
// ---------------------------------------------------------------------------

namespace detail {

enum class BcKind { same, scalar_a, scalar_b, suffix_a, suffix_b, general };

inline bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    const std::size_t off = big.size() - small.size();
    for (std::size_t i = 0; i < small.size(); ++i) {
        if (small[i] != big[off + i]) return false;
    }
    return true;
}

struct BcPlan {
    Shape out;
    BcKind kind;
    // general-case element strides, right-aligned to out
    std::vector<std::size_t> astr, bstr;
};

inline BcPlan broadcast_plan(const Shape& a, const Shape& b, const char* opname) {
    BcPlan p;
    if (a == b) {
        p.out = a;
        p.kind = BcKind::same;
        return p;
    }
    if (shape_numel(a) == 1) {
        p.out = b;
        p.kind = BcKind::scalar_a;
        return p;
    }
    if (shape_numel(b) == 1) {
        p.out = a;
        p.kind = BcKind::scalar_b;
        return p;
    }
    if (is_suffix(b, a)) {
        p.out = a;
        p.kind = BcKind::suffix_b;
        return p;
    }
    if (is_suffix(a, b)) {
        p.out = b;
        p.kind = BcKind::suffix_a;
        return p;
    }
    // general numpy-style right-aligned broadcast
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    std::vector<std::size_t> adim(rank, 1), bdim(rank, 1);
    std::copy(a.begin(), a.end(), adim.begin() + (rank - a.size()));
    std::copy(b.begin(), b.end(), bdim.begin() + (rank - b.size()));
    for (std::size_t d = 0; d < rank; ++d) {
        if (adim[d] == bdim[d] || adim[d] == 1 || bdim[d] == 1) {
            out[d] = std::max(adim[d], bdim[d]);
        } else {
            throw DimensionError(std::string(opname) + ": incompatible shapes " + shape_str(a) +
                                 " and " + shape_str(b));
        }
    }
    auto strides_of = [&](const std::vector<std::size_t>& dim) {
        std::vector<std::size_t> s(rank, 0);
        std::size_t acc = 1;
        for (std::size_t d = rank; d-- > 0;) {
            s[d] = (dim[d] == 1) ? 0 : acc;
            acc *= dim[d];
        }
        return s;
    };
    p.out = std::move(out);
    p.kind = BcKind::general;
    p.astr = strides_of(adim);
    p.bstr = strides_of(bdim);
    return p;
}

/// Walk the broadcast output space calling f(out_flat, a_off, b_off).
template <class F>
void broadcast_walk(const Shape& out, const std::vector<std::size_t>& astr,
                    const std::vector<std::size_t>& bstr, F&& f) {
    const std::size_t rank = out.size();
    const std::size_t total = shape_numel(out);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t aoff = 0, boff = 0;
    for (std::size_t flat = 0; flat < total; ++flat) {
        f(flat, aoff, boff);
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            aoff += astr[d];
            boff += bstr[d];
            if (idx[d] < out[d]) break;
            aoff -= astr[d] * out[d];
            boff -= bstr[d] * out[d];
            idx[d] = 0;
        }
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// elementwise binary: add / sub / mul (numpy-style broadcasting)
// ---------------------------------------------------------------------------

namespace detail {

enum class BinKind { add, sub, mul };

inline Tensor binary_op(BinKind op, const Tensor& a, const Tensor& b, const char* name) {
    const BcPlan plan = broadcast_plan(a.shape(), b.shape(), name);
    Tensor out(plan.out);
    double* o = out.mutable_data();
    const double* pa = a.data();
    const double* pb = b.data();
    const std::size_t n = out.numel();

    auto apply = [op](double x, double y) {
        switch (op) {
            case BinKind::add: return x + y;
            case BinKind::sub: return x - y;
            default: return x * y;
        }
    };

    switch (plan.kind) {
        case BcKind::same:
            for (std::size_t i = 0; i < n; ++i) o[i] = apply(pa[i], pb[i]);
            break;
        case BcKind::scalar_a: {
            const double s = pa[0];
            for (std::size_t i = 0; i < n; ++i) o[i] = apply(s, pb[i]);
            break;
        }
        case BcKind::scalar_b: {
            const double s = pb[0];
            for (std::size_t i = 0; i < n; ++i) o[i] = apply(pa[i], s);
            break;
        }
        case BcKind::suffix_b: {
            const std::size_t inner = b.numel();
            for (std::size_t off = 0; off < n; off += inner)
                for (std::size_t i = 0; i < inner; ++i) o[off + i] = apply(pa[off + i], pb[i]);
            break;
        }
        case BcKind::suffix_a: {
            const std::size_t inner = a.numel();
            for (std::size_t off = 0; off < n; off += inner)
                for (std::size_t i = 0; i < inner; ++i) o[off + i] = apply(pa[i], pb[off + i]);
            break;
        }
        case BcKind::general:
            broadcast_walk(plan.out, plan.astr, plan.bstr, [&](std::size_t f, std::size_t ai,
                                                               std::size_t bi) {
                o[f] = apply(pa[ai], pb[bi]);
            });
            break;
    }

    Tape* tape = tape_of(a, b);
    if (tape) {
        const int ia = a.tape() == tape ? a.node() : -1;
        const int ib = b.tape() == tape ? b.node() : -1;
        Tensor ac = a, bc = b; // keep storage alive for backward
        const int id = tape->add_node(
            name, {ia, ib}, plan.out,
            [op, plan, ia, ib, ac, bc](Tape& tp, int self) {
                const auto& g = tp.grad_buffer(self);
                double* ga = ia >= 0 ? tp.grad_buffer(ia).data() : nullptr;
                double* gb = ib >= 0 ? tp.grad_buffer(ib).data() : nullptr;
                const double* pa2 = ac.data();
                const double* pb2 = bc.data();
                const std::size_t n2 = g.size();
                const double bsign = (op == BinKind::sub) ? -1.0 : 1.0;

                auto acc = [&](std::size_t f, std::size_t ai2, std::size_t bi2) {
                    if (op == BinKind::mul) {
                        if (ga) ga[ai2] += g[f] * pb2[bi2];
                        if (gb) gb[bi2] += g[f] * pa2[ai2];
                    } else {
                        if (ga) ga[ai2] += g[f];
                        if (gb) gb[bi2] += bsign * g[f];
                    }
                };

                switch (plan.kind) {
                    case BcKind::same:
                        for (std::size_t i = 0; i < n2; ++i) acc(i, i, i);
                        break;
                    case BcKind::scalar_a:
                        for (std::size_t i = 0; i < n2; ++i) acc(i, 0, i);
                        break;
                    case BcKind::scalar_b:
                        for (std::size_t i = 0; i < n2; ++i) acc(i, i, 0);
                        break;
                    case BcKind::suffix_b: {
                        const std::size_t inner = bc.numel();
                        for (std::size_t off = 0; off < n2; off += inner)
                            for (std::size_t i = 0; i < inner; ++i) acc(off + i, off + i, i);
                        break;
                    }
                    case BcKind::suffix_a: {
                        const std::size_t inner = ac.numel();
                        for (std::size_t off = 0; off < n2; off += inner)
                            for (std::size_t i = 0; i < inner; ++i) acc(off + i, i, off + i);
                        break;
                    }
                    case BcKind::general:
                        broadcast_walk(plan.out, plan.astr, plan.bstr, acc);
                        break;
                }
            });
        out.set_track(tape, id);
    }
    return out;
}

} // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_op(detail::BinKind::add, a, b, "add");
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_op(detail::BinKind::sub, a, b, "sub");
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_op(detail::BinKind::mul, a, b, "mul");
}

// ---------------------------------------------------------------------------
// elementwise unary
// ---------------------------------------------------------------------------

namespace detail {

/// dfdx receives (x_i, y_i) so ops can use whichever is cheaper.
template <class Fwd, class Dfdx>
Tensor unary_op(const Tensor& x, const char* name, Fwd fwd, Dfdx dfdx) {
    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.mutable_data();
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) po[i] = fwd(px[i]);

    if (Tape* tape = x.tape()) {
        Tensor xc = x, oc = out;
        const int ix = x.node();
        const int id = tape->add_node(name, {ix}, x.shape(), [ix, xc, oc, dfdx](Tape& tp, int self) {
            const auto& g = tp.grad_buffer(self);
            auto& gx = tp.grad_buffer(ix);
            const double* px2 = xc.data();
            const double* py2 = oc.data();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(px2[i], py2[i]);
        });
        out.set_track(tape, id);
    }
    return out;
}

} // namespace detail

inline Tensor relu(const Tensor& x) {
    return detail::unary_op(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor gelu(const Tensor& x) {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    return detail::unary_op(
        x, "gelu", [=](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
        [=](double v, double) {
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * detail::fexp(-0.5 * v * v);
            return cdf + v * pdf;
        });
}

inline Tensor tanh(const Tensor& x) {
    return detail::unary_op(
        x, "tanh", [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& x) {
    return detail::unary_op(
        x, "sigmoid", [](double v) { return 1.0 / (1.0 + detail::fexp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

/// |x| with subgradient 0 at x == 0.
inline Tensor abs_val(const Tensor& x) {
    return detail::unary_op(
        x, "abs", [](double v) { return std::fabs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline Tensor neg(const Tensor& x) {
    return detail::unary_op(
        x, "neg", [](double v) { return -v; }, [](double, double) { return -1.0; });
}

/// x * constant (the constant is not differentiated).
inline Tensor scale(const Tensor& x, double c) {
    return detail::unary_op(
        x, "scale", [c](double v) { return c * v; }, [c](double, double) { return c; });
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

/// Matrix product with three accepted layouts:
///   [m×k] · [k×n]                      -> [m×n]
///   [d0×...×m×k] · [k×n]               -> [d0×...×m×n]   (shared right factor)
///   [d0×...×m×k] · [d0×...×k×n]        -> [d0×...×m×n]   (batched, equal leading dims)
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2) {
        throw DimensionError("matmul: operands must have rank >= 2, got " + shape_str(sa) +
                             " and " + shape_str(sb));
    }
    const std::size_t m = sa[sa.size() - 2];
    const std::size_t k = sa[sa.size() - 1];
    const std::size_t kb = sb[sb.size() - 2];
    const std::size_t n = sb[sb.size() - 1];
    if (k != kb) {
        throw DimensionError("matmul: inner dimensions disagree: " + shape_str(sa) + " vs " +
                             shape_str(sb));
    }

    const bool shared_b = sb.size() == 2;
    std::size_t batch = 1;
    if (!shared_b) {
        if (sa.size() != sb.size() ||
            !std::equal(sa.begin(), sa.end() - 2, sb.begin())) {
            throw DimensionError("matmul: batch dimensions disagree: " + shape_str(sa) + " vs " +
                                 shape_str(sb));
        }
    }
    for (std::size_t d = 0; d + 2 < sa.size(); ++d) batch *= sa[d];

    Shape so(sa.begin(), sa.end() - 2);
    so.push_back(m);
    so.push_back(n);
    Tensor out(so);

    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.mutable_data();
    for (std::size_t t = 0; t < batch; ++t) {
        detail::gemm_nn(pa + t * m * k, shared_b ? pb : pb + t * k * n, po + t * m * n, m, k, n);
    }

    Tape* tape = tape_of(a, b);
    if (tape) {
        const int ia = a.tape() == tape ? a.node() : -1;
        const int ib = b.tape() == tape ? b.node() : -1;
        Tensor ac = a, bc = b;
        const int id = tape->add_node(
            "matmul", {ia, ib}, so,
            [ia, ib, ac, bc, m, k, n, batch, shared_b](Tape& tp, int self) {
                const auto& g = tp.grad_buffer(self);
                const double* pg = g.data();
                const double* pa2 = ac.data();
                const double* pb2 = bc.data();
                if (ia >= 0) {
                    double* ga = tp.grad_buffer(ia).data();
                    for (std::size_t t = 0; t < batch; ++t) {
                        detail::gemm_nt(pg + t * m * n, shared_b ? pb2 : pb2 + t * k * n,
                                        ga + t * m * k, m, n, k);
                    }
                }
                if (ib >= 0) {
                    double* gb = tp.grad_buffer(ib).data();
                    for (std::size_t t = 0; t < batch; ++t) {
                        detail::gemm_tn(pa2 + t * m * k, pg + t * m * n,
                                        shared_b ? gb : gb + t * k * n, m, k, n);
                    }
                }
            });
        out.set_track(tape, id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// causal dilated 1-d convolution
// ---------------------------------------------------------------------------

/// x: [T×Cin] or [B×T×Cin], kernel: [K×Cin×Cout] -> same rank with Cout channels.
/// Left-padded with (K-1)*dilation implicit zeros, so out[t] depends only on x[<=t]:
///   out[t, co] = sum_k sum_ci kernel[k, ci, co] * x[t - (K-1-k)*dilation, ci]
inline Tensor conv1d_causal(const Tensor& x, const Tensor& kernel, int dilation) {
    if (dilation < 1) throw ParameterError("conv1d_causal: dilation must be >= 1");
    if (kernel.rank() != 3) {
        throw DimensionError("conv1d_causal: kernel must be [K x Cin x Cout], got " +
                             shape_str(kernel.shape()));
    }
    const bool batched = x.rank() == 3;
    if (!batched && x.rank() != 2) {
        throw DimensionError("conv1d_causal: input must be [T x Cin] or [B x T x Cin], got " +
                             shape_str(x.shape()));
    }
    const std::size_t B = batched ? x.dim(0) : 1;
    const std::size_t T = x.dim(batched ? 1 : 0);
    const std::size_t cin = x.dim(batched ? 2 : 1);
    const std::size_t K = kernel.dim(0);
    const std::size_t cout = kernel.dim(2);
    if (K < 1) throw ParameterError("conv1d_causal: kernel size must be >= 1");
    if (kernel.dim(1) != cin) {
        throw DimensionError("conv1d_causal: channel mismatch: input " + shape_str(x.shape()) +
                             " vs kernel " + shape_str(kernel.shape()));
    }

    Shape so = batched ? Shape{B, T, cout} : Shape{T, cout};
    Tensor out(so);
    const double* px = x.data();
    const double* pw = kernel.data();
    double* po = out.mutable_data();
    const auto dil = static_cast<std::ptrdiff_t>(dilation);

    for (std::size_t bb = 0; bb < B; ++bb) {
        const double* xb = px + bb * T * cin;
        double* ob = po + bb * T * cout;
        for (std::size_t t = 0; t < T; ++t) {
            double* ot = ob + t * cout;
            for (std::size_t k = 0; k < K; ++k) {
                const std::ptrdiff_t src =
                    static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(K - 1 - k) * dil;
                if (src < 0) continue;
                const double* xs = xb + static_cast<std::size_t>(src) * cin;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double xv = xs[ci];
                    const double* wr = pw + (k * cin + ci) * cout;
                    for (std::size_t co = 0; co < cout; ++co) ot[co] += xv * wr[co];
                }
            }
        }
    }

    Tape* tape = tape_of(x, kernel);
    if (tape) {
        const int ix = x.tape() == tape ? x.node() : -1;
        const int iw = kernel.tape() == tape ? kernel.node() : -1;
        Tensor xc = x, wc = kernel;
        const int id = tape->add_node(
            "conv1d_causal", {ix, iw}, so,
            [ix, iw, xc, wc, B, T, cin, cout, K, dil](Tape& tp, int self) {
                const auto& g = tp.grad_buffer(self);
                const double* pg = g.data();
                const double* px2 = xc.data();
                const double* pw2 = wc.data();
                double* gx = ix >= 0 ? tp.grad_buffer(ix).data() : nullptr;
                double* gw = iw >= 0 ? tp.grad_buffer(iw).data() : nullptr;
                for (std::size_t bb = 0; bb < B; ++bb) {
                    const double* xb = px2 + bb * T * cin;
                    const double* gb = pg + bb * T * cout;
                    double* gxb = gx ? gx + bb * T * cin : nullptr;
                    for (std::size_t t = 0; t < T; ++t) {
                        const double* gt = gb + t * cout;
                        for (std::size_t k = 0; k < K; ++k) {
                            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) -
                                                       static_cast<std::ptrdiff_t>(K - 1 - k) * dil;
                            if (src < 0) continue;
                            const auto s = static_cast<std::size_t>(src);
                            for (std::size_t ci = 0; ci < cin; ++ci) {
                                const double* wr = pw2 + (k * cin + ci) * cout;
                                if (gxb) {
                                    double acc = 0.0;
                                    for (std::size_t co = 0; co < cout; ++co)
                                        acc += wr[co] * gt[co];
                                    gxb[s * cin + ci] += acc;
                                }
                                if (gw) {
                                    const double xv = xb[s * cin + ci];
                                    double* gwr = gw + (k * cin + ci) * cout;
                                    for (std::size_t co = 0; co < cout; ++co)
                                        gwr[co] += xv * gt[co];
                                }
                            }
                        }
                    }
                }
            });
        out.set_track(tape, id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

/// Exp-normalization along `axis` with max subtraction; slices sum to 1.
inline Tensor softmax(const Tensor& x, int axis) {
    const auto rank = static_cast<int>(x.rank());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) {
        throw ParameterError("softmax: axis out of range for " + shape_str(x.shape()));
    }
    const auto a = static_cast<std::size_t>(axis);
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < a; ++d) outer *= x.dim(d);
    const std::size_t n = x.dim(a);
    for (std::size_t d = a + 1; d < x.rank(); ++d) inner *= x.dim(d);

    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.mutable_data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = px[base];
            for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, px[base + j * inner]);
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double e = detail::fexp(px[base + j * inner] - mx);
                po[base + j * inner] = e;
                sum += e;
            }
            const double invs = 1.0 / sum;
            for (std::size_t j = 0; j < n; ++j) po[base + j * inner] *= invs;
        }
    }

    if (Tape* tape = x.tape()) {
        const int ix = x.node();
        Tensor oc = out;
        const int id = tape->add_node(
            "softmax", {ix}, x.shape(), [ix, oc, outer, n, inner](Tape& tp, int self) {
                const auto& g = tp.grad_buffer(self);
                auto& gx = tp.grad_buffer(ix);
                const double* py = oc.data();
                for (std::size_t o = 0; o < outer; ++o) {
                    for (std::size_t in = 0; in < inner; ++in) {
                        const std::size_t base = o * n * inner + in;
                        double dot = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                            const std::size_t p = base + j * inner;
                            dot += g[p] * py[p];
                        }
                        for (std::size_t j = 0; j < n; ++j) {
                            const std::size_t p = base + j * inner;
                            gx[p] += py[p] * (g[p] - dot);
                        }
                    }
                }
            });
        out.set_track(tape, id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// layer normalization (over the last axis)
// ---------------------------------------------------------------------------

/// Per-slice zero mean / unit variance over the last axis (population variance,
/// eps-guarded), then elementwise affine with gain and bias of length d.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
    if (x.rank() < 1) throw DimensionError("layer_norm: input must have rank >= 1");
    const std::size_t d = x.dim(x.rank() - 1);
    if (d < 1) throw DimensionError("layer_norm: last axis must be >= 1");
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
        throw DimensionError("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                             shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
    }
    const std::size_t rows = x.numel() / d;

    Tensor out(x.shape());
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    const double* px = x.data();
    const double* pgn = gain.data();
    const double* pbs = bias.data();
    double* po = out.mutable_data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = px + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = inv;
        double* hr = xhat->data() + r * d;
        double* orow = po + r * d;
        for (std::size_t j = 0; j < d; ++j) {
            hr[j] = (xr[j] - mean) * inv;
            orow[j] = pgn[j] * hr[j] + pbs[j];
        }
    }

    Tape* tape = tape_of(x, gain, bias);
    if (tape) {
        const int ix = x.tape() == tape ? x.node() : -1;
        const int ig = gain.tape() == tape ? gain.node() : -1;
        const int ib = bias.tape() == tape ? bias.node() : -1;
        Tensor gc = gain;
        const int id = tape->add_node(
            "layer_norm", {ix, ig, ib}, x.shape(),
            [ix, ig, ib, gc, xhat, inv_std, rows, d](Tape& tp, int self) {
                const auto& g = tp.grad_buffer(self);
                const double* pgn2 = gc.data();
                double* gx = ix >= 0 ? tp.grad_buffer(ix).data() : nullptr;
                double* gg = ig >= 0 ? tp.grad_buffer(ig).data() : nullptr;
                double* gb = ib >= 0 ? tp.grad_buffer(ib).data() : nullptr;
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* gr = g.data() + r * d;
                    const double* hr = xhat->data() + r * d;
                    if (gg || gb) {
                        for (std::size_t j = 0; j < d; ++j) {
                            if (gg) gg[j] += gr[j] * hr[j];
                            if (gb) gb[j] += gr[j];
                        }
                    }
                    if (gx) {
                        double m1 = 0.0, m2 = 0.0;
                        for (std::size_t j = 0; j < d; ++j) {
                            const double dh = gr[j] * pgn2[j];
                            m1 += dh;
                            m2 += dh * hr[j];
                        }
                        m1 /= static_cast<double>(d);
                        m2 /= static_cast<double>(d);
                        const double inv = (*inv_std)[r];
                        double* gxr = gx + r * d;
                        for (std::size_t j = 0; j < d; ++j) {
                            const double dh = gr[j] * pgn2[j];
                            gxr[j] += inv * (dh - m1 - hr[j] * m2);
                        }
                    }
                }
            });
        out.set_track(tape, id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

enum class Reduce { mean, sum };

/// Reduce over one axis (axis removed from the shape) or over all elements
/// (axis = nullopt, scalar result).
inline Tensor reduce(const Tensor& x, Reduce kind, std::optional<int> axis = std::nullopt) {
    if (!axis.has_value()) {
        const std::size_t n = x.numel();
        double s = 0.0;
        const double* px = x.data();
        for (std::size_t i = 0; i < n; ++i) s += px[i];
        const double denom = kind == Reduce::mean ? static_cast<double>(n) : 1.0;
        Tensor out = Tensor::scalar(s / denom);
        if (Tape* tape = x.tape()) {
            const int ix = x.node();
            const int id =
                tape->add_node("reduce", {ix}, Shape{}, [ix, n, denom](Tape& tp, int self) {
                    const double gv = tp.grad_buffer(self)[0] / denom;
                    auto& gx = tp.grad_buffer(ix);
                    for (std::size_t i = 0; i < n; ++i) gx[i] += gv;
                });
            out.set_track(tape, id);
        }
        return out;
    }

    int ax = *axis;
    const auto rank = static_cast<int>(x.rank());
    if (ax < 0) ax += rank;
    if (ax < 0 || ax >= rank) {
        throw ParameterError("reduce: axis out of range for " + shape_str(x.shape()));
    }
    const auto a = static_cast<std::size_t>(ax);
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < a; ++d) outer *= x.dim(d);
    const std::size_t n = x.dim(a);
    for (std::size_t d = a + 1; d < x.rank(); ++d) inner *= x.dim(d);
    const double denom = kind == Reduce::mean ? static_cast<double>(n) : 1.0;

    Shape so;
    for (std::size_t d = 0; d < x.rank(); ++d)
        if (d != a) so.push_back(x.dim(d));
    Tensor out(so);
    const double* px = x.data();
    double* po = out.mutable_data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < n; ++j) {
            const double* src = px + (o * n + j) * inner;
            double* dst = po + o * inner;
            for (std::size_t in = 0; in < inner; ++in) dst[in] += src[in];
        }
    }
    if (kind == Reduce::mean) {
        for (std::size_t i = 0; i < out.numel(); ++i) po[i] /= denom;
    }

    if (Tape* tape = x.tape()) {
        const int ix = x.node();
        const int id =
            tape->add_node("reduce", {ix}, so, [ix, outer, n, inner, denom](Tape& tp, int self) {
                const auto& g = tp.grad_buffer(self);
                auto& gx = tp.grad_buffer(ix);
                for (std::size_t o = 0; o < outer; ++o) {
                    const double* gr = g.data() + o * inner;
                    for (std::size_t j = 0; j < n; ++j) {
                        double* dst = gx.data() + (o * n + j) * inner;
                        for (std::size_t in = 0; in < inner; ++in) dst[in] += gr[in] / denom;
                    }
                }
            });
        out.set_track(tape, id);
    }
    return out;
}

inline Tensor mean_all(const Tensor& x) { return reduce(x, Reduce::mean); }
inline Tensor sum_all(const Tensor& x) { return reduce(x, Reduce::sum); }

// ---------------------------------------------------------------------------
// view / layout ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape s) {
    Tensor out = x.reshaped_view(std::move(s));
    if (Tape* tape = x.tape()) {
        const int ix = x.node();
        const int id = tape->add_node("reshape", {ix}, out.shape(), [ix](Tape& tp, int self) {
            tp.accumulate(ix, tp.grad_buffer(self));
        });
        out.set_track(tape, id);
    }
    return out;
}

inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
    const std::size_t rank = x.rank();
    if (perm.size() != rank) throw ParameterError("permute: perm rank mismatch");
    std::vector<bool> seen(rank, false);
    for (auto p : perm) {
        if (p >= rank || seen[p]) throw ParameterError("permute: invalid permutation");
        seen[p] = true;
    }

    Shape so(rank);
    for (std::size_t d = 0; d < rank; ++d) so[d] = x.dim(perm[d]);

    // strides of x, rearranged into output axis order
    std::vector<std::size_t> xstr(rank, 1);
    for (std::size_t d = rank - 1; d-- > 0;) xstr[d] = xstr[d + 1] * x.dim(d + 1);
    std::vector<std::size_t> sstr(rank);
    for (std::size_t d = 0; d < rank; ++d) sstr[d] = xstr[perm[d]];

    Tensor out(so);
    const double* px = x.data();
    double* po = out.mutable_data();
    const std::size_t total = x.numel();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t soff = 0;
    for (std::size_t f = 0; f < total; ++f) {
        po[f] = px[soff];
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            soff += sstr[d];
            if (idx[d] < so[d]) break;
            soff -= sstr[d] * so[d];
            idx[d] = 0;
        }
    }

    if (Tape* tape = x.tape()) {
        const int ix = x.node();
        const int id = tape->add_node(
            "permute", {ix}, so, [ix, so, sstr, rank, total](Tape& tp, int self) {
                const auto& g = tp.grad_buffer(self);
                auto& gx = tp.grad_buffer(ix);
                std::vector<std::size_t> idx2(rank, 0);
                std::size_t soff2 = 0;
                for (std::size_t f = 0; f < total; ++f) {
                    gx[soff2] += g[f];
                    for (std::size_t d = rank; d-- > 0;) {
                        ++idx2[d];
                        soff2 += sstr[d];
                        if (idx2[d] < so[d]) break;
                        soff2 -= sstr[d] * so[d];
                        idx2[d] = 0;
                    }
                }
            });
        out.set_track(tape, id);
    }
    return out;
}

inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
    if (axis >= x.rank()) throw ParameterError("slice: axis out of range");
    if (start + len > x.dim(axis) || len == 0) {
        throw ParameterError("slice: range [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") out of bounds for axis size " +
                             std::to_string(x.dim(axis)));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
    const std::size_t n = x.dim(axis);
    for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);

    Shape so = x.shape();
    so[axis] = len;
    Tensor out(so);
    const double* px = x.data();
    double* po = out.mutable_data();
    for (std::size_t o = 0; o < outer; ++o) {
        std::memcpy(po + o * len * inner, px + (o * n + start) * inner,
                    len * inner * sizeof(double));
    }

    if (Tape* tape = x.tape()) {
        const int ix = x.node();
        const int id = tape->add_node(
            "slice", {ix}, so, [ix, outer, n, inner, start, len](Tape& tp, int self) {
                const auto& g = tp.grad_buffer(self);
                auto& gx = tp.grad_buffer(ix);
                for (std::size_t o = 0; o < outer; ++o) {
                    const double* gs = g.data() + o * len * inner;
                    double* gd = gx.data() + (o * n + start) * inner;
                    for (std::size_t i = 0; i < len * inner; ++i) gd[i] += gs[i];
                }
            });
        out.set_track(tape, id);
    }
    return out;
}

inline Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
    if (xs.empty()) throw ParameterError("concat: empty input list");
    const Shape& s0 = xs.front().shape();
    if (axis >= s0.size()) throw ParameterError("concat: axis out of range");
    std::size_t total_axis = 0;
    for (const auto& t : xs) {
        if (t.rank() != s0.size()) throw DimensionError("concat: rank mismatch");
        for (std::size_t d = 0; d < s0.size(); ++d) {
            if (d != axis && t.dim(d) != s0[d]) {
                throw DimensionError("concat: shape mismatch at non-concat axis: " +
                                     shape_str(t.shape()) + " vs " + shape_str(s0));
            }
        }
        total_axis += t.dim(axis);
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
    for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

    Shape so = s0;
    so[axis] = total_axis;
    Tensor out(so);
    double* po = out.mutable_data();
    std::size_t off = 0;
    for (const auto& t : xs) {
        const std::size_t na = t.dim(axis);
        const double* pt = t.data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::memcpy(po + (o * total_axis + off) * inner, pt + o * na * inner,
                        na * inner * sizeof(double));
        }
        off += na;
    }

    Tape* tape = nullptr;
    for (const auto& t : xs) {
        Tape* tt = t.tape();
        if (tt) {
            if (tape && tape != tt) throw ContractError("concat: operands on different tapes");
            tape = tt;
        }
    }
    if (tape) {
        std::vector<int> ids;
        std::vector<std::size_t> widths;
        for (const auto& t : xs) {
            ids.push_back(t.tape() == tape ? t.node() : -1);
            widths.push_back(t.dim(axis));
        }
        const int id = tape->add_node(
            "concat", ids, so, [ids, widths, outer, inner, total_axis](Tape& tp, int self) {
                const auto& g = tp.grad_buffer(self);
                std::size_t off2 = 0;
                for (std::size_t i = 0; i < ids.size(); ++i) {
                    const std::size_t na = widths[i];
                    if (ids[i] >= 0) {
                        auto& gx = tp.grad_buffer(ids[i]);
                        for (std::size_t o = 0; o < outer; ++o) {
                            const double* gs = g.data() + (o * total_axis + off2) * inner;
                            double* gd = gx.data() + o * na * inner;
                            for (std::size_t j = 0; j < na * inner; ++j) gd[j] += gs[j];
                        }
                    }
                    off2 += na;
                }
            });
        out.set_track(tape, id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// fused LSTM layer (full BPTT inside one tape node)
// ---------------------------------------------------------------------------

/// x: [B×T×In], wx: [In×4H], wh: [H×4H], b: [4H] -> hidden sequence [B×T×H].
/// Gate order along the 4H axis: input, forget, cell candidate, output.
/// Initial hidden and cell states are zero.
inline Tensor lstm_layer(const Tensor& x, const Tensor& wx, const Tensor& wh, const Tensor& b) {
    if (x.rank() != 3) throw DimensionError("lstm_layer: input must be [B x T x In]");
    const std::size_t B = x.dim(0), T = x.dim(1), in = x.dim(2);
    if (wx.rank() != 2 || wx.dim(0) != in || wx.dim(1) % 4 != 0) {
        throw DimensionError("lstm_layer: wx must be [In x 4H], got " + shape_str(wx.shape()));
    }
    const std::size_t H = wx.dim(1) / 4;
    if (wh.shape() != Shape{H, 4 * H}) {
        throw DimensionError("lstm_layer: wh must be [H x 4H], got " + shape_str(wh.shape()));
    }
    if (b.shape() != Shape{4 * H}) {
        throw DimensionError("lstm_layer: b must be [4H], got " + shape_str(b.shape()));
    }

    Tensor out(Shape{B, T, H});
    // saved activations for backward: gates + cell state + tanh(cell)
    auto gi = std::make_shared<std::vector<double>>(B * T * H);
    auto gf = std::make_shared<std::vector<double>>(B * T * H);
    auto gg = std::make_shared<std::vector<double>>(B * T * H);
    auto go = std::make_shared<std::vector<double>>(B * T * H);
    auto cs = std::make_shared<std::vector<double>>(B * T * H);
    auto tc = std::make_shared<std::vector<double>>(B * T * H);

    const double* px = x.data();
    const double* pwx = wx.data();
    const double* pwh = wh.data();
    const double* pb = b.data();
    double* ph = out.mutable_data();

    std::vector<double> z(B * 4 * H);
    std::vector<double> hprev(B * H, 0.0), cprev(B * H, 0.0);
    auto sigm = [](double v) { return 1.0 / (1.0 + detail::fexp(-v)); };

    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t bb = 0; bb < B; ++bb) {
            std::memcpy(z.data() + bb * 4 * H, pb, 4 * H * sizeof(double));
        }
        // z += x_t * wx: gather x rows at time t
        for (std::size_t bb = 0; bb < B; ++bb) {
            detail::gemm_nn(px + (bb * T + t) * in, pwx, z.data() + bb * 4 * H, 1, in, 4 * H);
        }
        detail::gemm_nn(hprev.data(), pwh, z.data(), B, H, 4 * H);
        for (std::size_t bb = 0; bb < B; ++bb) {
            const double* zb = z.data() + bb * 4 * H;
            const std::size_t base = (bb * T + t) * H;
            for (std::size_t j = 0; j < H; ++j) {
                const double iv = sigm(zb[j]);
                const double fv = sigm(zb[H + j]);
                const double gv = std::tanh(zb[2 * H + j]);
                const double ov = sigm(zb[3 * H + j]);
                const double cv = fv * cprev[bb * H + j] + iv * gv;
                const double tv = std::tanh(cv);
                (*gi)[base + j] = iv;
                (*gf)[base + j] = fv;
                (*gg)[base + j] = gv;
                (*go)[base + j] = ov;
                (*cs)[base + j] = cv;
                (*tc)[base + j] = tv;
                const double hv = ov * tv;
                ph[base + j] = hv;
                hprev[bb * H + j] = hv;
                cprev[bb * H + j] = cv;
            }
        }
    }

    Tape* tape = tape_of_all({&x, &wx, &wh, &b});
    if (tape) {
        const int ix = x.tape() == tape ? x.node() : -1;
        const int iwx = wx.tape() == tape ? wx.node() : -1;
        const int iwh = wh.tape() == tape ? wh.node() : -1;
        const int ib = b.tape() == tape ? b.node() : -1;
        Tensor xc = x, wxc = wx, whc = wh, oc = out;
        const int id = tape->add_node(
            "lstm_layer", {ix, iwx, iwh, ib}, out.shape(),
            [=](Tape& tp, int self) {
                const auto& g = tp.grad_buffer(self);
                double* gx = ix >= 0 ? tp.grad_buffer(ix).data() : nullptr;
                double* gwx = iwx >= 0 ? tp.grad_buffer(iwx).data() : nullptr;
                double* gwh = iwh >= 0 ? tp.grad_buffer(iwh).data() : nullptr;
                double* gb = ib >= 0 ? tp.grad_buffer(ib).data() : nullptr;
                const double* px2 = xc.data();
                const double* pwx2 = wxc.data();
                const double* pwh2 = whc.data();
                const double* ph2 = oc.data();

                std::vector<double> dh(B * H, 0.0), dc(B * H, 0.0), dz(B * 4 * H);
                std::vector<double> hp(B * H), xrow(B * in);
                for (std::size_t t = T; t-- > 0;) {
                    for (std::size_t bb = 0; bb < B; ++bb) {
                        const std::size_t base = (bb * T + t) * H;
                        double* dzb = dz.data() + bb * 4 * H;
                        for (std::size_t j = 0; j < H; ++j) {
                            const double dhv = dh[bb * H + j] + g[base + j];
                            const double ov = (*go)[base + j];
                            const double tv = (*tc)[base + j];
                            const double dov = dhv * tv;
                            double dcv = dc[bb * H + j] + dhv * ov * (1.0 - tv * tv);
                            const double iv = (*gi)[base + j];
                            const double fv = (*gf)[base + j];
                            const double gv = (*gg)[base + j];
                            const double cm1 = t > 0 ? (*cs)[base - H + j] : 0.0;
                            dzb[j] = dcv * gv * iv * (1.0 - iv);
                            dzb[H + j] = dcv * cm1 * fv * (1.0 - fv);
                            dzb[2 * H + j] = dcv * iv * (1.0 - gv * gv);
                            dzb[3 * H + j] = dov * ov * (1.0 - ov);
                            dc[bb * H + j] = dcv * fv;
                        }
                    }
                    // parameter and input gradients from dz
                    if (gb) {
                        for (std::size_t bb = 0; bb < B; ++bb) {
                            const double* dzb = dz.data() + bb * 4 * H;
                            for (std::size_t j = 0; j < 4 * H; ++j) gb[j] += dzb[j];
                        }
                    }
                    for (std::size_t bb = 0; bb < B; ++bb) {
                        std::memcpy(xrow.data() + bb * in, px2 + (bb * T + t) * in,
                                    in * sizeof(double));
                        if (t > 0) {
                            std::memcpy(hp.data() + bb * H, ph2 + (bb * T + t - 1) * H,
                                        H * sizeof(double));
                        }
                    }
                    if (t == 0) std::fill(hp.begin(), hp.end(), 0.0);
                    if (gwx) detail::gemm_tn(xrow.data(), dz.data(), gwx, B, in, 4 * H);
                    if (gwh) detail::gemm_tn(hp.data(), dz.data(), gwh, B, H, 4 * H);
                    if (gx) {
                        for (std::size_t bb = 0; bb < B; ++bb) {
                            detail::gemm_nt(dz.data() + bb * 4 * H, pwx2,
                                            gx + (bb * T + t) * in, 1, 4 * H, in);
                        }
                    }
                    std::fill(dh.begin(), dh.end(), 0.0);
                    detail::gemm_nt(dz.data(), pwh2, dh.data(), B, 4 * H, H);
                }
            });
        out.set_track(tape, id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// centered moving average along the time axis (series decomposition trend)
// ---------------------------------------------------------------------------

/// x: [B×T×C]; window-w mean with replicated edges, so output length equals T.
inline Tensor moving_avg(const Tensor& x, int window) {
    if (window < 1) throw ParameterError("moving_avg: window must be >= 1");
    if (x.rank() != 3) throw DimensionError("moving_avg: input must be [B x T x C]");
    const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
    const auto w = static_cast<std::ptrdiff_t>(window);
    const std::ptrdiff_t lo = -(w - 1) / 2;
    const std::ptrdiff_t hi = w / 2;
    const double invw = 1.0 / static_cast<double>(window);

    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.mutable_data();
    const auto tmax = static_cast<std::ptrdiff_t>(T) - 1;
    for (std::size_t bb = 0; bb < B; ++bb) {
        for (std::size_t t = 0; t < T; ++t) {
            double* orow = po + (bb * T + t) * C;
            for (std::ptrdiff_t j = lo; j <= hi; ++j) {
                const std::ptrdiff_t s =
                    std::clamp(static_cast<std::ptrdiff_t>(t) + j, std::ptrdiff_t{0}, tmax);
                const double* xr = px + (bb * T + static_cast<std::size_t>(s)) * C;
                for (std::size_t c = 0; c < C; ++c) orow[c] += xr[c];
            }
            for (std::size_t c = 0; c < C; ++c) orow[c] *= invw;
        }
    }

    if (Tape* tape = x.tape()) {
        const int ix = x.node();
        const int id = tape->add_node(
            "moving_avg", {ix}, x.shape(), [ix, B, T, C, lo, hi, invw, tmax](Tape& tp, int self) {
                const auto& g = tp.grad_buffer(self);
                auto& gx = tp.grad_buffer(ix);
                for (std::size_t bb = 0; bb < B; ++bb) {
                    for (std::size_t t = 0; t < T; ++t) {
                        const double* gr = g.data() + (bb * T + t) * C;
                        for (std::ptrdiff_t j = lo; j <= hi; ++j) {
                            const std::ptrdiff_t s = std::clamp(static_cast<std::ptrdiff_t>(t) + j,
                                                                std::ptrdiff_t{0}, tmax);
                            double* gd = gx.data() + (bb * T + static_cast<std::size_t>(s)) * C;
                            for (std::size_t c = 0; c < C; ++c) gd[c] += gr[c] * invw;
                        }
                    }
                }
            });
        out.set_track(tape, id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// top-k discrete Fourier filter along the time axis
// ---------------------------------------------------------------------------

namespace detail {

struct TrigTable {
    std::size_t T = 0;
    std::size_t F = 0; // number of real-DFT frequencies = T/2 + 1
    std::vector<double> cos_tab, sin_tab; // [F x T]
};

inline std::shared_ptr<const TrigTable> trig_table(std::size_t T) {
    static std::mutex mu;
    static std::unordered_map<std::size_t, std::shared_ptr<const TrigTable>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(T);
    if (it != cache.end()) return it->second;
    auto tab = std::make_shared<TrigTable>();
    tab->T = T;
    tab->F = T / 2 + 1;
    tab->cos_tab.resize(tab->F * T);
    tab->sin_tab.resize(tab->F * T);
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    for (std::size_t j = 0; j < tab->F; ++j) {
        for (std::size_t t = 0; t < T; ++t) {
            const double th = kTwoPi * static_cast<double>(j) * static_cast<double>(t) /
                              static_cast<double>(T);
            tab->cos_tab[j * T + t] = std::cos(th);
            tab->sin_tab[j * T + t] = std::sin(th);
        }
    }
    cache.emplace(T, tab);
    return tab;
}

} // namespace detail

/// Keep only the k highest-power real-DFT modes of each (batch, channel)
/// series; everything else is zeroed. x: [B×T×C]. For a fixed retained set the
/// map is an orthogonal projection, so backward applies the same filter to the
/// upstream gradient.
inline Tensor dft_topk(const Tensor& x, int k) {
    if (k < 1) throw ParameterError("dft_topk: k must be >= 1");
    if (x.rank() != 3) throw DimensionError("dft_topk: input must be [B x T x C]");
    const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
    auto tab = detail::trig_table(T);
    const std::size_t F = tab->F;
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), F);

    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.mutable_data();

    auto modes = std::make_shared<std::vector<std::uint32_t>>(B * C * keep);
    std::vector<double> re(F), im(F), series(T), power(F);
    std::vector<std::uint32_t> order(F);

    auto synth_coeff = [&](std::size_t j) {
        // synthesis weight: DC and Nyquist modes appear once, others twice
        const bool half = (j == 0) || (2 * j == T);
        return (half ? 1.0 : 2.0) / static_cast<double>(T);
    };

    for (std::size_t bb = 0; bb < B; ++bb) {
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t t = 0; t < T; ++t) series[t] = px[(bb * T + t) * C + c];
            for (std::size_t j = 0; j < F; ++j) {
                const double* ct = tab->cos_tab.data() + j * T;
                const double* st = tab->sin_tab.data() + j * T;
                double a = 0.0, b2 = 0.0;
                for (std::size_t t = 0; t < T; ++t) {
                    a += series[t] * ct[t];
                    b2 -= series[t] * st[t];
                }
                re[j] = a;
                im[j] = b2;
                power[j] = a * a + b2 * b2;
            }
            std::iota(order.begin(), order.end(), 0u);
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                              order.end(), [&](std::uint32_t lhs, std::uint32_t rhs) {
                                  if (power[lhs] != power[rhs]) return power[lhs] > power[rhs];
                                  return lhs < rhs; // deterministic tie-break
                              });
            std::uint32_t* sel = modes->data() + (bb * C + c) * keep;
            for (std::size_t i = 0; i < keep; ++i) sel[i] = order[i];

            for (std::size_t t = 0; t < T; ++t) {
                double v = 0.0;
                for (std::size_t i = 0; i < keep; ++i) {
                    const std::size_t j = sel[i];
                    v += synth_coeff(j) * (re[j] * tab->cos_tab[j * T + t] -
                                           im[j] * tab->sin_tab[j * T + t]);
                }
                po[(bb * T + t) * C + c] = v;
            }
        }
    }

    if (Tape* tape = x.tape()) {
        const int ix = x.node();
        const int id = tape->add_node(
            "dft_topk", {ix}, x.shape(), [ix, B, T, C, keep, tab, modes](Tape& tp, int self) {
                const auto& g = tp.grad_buffer(self);
                auto& gx = tp.grad_buffer(ix);
                std::vector<double> series(T);
                for (std::size_t bb = 0; bb < B; ++bb) {
                    for (std::size_t c = 0; c < C; ++c) {
                        for (std::size_t t = 0; t < T; ++t)
                            series[t] = g[(bb * T + t) * C + c];
                        const std::uint32_t* sel = modes->data() + (bb * C + c) * keep;
                        for (std::size_t i = 0; i < keep; ++i) {
                            const std::size_t j = sel[i];
                            const double* ct = tab->cos_tab.data() + j * T;
                            const double* st = tab->sin_tab.data() + j * T;
                            double a = 0.0, b2 = 0.0;
                            for (std::size_t t = 0; t < T; ++t) {
                                a += series[t] * ct[t];
                                b2 -= series[t] * st[t];
                            }
                            const bool half = (j == 0) || (2 * j == T);
                            const double w = (half ? 1.0 : 2.0) / static_cast<double>(T);
                            for (std::size_t t = 0; t < T; ++t) {
                                gx[(bb * T + t) * C + c] += w * (a * ct[t] - b2 * st[t]);
                            }
                        }
                    }
                }
            });
        out.set_track(tape, id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// convenience
// ---------------------------------------------------------------------------

/// y = x·w + b with b broadcast over leading axes.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add(matmul(x, w), b);
}

} // namespace fxcast

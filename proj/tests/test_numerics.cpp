#include "catch2/catch_amalgamated.hpp"

#include <cmath>

#include "fxcast/adam.hpp"
#include "fxcast/math_detail.hpp"
#include "fxcast/ops.hpp"
#include "fxcast/rng.hpp"
#include "fxcast/tensor.hpp"

using namespace fxcast;

TEST_CASE("fexp matches libm exp") {
    Rng rng(1);
    for (int i = 0; i < 20000; ++i) {
        const double x = rng.uniform(-700.0, 700.0);
        const double a = detail::fexp(x);
        const double b = std::exp(x);
        REQUIRE(std::fabs(a - b) <= 1e-13 * std::fabs(b));
    }
    REQUIRE(detail::fexp(0.0) == 1.0);
}

TEST_CASE("rng streams are deterministic and splittable") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
    Rng c(42), d(43);
    REQUIRE(c.next_u64() != d.next_u64());

    // uniform range and normal moments (loose sanity)
    Rng r(7);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal();
        sum += v;
        sq += v * v;
    }
    REQUIRE(std::fabs(sum / n) < 0.05);
    REQUIRE(std::fabs(sq / n - 1.0) < 0.05);
}

TEST_CASE("matmul identity and hand cases") {
    Tensor eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.mutable_data()[i * 3 + i] = 1.0;
    Rng rng(3);
    Tensor b({3, 4});
    for (std::size_t i = 0; i < b.numel(); ++i) b.mutable_data()[i] = rng.normal();

    Tensor ib = matmul(eye, b);
    for (std::size_t i = 0; i < b.numel(); ++i) REQUIRE(ib[i] == b[i]);

    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor v({2, 1}, {1, 1});
    Tensor av = matmul(a, v);
    REQUIRE(av.shape() == Shape{2, 1});
    REQUIRE(av[0] == 3.0);
    REQUIRE(av[1] == 7.0);
}

TEST_CASE("matmul shape errors name both shapes") {
    Tensor a({2, 3});
    Tensor b({4, 2});
    try {
        matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("[2x3]") != std::string::npos);
        REQUIRE(msg.find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("batched matmul agrees with per-slice products") {
    Rng rng(11);
    Tensor a({2, 3, 4});
    Tensor b({2, 4, 5});
    for (std::size_t i = 0; i < a.numel(); ++i) a.mutable_data()[i] = rng.normal();
    for (std::size_t i = 0; i < b.numel(); ++i) b.mutable_data()[i] = rng.normal();
    Tensor c = matmul(a, b);
    REQUIRE(c.shape() == Shape{2, 3, 5});
    for (std::size_t t = 0; t < 2; ++t) {
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 5; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < 4; ++p) acc += a.at({t, i, p}) * b.at({t, p, j});
                REQUIRE(std::fabs(c.at({t, i, j}) - acc) < 1e-12);
            }
        }
    }
}

TEST_CASE("conv1d_causal identity kernel") {
    Tensor x({4, 1}, {1, 2, 3, 4});
    Tensor k({1, 1, 1}, {1.0});
    Tensor y = conv1d_causal(x, k, 1);
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(y[i] == x[i]);
}

TEST_CASE("conv1d_causal dilated example against direct summation") {
    Tensor x({4, 1}, {1, 2, 3, 4});
    Tensor k({2, 1, 1}, {1, 1});
    Tensor y = conv1d_causal(x, k, 2);
    // brute-force oracle: out[t] = sum_k w[k] * x[t - (K-1-k)*d]
    const double w[2] = {1, 1};
    for (int t = 0; t < 4; ++t) {
        double acc = 0.0;
        for (int kk = 0; kk < 2; ++kk) {
            const int src = t - (1 - kk) * 2;
            if (src >= 0) acc += w[kk] * x[static_cast<std::size_t>(src)];
        }
        REQUIRE(y[static_cast<std::size_t>(t)] == acc);
    }
    REQUIRE(y[0] == 1.0);
    REQUIRE(y[1] == 2.0);
    REQUIRE(y[2] == 4.0);
    REQUIRE(y[3] == 6.0);
}

TEST_CASE("conv1d_causal output ignores future inputs") {
    Rng rng(5);
    Tensor x({10, 2});
    for (std::size_t i = 0; i < x.numel(); ++i) x.mutable_data()[i] = rng.normal();
    Tensor k({3, 2, 3});
    for (std::size_t i = 0; i < k.numel(); ++i) k.mutable_data()[i] = rng.normal();

    Tensor y0 = conv1d_causal(x, k, 2);
    const std::size_t t = 4;
    Tensor x2 = x.clone();
    for (std::size_t tt = t + 1; tt < 10; ++tt) {
        for (std::size_t c = 0; c < 2; ++c) x2.at_mut({tt, c}) += rng.normal();
    }
    Tensor y1 = conv1d_causal(x2, k, 2);
    for (std::size_t tt = 0; tt <= t; ++tt) {
        for (std::size_t c = 0; c < 3; ++c) REQUIRE(y0.at({tt, c}) == y1.at({tt, c}));
    }
    REQUIRE_THROWS_AS(conv1d_causal(x, k, 0), ParameterError);
}

TEST_CASE("elementwise examples") {
    Tensor x({3}, {-1, 0, 2});
    Tensor r = relu(x);
    REQUIRE(r[0] == 0.0);
    REQUIRE(r[1] == 0.0);
    REQUIRE(r[2] == 2.0);

    REQUIRE(sigmoid(Tensor::scalar(0.0))[0] == 0.5);

    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 2}, {10, 20, 30, 40});
    Tensor s = add(a, b);
    REQUIRE(s[3] == 44.0);
    Tensor d = sub(b, a);
    REQUIRE(d[0] == 9.0);
    Tensor m = mul(a, Tensor::scalar(2.0));
    REQUIRE(m[2] == 6.0);

    // row broadcast (suffix)
    Tensor bias({2}, {100, 200});
    Tensor ab = add(a, bias);
    REQUIRE(ab.at({0, 0}) == 101.0);
    REQUIRE(ab.at({1, 1}) == 204.0);

    REQUIRE_THROWS_AS(add(Tensor({3}), Tensor({4})), DimensionError);
}

TEST_CASE("softmax examples and invariants") {
    Tensor z({3}, {0, 0, 0});
    Tensor p = softmax(z, 0);
    for (int i = 0; i < 3; ++i) REQUIRE(std::fabs(p[i] - 1.0 / 3.0) < 1e-15);

    // shift invariance
    Tensor x({4}, {0.3, -1.2, 2.0, 0.7});
    Tensor xs({4}, {0.3 + 5.0, -1.2 + 5.0, 2.0 + 5.0, 0.7 + 5.0});
    Tensor p0 = softmax(x, 0);
    Tensor p1 = softmax(xs, 0);
    for (int i = 0; i < 4; ++i) REQUIRE(std::fabs(p0[i] - p1[i]) < 1e-14);

    // direct evaluation oracle
    Tensor v({3}, {1, 2, 3});
    Tensor pv = softmax(v, 0);
    double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (int i = 0; i < 3; ++i) {
        REQUIRE(std::fabs(pv[i] - std::exp(1.0 + i) / denom) <= 1e-12);
    }

    // random tensors: nonnegative, slices sum to 1 within 1e-12, any axis
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor t({2, 3, 4});
        for (std::size_t i = 0; i < t.numel(); ++i) t.mutable_data()[i] = rng.uniform(-30, 30);
        const int axis = static_cast<int>(rng.below(3));
        Tensor q = softmax(t, axis);
        for (std::size_t i = 0; i < q.numel(); ++i) REQUIRE(q[i] >= 0.0);
        // sum along axis must be 1 for each slice
        std::size_t outer = 1, inner = 1;
        const auto ax = static_cast<std::size_t>(axis);
        for (std::size_t dd = 0; dd < ax; ++dd) outer *= q.dim(dd);
        for (std::size_t dd = ax + 1; dd < q.rank(); ++dd) inner *= q.dim(dd);
        const std::size_t n = q.dim(ax);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                double sum = 0.0;
                for (std::size_t j = 0; j < n; ++j) sum += q[o * n * inner + j * inner + in];
                REQUIRE(std::fabs(sum - 1.0) <= 1e-12);
            }
        }
    }
}

TEST_CASE("layer_norm examples") {
    Tensor gain({2}, {1, 1});
    Tensor bias({2}, {0, 0});

    Tensor cx({3, 2}, {5, 5, 5, 5, 5, 5});
    Tensor cz = layer_norm(cx, gain, bias);
    for (std::size_t i = 0; i < cz.numel(); ++i) REQUIRE(cz[i] == 0.0);

    Tensor x({1, 2}, {1, 3});
    Tensor z = layer_norm(x, gain, bias);
    REQUIRE(std::fabs(z[0] - (-1.0)) < 1e-5); // population std = 1, eps-guarded
    REQUIRE(std::fabs(z[1] - 1.0) < 1e-5);
}

TEST_CASE("reduce examples") {
    Tensor x({3}, {2, 4, 6});
    REQUIRE(reduce(x, Reduce::mean)[0] == 4.0);

    Tensor ones = Tensor::ones({3, 4});
    Tensor s = reduce(ones, Reduce::sum, 0);
    REQUIRE(s.shape() == Shape{4});
    for (int i = 0; i < 4; ++i) REQUIRE(s[i] == 3.0);

    Tape tape;
    Tensor y({4}, {1, 2, 3, 4});
    tape.watch(y);
    Tensor m = reduce(y, Reduce::mean);
    tape.backward(m);
    Tensor g = tape.grad(y);
    for (int i = 0; i < 4; ++i) REQUIRE(g[i] == 0.25);
}

TEST_CASE("view ops round trip values") {
    Rng rng(23);
    Tensor x({2, 3, 4});
    for (std::size_t i = 0; i < x.numel(); ++i) x.mutable_data()[i] = rng.normal();

    Tensor r = reshape(x, {6, 4});
    REQUIRE(r.at({5, 3}) == x.at({1, 2, 3}));

    Tensor p = permute(x, {2, 0, 1});
    REQUIRE(p.shape() == Shape{4, 2, 3});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 4; ++k) REQUIRE(p.at({k, i, j}) == x.at({i, j, k}));

    Tensor sl = slice(x, 1, 1, 2);
    REQUIRE(sl.shape() == Shape{2, 2, 4});
    REQUIRE(sl.at({1, 0, 2}) == x.at({1, 1, 2}));

    Tensor c = concat({sl, sl}, 1);
    REQUIRE(c.shape() == Shape{2, 4, 4});
    REQUIRE(c.at({0, 3, 1}) == sl.at({0, 1, 1}));
}

TEST_CASE("dft_topk is identity on retained modes and a projection") {
    const std::size_t T = 32;
    Tensor x({1, T, 1});
    for (std::size_t t = 0; t < T; ++t) {
        x.mutable_data()[t] = std::sin(2.0 * M_PI * 3.0 * static_cast<double>(t) / T);
    }
    Tensor y = dft_topk(x, 8);
    for (std::size_t t = 0; t < T; ++t) REQUIRE(std::fabs(y[t] - x[t]) <= 1e-6);

    // projection: applying the filter twice = applying it once
    Rng rng(31);
    Tensor z({2, 16, 3});
    for (std::size_t i = 0; i < z.numel(); ++i) z.mutable_data()[i] = rng.normal();
    Tensor f1 = dft_topk(z, 4);
    Tensor f2 = dft_topk(f1, 4);
    for (std::size_t i = 0; i < z.numel(); ++i) REQUIRE(std::fabs(f1[i] - f2[i]) <= 1e-9);
}

TEST_CASE("moving_avg keeps constants and output length") {
    Tensor x({1, 7, 2}, std::vector<double>(14, 3.5));
    Tensor y = moving_avg(x, 5);
    REQUIRE(y.shape() == x.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) REQUIRE(std::fabs(y[i] - 3.5) < 1e-12);
}

TEST_CASE("adam first step moves by about lr in the gradient sign direction") {
    Tensor p({3}, {1.0, -2.0, 0.5});
    Tensor p0 = p.clone();
    std::vector<Tensor*> params{&p};
    AdamState st = AdamState::for_params(params, 1e-3);
    Tensor g({3}, {0.4, -0.7, 1.3});
    adam_step(st, params, {g});
    REQUIRE(st.step == 1);
    for (int i = 0; i < 3; ++i) {
        const double delta = p[i] - p0[i];
        const double expected = -1e-3 * (g[i] > 0 ? 1.0 : -1.0);
        REQUIRE(std::fabs(delta - expected) < 1e-3 * 1e-4);
    }
}

TEST_CASE("adam zero gradient leaves fresh params unchanged and m decays") {
    Tensor p({2}, {1.0, 2.0});
    std::vector<Tensor*> params{&p};
    AdamState st = AdamState::for_params(params);
    Tensor zero({2}, {0.0, 0.0});
    for (int i = 0; i < 3; ++i) adam_step(st, params, {zero});
    REQUIRE(p[0] == 1.0);
    REQUIRE(p[1] == 2.0);
    for (double v : st.m[0]) REQUIRE(v == 0.0);

    // after a real step, zero gradients decay m geometrically
    Tensor g({2}, {1.0, -1.0});
    adam_step(st, params, {g});
    const double m_after = std::fabs(st.m[0][0]);
    adam_step(st, params, {zero});
    REQUIRE(std::fabs(st.m[0][0]) == Catch::Approx(m_after * st.beta1).epsilon(1e-12));
}

TEST_CASE("adam lr=0 is the identity on parameters") {
    Tensor p({4}, {1, 2, 3, 4});
    Tensor p0 = p.clone();
    std::vector<Tensor*> params{&p};
    AdamState st = AdamState::for_params(params, 0.0);
    Tensor g({4}, {5, -5, 0.1, 2});
    for (int i = 0; i < 5; ++i) adam_step(st, params, {g});
    for (int i = 0; i < 4; ++i) REQUIRE(p[i] == p0[i]);
}

TEST_CASE("adam three steps on a quadratic match the scalar recurrence") {
    // f(x) = 0.5 x^2, grad = x, lr = 0.1
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double x_ref = 1.0, m = 0.0, v = 0.0;
    std::vector<double> trace;
    for (int t = 1; t <= 3; ++t) {
        const double g = x_ref;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        x_ref -= lr * mh / (std::sqrt(vh) + eps);
        trace.push_back(x_ref);
    }

    Tensor p({1}, {1.0});
    std::vector<Tensor*> params{&p};
    AdamState st = AdamState::for_params(params, lr, b1, b2, eps);
    for (int t = 0; t < 3; ++t) {
        Tensor g({1}, {p[0]});
        adam_step(st, params, {g});
        REQUIRE(std::fabs(p[0] - trace[static_cast<std::size_t>(t)]) <= 1e-12);
    }
}

TEST_CASE("adam rejects shape mismatches") {
    Tensor p({2});
    std::vector<Tensor*> params{&p};
    AdamState st = AdamState::for_params(params);
    Tensor g({3});
    REQUIRE_THROWS_AS(adam_step(st, params, {g}), DimensionError);
}

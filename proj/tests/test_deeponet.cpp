#include <doctest.h>

#include <cmath>

#include "dbdp/deeponet.hpp"
#include "dbdp/rng.hpp"

using namespace dbdp;

namespace {

DeepOnetSpec make_spec(int d, int m, int in_dim, int out_dim, std::uint64_t seed,
                       std::uint64_t tag, int width = 8) {
    DeepOnetSpec s;
    s.d = d;
    s.m = m;
    s.theta = he_init(std::vector<int>{d, width, m}, seed, tag);
    s.input_space = {kStateBasis, in_dim};
    s.output_space = {kStateBasis, out_dim};
    return s;
}

} // namespace

TEST_CASE("encoder reads coefficients, decoder pads them") {
    const HilbertVec x{{1.0, 2.0, 3.0}, kStateBasis};
    CHECK(encode(x, 2) == std::vector<double>{1.0, 2.0});
    const HilbertVec e3{{0.0, 0.0, 1.0}, kStateBasis};
    CHECK(encode(e3, 2) == std::vector<double>{0.0, 0.0});
    CHECK_THROWS_AS(encode(x, 4), DimensionError);

    const SpaceDesc w3{kStateBasis, 3};
    const HilbertVec d = decode(std::vector<double>{1.0, 0.0}, w3);
    CHECK(d.coeffs == std::vector<double>{1.0, 0.0, 0.0});

    for (int trial = 0; trial < 16; ++trial) {
        std::vector<double> a(3);
        rng::standard_normals(3, rng::Stream::probe, trial, 0, a);
        CHECK(norm(decode(a, w3)) ==
              doctest::Approx(std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])));
    }

    // Full-rank round trip.
    CHECK(decode(encode(x, 3), w3).coeffs == x.coeffs);
}

TEST_CASE("identity spaces reduce to the raw net bit for bit") {
    const int d = 4, m = 3;
    const DeepOnetSpec spec = make_spec(d, m, d, m, 11, 1);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> c(static_cast<std::size_t>(d));
        rng::standard_normals(12, rng::Stream::probe, trial, 0, c);
        const HilbertVec x{c, kStateBasis};
        const HilbertVec out = deeponet_eval(spec, x);
        const auto raw = mlp_forward(spec.theta, c);
        for (int k = 0; k < m; ++k) CHECK(out.coeffs[static_cast<std::size_t>(k)] == raw[static_cast<std::size_t>(k)]);
    }
}

TEST_CASE("evaluation depends on the input only through its first d modes") {
    const DeepOnetSpec spec = make_spec(2, 2, 4, 3, 21, 1);
    const HilbertVec x{{0.3, -0.7, 5.0, -9.0}, kStateBasis};
    const HilbertVec y{{0.3, -0.7, 0.0, 1.0}, kStateBasis};
    CHECK(deeponet_eval(spec, x).coeffs == deeponet_eval(spec, y).coeffs);

    // Zero net: output is the constant decode(b_L).
    DeepOnetSpec zero = spec;
    zero.theta = make_mlp(std::vector<int>{2, 8, 2});
    zero.theta.layers[1].b = {0.5, -0.25};
    const HilbertVec out = deeponet_eval(zero, x);
    CHECK(out.coeffs == std::vector<double>{0.5, -0.25, 0.0});
}

TEST_CASE("encoder/decoder adjoint relation") {
    // <decode(a), w>_W = a . encode(w, m): both sides read the first m modes.
    const SpaceDesc w4{kStateBasis, 4};
    for (int trial = 0; trial < 16; ++trial) {
        std::vector<double> a(2), wc(4);
        rng::standard_normals(31, rng::Stream::probe, trial, 0, a);
        rng::standard_normals(31, rng::Stream::probe, trial, 1, wc);
        const HilbertVec da = decode(a, w4);
        double lhs = 0.0;
        for (int k = 0; k < 4; ++k) lhs += da.coeffs[static_cast<std::size_t>(k)] * wc[static_cast<std::size_t>(k)];
        const HilbertVec w{wc, kStateBasis};
        const auto enc = encode(w, 2);
        CHECK(lhs == doctest::Approx(a[0] * enc[0] + a[1] * enc[1]));
    }
}

TEST_CASE("growth audit transfers through the encoder") {
    // 2-layer trunk: ||F(x)||^2 <= c1 ||x||_H^2 + c2 since encoding contracts.
    const DeepOnetSpec spec = make_spec(3, 2, 5, 4, 41, 1);
    const GrowthConstants g = growth_constants(spec.theta);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> c(5);
        rng::standard_normals(42, rng::Stream::probe, trial, 0, c);
        for (double& v : c) v *= 2.0;
        const HilbertVec x{c, kStateBasis};
        const HilbertVec out = deeponet_eval(spec, x);
        const double fn = norm(out), xn = norm(x);
        CHECK(fn * fn <= g.c1 * xn * xn + g.c2 + 1e-9);
    }
}

TEST_CASE("parameter gradients pass through the fixed linear maps") {
    const DeepOnetSpec spec = make_spec(3, 2, 4, 4, 51, 1);

    SUBCASE("adjoint mass beyond the decoder range is ignored") {
        std::vector<double> xs = {0.1, 0.2, 0.3, 0.4};
        std::vector<double> adj_full = {0.0, 0.0, 7.0, -3.0};  // only modes >= m
        const GradientRecord rec =
            deeponet_param_grads(spec, xs.data(), 4, 1, adj_full.data(), 4);
        for (const auto& l : rec.grads.layers) {
            for (double v : l.w) CHECK(v == 0.0);
            for (double v : l.b) CHECK(v == 0.0);
        }
    }
    SUBCASE("identity spaces reduce to mlp_backward") {
        const DeepOnetSpec id = make_spec(3, 2, 3, 2, 52, 1);
        std::vector<double> xs = {0.5, -0.1, 0.9};
        std::vector<double> adj = {1.0, -2.0};
        const GradientRecord rec = deeponet_param_grads(id, xs.data(), 3, 1, adj.data(), 2);
        const MlpParams direct = mlp_backward_batch(id.theta, xs.data(), 1, adj.data());
        for (std::size_t li = 0; li < direct.layers.size(); ++li) {
            CHECK(rec.grads.layers[li].w == direct.layers[li].w);
            CHECK(rec.grads.layers[li].b == direct.layers[li].b);
        }
    }
    SUBCASE("finite differences at 1e-5 relative") {
        std::vector<double> xs = {0.4, -0.6, 1.1, 0.0};
        std::vector<double> adj = {1.0, 1.0, 0.0, 0.0};
        const GradientRecord rec = deeponet_param_grads(spec, xs.data(), 4, 1, adj.data(), 4);
        auto loss = [&](const DeepOnetSpec& q) {
            const HilbertVec out = deeponet_eval(q, HilbertVec{xs, kStateBasis});
            return out.coeffs[0] + out.coeffs[1];
        };
        for (int probe = 0; probe < 10; ++probe) {
            const std::size_t li = probe % spec.theta.layers.size();
            const std::size_t wi = rng::uniform_u32(5, rng::Stream::probe, 1, probe) %
                                   spec.theta.layers[li].w.size();
            DeepOnetSpec q = spec;
            const double eps = 1e-6;
            q.theta.layers[li].w[wi] += eps;
            const double up = loss(q);
            q.theta.layers[li].w[wi] -= 2 * eps;
            const double dn = loss(q);
            const double fd = (up - dn) / (2 * eps);
            CHECK(std::fabs(fd - rec.grads.layers[li].w[wi]) <= 1e-5 * (1.0 + std::fabs(fd)));
        }
    }
}

TEST_CASE("functional fitting") {
    const SpaceDesc in_space{kStateBasis, 3};
    const SpaceDesc out_space{kStateBasis, 2};
    const int n = 600;
    std::vector<HilbertVec> xs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::vector<double> c(3);
        rng::standard_normals(61, rng::Stream::probe, i, 0, c);
        xs[static_cast<std::size_t>(i)] = HilbertVec{c, kStateBasis};
    }

    SUBCASE("zero functional costs nothing") {
        std::vector<HilbertVec> ys(static_cast<std::size_t>(n),
                                   HilbertVec{{0.0, 0.0}, kStateBasis});
        FitFunctionalOptions opts;
        opts.width_schedule = {8};
        opts.depth = 2;
        opts.restarts = 1;
        opts.train.epochs = 300;
        opts.tol = 1e-6;
        const FitFunctionalResult res = fit_functional(xs, ys, 3, 2, in_space, out_space, opts, 3);
        CHECK(res.achieved_mse < 1e-6);
        CHECK(res.reached_tol);

        // And the zero net realizes it exactly.
        DeepOnetSpec zero;
        zero.d = 3;
        zero.m = 2;
        zero.theta = make_mlp(std::vector<int>{3, 4, 2});
        zero.input_space = in_space;
        zero.output_space = out_space;
        double err = 0.0;
        for (const auto& x : xs) err += norm(deeponet_eval(zero, x));
        CHECK(err == 0.0);
    }
    SUBCASE("linear functional reaches 1e-4 at small width") {
        std::vector<HilbertVec> ys(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            ys[static_cast<std::size_t>(i)] =
                HilbertVec{{xs[static_cast<std::size_t>(i)].coeffs[0], 0.0}, kStateBasis};
        FitFunctionalOptions opts;
        opts.width_schedule = {8, 16};
        opts.depth = 2;
        opts.restarts = 2;
        opts.train.epochs = 300;
        opts.tol = 1e-4;
        const FitFunctionalResult res = fit_functional(xs, ys, 3, 2, in_space, out_space, opts, 5);
        CHECK(res.achieved_mse <= 1e-4);
    }
    SUBCASE("error curve is non-increasing in width up to restart noise") {
        std::vector<HilbertVec> ys(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            ys[static_cast<std::size_t>(i)] = HilbertVec{
                {std::sin(xs[static_cast<std::size_t>(i)].coeffs[0]), 0.0}, kStateBasis};
        FitFunctionalOptions opts;
        opts.width_schedule = {2, 8, 32};
        opts.depth = 2;
        opts.restarts = 2;
        opts.train.epochs = 120;
        opts.tol = 1e-12;  // never reached: walk the whole schedule
        const FitFunctionalResult res = fit_functional(xs, ys, 3, 2, in_space, out_space, opts, 9);
        REQUIRE(res.error_curve.size() == 3);
        CHECK(res.error_curve[2].second <= res.error_curve[0].second * 1.10 + 1e-10);
    }
}

#include <doctest.h>

#include <cmath>

#include "dbdp/mlp.hpp"
#include "dbdp/parallel.hpp"
#include "dbdp/rng.hpp"

using namespace dbdp;

namespace {

MlpParams scalar_chain() {
    // L = 2: W1 = (1), b1 = (-1), W2 = (2), b2 = (0.5).
    MlpParams p = make_mlp(std::vector<int>{1, 1, 1});
    p.layers[0].w = {1.0};
    p.layers[0].b = {-1.0};
    p.layers[1].w = {2.0};
    p.layers[1].b = {0.5};
    return p;
}

} // namespace

TEST_CASE("relu basics") {
    CHECK(relu(-1.0) == 0.0);
    CHECK(relu(3.0) == 3.0);
    CHECK(relu(0.0) == 0.0);
    for (double x : {-2.5, -0.1, 0.0, 0.3, 7.0}) CHECK(std::fabs(relu(x)) <= std::fabs(x));
}

TEST_CASE("forward evaluation") {
    SUBCASE("single affine layer is the identity map") {
        MlpParams p = make_mlp(std::vector<int>{3, 3});
        for (int k = 0; k < 3; ++k) p.layers[0].w[static_cast<std::size_t>(k) * 3 + k] = 1.0;
        const std::vector<double> x = {0.5, -2.0, 3.0};
        CHECK(mlp_forward(p, x) == x);  // no activation after the last layer
    }
    SUBCASE("two-layer hand evaluation") {
        const MlpParams p = scalar_chain();
        CHECK(mlp_forward(p, std::vector<double>{3.0})[0] == doctest::Approx(4.5));
        CHECK(mlp_forward(p, std::vector<double>{0.0})[0] == doctest::Approx(0.5));
    }
    SUBCASE("dimension mismatch throws") {
        const MlpParams p = scalar_chain();
        CHECK_THROWS_AS(mlp_forward(p, std::vector<double>{1.0, 2.0}), DimensionError);
    }
}

TEST_CASE("parameter count follows the layer sizes") {
    const MlpParams p = he_init(std::vector<int>{3, 5, 2}, 1, 1);
    CHECK(p.param_count() == (3 * 5 + 5) + (5 * 2 + 2));
}

TEST_CASE("reverse mode gradients") {
    SUBCASE("all-zero weights kill upstream gradients") {
        MlpParams p = make_mlp(std::vector<int>{2, 3, 1});
        const std::vector<double> x = {1.0, -2.0};
        const std::vector<double> adj = {1.0};
        const MlpParams g = mlp_backward_batch(p, x.data(), 1, adj.data());
        for (double v : g.layers[0].w) CHECK(v == 0.0);  // dead units, sigma'(0) = 0
    }
    SUBCASE("hand chain rule on the scalar chain") {
        const MlpParams p = scalar_chain();
        const std::vector<double> x = {3.0};
        const std::vector<double> adj = {1.0};
        const MlpParams g = mlp_backward_batch(p, x.data(), 1, adj.data());
        CHECK(g.layers[1].w[0] == doctest::Approx(2.0));  // d f / d W2 = relu(3 - 1)
        CHECK(g.layers[1].b[0] == doctest::Approx(1.0));
        CHECK(g.layers[0].w[0] == doctest::Approx(2.0 * 3.0));  // W2 * sigma' * x
        CHECK(g.layers[0].b[0] == doctest::Approx(2.0));
    }
    SUBCASE("finite differences agree to 1e-5 relative at smooth probes") {
        for (int net_id = 0; net_id < 4; ++net_id) {
            const std::vector<int> dims = {3, 8, 8, 2};
            MlpParams p = he_init(dims, 100 + static_cast<std::uint64_t>(net_id), 1);
            std::vector<double> x(3);
            rng::standard_normals(55, rng::Stream::probe, net_id, 0, x);

            // Loss = sum of outputs; adjoint of ones.
            const std::vector<double> adj = {1.0, 1.0};
            const MlpParams g = mlp_backward_batch(p, x.data(), 1, adj.data());

            auto loss = [&](const MlpParams& q) {
                const auto out = mlp_forward(q, x);
                return out[0] + out[1];
            };
            for (int probe = 0; probe < 10; ++probe) {
                const std::size_t li = probe % dims.size() % p.layers.size();
                const std::size_t wi =
                    rng::uniform_u32(9, rng::Stream::probe, net_id, probe) % p.layers[li].w.size();
                const double eps = 1e-6;
                MlpParams q = p;
                q.layers[li].w[wi] += eps;
                const double up = loss(q);
                q.layers[li].w[wi] -= 2 * eps;
                const double dn = loss(q);
                const double fd = (up - dn) / (2 * eps);
                const double an = g.layers[li].w[wi];
                CHECK(std::fabs(fd - an) <= 1e-5 * (1.0 + std::fabs(fd)));
            }
        }
    }
    SUBCASE("blocked parallel reduction matches the serial reference") {
        const std::vector<int> dims = {4, 16, 16, 3};
        const MlpParams p = he_init(dims, 31, 2);
        const int batch = 257;  // not a multiple of the block size
        std::vector<double> xs(static_cast<std::size_t>(batch) * 4);
        std::vector<double> adj(static_cast<std::size_t>(batch) * 3);
        rng::standard_normals(8, rng::Stream::probe, 1, 0, xs);
        rng::standard_normals(8, rng::Stream::probe, 2, 0, adj);
        const MlpParams gp = mlp_backward_batch(p, xs.data(), batch, adj.data());
        const MlpParams gs = mlp_backward_batch_serial(p, xs.data(), batch, adj.data());
        for (std::size_t li = 0; li < gp.layers.size(); ++li)
            for (std::size_t i = 0; i < gp.layers[li].w.size(); ++i)
                CHECK(gp.layers[li].w[i] ==
                      doctest::Approx(gs.layers[li].w[i]).epsilon(1e-12));

        // The block-ordered reduction is invariant to the worker count.
        set_worker_count(4);
        const MlpParams g4 = mlp_backward_batch(p, xs.data(), batch, adj.data());
        set_worker_count(0);
        for (std::size_t li = 0; li < gp.layers.size(); ++li) {
            CHECK(g4.layers[li].w == gp.layers[li].w);
            CHECK(g4.layers[li].b == gp.layers[li].b);
        }
    }
}

TEST_CASE("concatenation") {
    SUBCASE("layer counts add") {
        const MlpParams theta = he_init(std::vector<int>{2, 4, 3}, 1, 1);   // 2 layers
        const MlpParams gamma = he_init(std::vector<int>{3, 5, 6, 2}, 1, 2); // 3 layers
        CHECK(concat_params(gamma, theta).depth() == 5);

        const MlpParams a7 = he_init(std::vector<int>{2, 3, 3, 3, 3, 3, 3, 2}, 1, 3);
        CHECK(a7.depth() == 7);
        CHECK(concat_params(a7, a7).depth() == 14);

        const MlpParams wide = he_init(std::vector<int>{5, 4, 2}, 1, 4);
        CHECK_THROWS_AS(concat_params(wide, theta), DimensionError);  // 3 != 5
    }
    SUBCASE("realization applies the seam activation, same arithmetic") {
        const MlpParams theta = he_init(std::vector<int>{3, 6, 4}, 2, 1);
        const MlpParams gamma = he_init(std::vector<int>{4, 5, 2}, 2, 2);
        const MlpParams both = concat_params(gamma, theta);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<double> x(3);
            rng::standard_normals(77, rng::Stream::probe, trial, 0, x);
            auto mid = mlp_forward(theta, x);
            for (double& v : mid) v = relu(v);
            const auto expect = mlp_forward(gamma, mid);
            const auto got = mlp_forward(both, x);
            for (int k = 0; k < 2; ++k) CHECK(got[k] == expect[k]);  // exact
        }
    }
    SUBCASE("composition equals the plain function on nonnegative seams") {
        // The box clip shifted by +R1 has outputs in [0, 2 R1], so the seam
        // activation is a no-op and f_concat = f_gamma(f_theta(x)).
        const double R1 = 1.0;
        MlpParams shifted = clip_box_params(2, R1);
        for (auto& b : shifted.layers[2].b) b = 2.0 * R1;
        const MlpParams head = he_init(std::vector<int>{2, 4, 2}, 5, 1);
        const MlpParams both = concat_params(head, shifted);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> x(2);
            rng::standard_normals(78, rng::Stream::probe, trial, 0, x);
            const auto expect = mlp_forward(head, mlp_forward(shifted, x));
            const auto got = mlp_forward(both, x);
            for (int k = 0; k < 2; ++k) CHECK(got[k] == expect[k]);
        }
    }
    SUBCASE("associativity: (a.b).c == a.(b.c) pointwise") {
        const MlpParams a = he_init(std::vector<int>{3, 4, 2}, 9, 1);
        const MlpParams b = he_init(std::vector<int>{4, 5, 3}, 9, 2);
        const MlpParams c = he_init(std::vector<int>{2, 3, 4}, 9, 3);
        const MlpParams left = concat_params(concat_params(a, b), c);
        const MlpParams right = concat_params(a, concat_params(b, c));
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> x(2);
            rng::standard_normals(79, rng::Stream::probe, trial, 0, x);
            CHECK(mlp_forward(left, x) == mlp_forward(right, x));
        }
    }
}

TEST_CASE("growth constants of two-layer nets") {
    SUBCASE("hand arithmetic") {
        MlpParams p = make_mlp(std::vector<int>{1, 1, 1});
        p.layers[0].w = {2.0};
        p.layers[1].w = {3.0};
        const GrowthConstants g = growth_constants(p);
        CHECK(g.c1 == doctest::Approx(144.0));  // 4 * 9 * 4
        CHECK(g.c2 == doctest::Approx(0.0));
    }
    SUBCASE("all-zero net") {
        const MlpParams p = make_mlp(std::vector<int>{2, 3, 2});
        const GrowthConstants g = growth_constants(p);
        CHECK(g.c1 == 0.0);
        CHECK(g.c2 == 0.0);
        CHECK(mlp_forward(p, std::vector<double>{0.0, 0.0}) == std::vector<double>{0.0, 0.0});
    }
    SUBCASE("bound holds on random nets and inputs, p = 2 and p = 4") {
        for (int net_id = 0; net_id < 10; ++net_id) {
            const MlpParams p = he_init(std::vector<int>{3, 7, 2}, 500 + static_cast<std::uint64_t>(net_id), 1);
            const GrowthConstants g2 = growth_constants(p);
            const GrowthConstants g4 = growth_constants_p(p, 4.0);
            for (int trial = 0; trial < 1000; ++trial) {
                std::vector<double> x(3);
                rng::standard_normals(600 + net_id, rng::Stream::probe, trial, 0, x);
                for (double& v : x) v *= 3.0;
                const auto out = mlp_forward(p, x);
                double fn2 = 0.0, xn2 = 0.0;
                for (double v : out) fn2 += v * v;
                for (double v : x) xn2 += v * v;
                CHECK(fn2 <= g2.c1 * xn2 + g2.c2 + 1e-9);
                CHECK(fn2 * fn2 <= g4.c1 * xn2 * xn2 + g4.c2 + 1e-9);
            }
        }
    }
    SUBCASE("depth guard") {
        CHECK_THROWS_AS(growth_constants(he_init(std::vector<int>{2, 3, 3, 2}, 1, 1)),
                        DimensionError);
    }
}

TEST_CASE("box clip network is exact") {
    const MlpParams gamma = clip_box_params(1, 1.0);
    CHECK(gamma.depth() == 3);
    CHECK(mlp_forward(gamma, std::vector<double>{2.0})[0] == doctest::Approx(1.0));
    CHECK(mlp_forward(gamma, std::vector<double>{-3.0})[0] == doctest::Approx(-1.0));
    CHECK(mlp_forward(gamma, std::vector<double>{0.5})[0] == doctest::Approx(0.5));

    const MlpParams g2 = clip_box_params(3, 0.7);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x(3);
        rng::standard_normals(41, rng::Stream::probe, trial, 0, x);
        for (double& v : x) v *= 2.0;
        const auto out = mlp_forward(g2, x);
        for (int k = 0; k < 3; ++k) {
            const double expect = std::min(std::max(x[static_cast<std::size_t>(k)], -0.7), 0.7);
            CHECK(out[static_cast<std::size_t>(k)] == doctest::Approx(expect).epsilon(1e-15));
        }
    }
}

TEST_CASE("networks are piecewise affine between activation kinks") {
    const MlpParams p = he_init(std::vector<int>{2, 6, 1}, 13, 1);
    // Pick a segment short enough that no hidden unit changes sign, then the
    // restriction must be exactly affine: f(mid) = (f(a) + f(b)) / 2.
    const std::vector<double> x0 = {0.40, -0.30};
    const std::vector<double> dir = {1e-4, 2e-4};
    auto at = [&](double s) {
        std::vector<double> x = {x0[0] + s * dir[0], x0[1] + s * dir[1]};
        return mlp_forward(p, x)[0];
    };
    auto pattern = [&](double s) {
        std::vector<double> x = {x0[0] + s * dir[0], x0[1] + s * dir[1]};
        unsigned mask = 0;
        const auto& l = p.layers[0];
        for (int o = 0; o < 6; ++o) {
            double acc = l.b[static_cast<std::size_t>(o)];
            for (int j = 0; j < 2; ++j) acc += l.w[static_cast<std::size_t>(o) * 2 + j] * x[static_cast<std::size_t>(j)];
            mask = (mask << 1) | (acc > 0.0 ? 1u : 0u);
        }
        return mask;
    };
    REQUIRE(pattern(0.0) == pattern(1.0));
    CHECK(at(0.5) == doctest::Approx(0.5 * (at(0.0) + at(1.0))).epsilon(1e-12));
}

TEST_CASE("adam update") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        MlpParams p = he_init(std::vector<int>{2, 3, 1}, 3, 1);
        const MlpParams copy = p;
        const MlpParams zero = make_mlp(std::vector<int>{2, 3, 1});
        AdamState st = AdamState::for_params(p.param_count());
        adam_step(p, zero, st, AdamHyper{});
        for (std::size_t li = 0; li < p.layers.size(); ++li)
            CHECK(p.layers[li].w == copy.layers[li].w);
    }
    SUBCASE("constant gradient moves against its sign") {
        MlpParams p = make_mlp(std::vector<int>{1, 1});
        MlpParams g = make_mlp(std::vector<int>{1, 1});
        g.layers[0].w[0] = 0.7;  // positive gradient
        AdamState st = AdamState::for_params(p.param_count());
        for (int i = 0; i < 50; ++i) adam_step(p, g, st, AdamHyper{});
        CHECK(p.layers[0].w[0] < 0.0);
    }
    SUBCASE("converges on a scalar quadratic") {
        // Loss (theta - 3)^2 from theta = 0 with lr = 0.05 and 500 steps.
        MlpParams p = make_mlp(std::vector<int>{1, 1});
        AdamState st = AdamState::for_params(p.param_count());
        AdamHyper hyper;
        hyper.lr = 0.05;
        for (int i = 0; i < 500; ++i) {
            MlpParams g = make_mlp(std::vector<int>{1, 1});
            g.layers[0].w[0] = 2.0 * (p.layers[0].w[0] - 3.0);
            adam_step(p, g, st, hyper);
        }
        CHECK(std::fabs(p.layers[0].w[0] - 3.0) < 0.01);
    }
    SUBCASE("non-finite gradient raises an optimizer error") {
        MlpParams p = make_mlp(std::vector<int>{1, 1});
        MlpParams g = make_mlp(std::vector<int>{1, 1});
        g.layers[0].w[0] = std::numeric_limits<double>::quiet_NaN();
        AdamState st = AdamState::for_params(p.param_count());
        CHECK_THROWS_AS(adam_step(p, g, st, AdamHyper{}), NumericError);
    }
}

TEST_CASE("clipping network meets the two clip conditions") {
    ClipFitBudget budget;
    budget.width = 32;
    budget.epochs = 60;
    budget.samples = 1024;
    budget.restarts = 1;
    const double R1 = 1.0, R2 = 2.0, eps = 0.05;
    const ClippingResult res = clipping_network(2, R1, R2, eps, budget, 2025);
    CHECK(res.params.depth() == 5);
    CHECK(res.ball_error < eps);
    CHECK(res.max_norm < R2);

    // x = 0 sits inside the ball, so the output is eps-close to 0.
    std::vector<double> out = mlp_forward(res.params, std::vector<double>{0.0, 0.0});
    CHECK(std::sqrt(out[0] * out[0] + out[1] * out[1]) < eps);

    CHECK_THROWS_AS(clipping_network(2, 1.0, 2.0, 1.5, budget, 1), ConfigError);  // eps >= R2-R1
    CHECK_THROWS_AS(clipping_network(2, 2.0, 1.0, 0.1, budget, 1), ConfigError);
}

TEST_CASE("regression fitter learns a smooth target") {
    const int n = 512;
    std::vector<double> X(static_cast<std::size_t>(n) * 2), Y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        rng::standard_normals(123, rng::Stream::probe, i, 0,
                              {X.data() + static_cast<std::size_t>(i) * 2, 2});
        Y[static_cast<std::size_t>(i)] = 0.5 * X[static_cast<std::size_t>(i) * 2] -
                                         0.25 * X[static_cast<std::size_t>(i) * 2 + 1];
    }
    RegressionOptions opts;
    opts.width = 16;
    opts.depth = 2;
    opts.epochs = 150;
    const RegressionResult res = fit_regression(X.data(), Y.data(), n, 2, 1, opts, 7, 1);
    CHECK(res.holdout_mse < 1e-3);
    CHECK(res.epoch_losses.size() == 150);
}

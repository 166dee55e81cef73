#include <doctest.h>

#include <cmath>

#include "dbdp/oracles.hpp"
#include "dbdp/rng.hpp"

using namespace dbdp;

namespace {

ModelProblem linear_ou(int K, double T, double r = 0.0) {
    ModelProblem p;
    p.state_dim = K;
    p.noise_dim = K;
    p.T = T;
    p.generator.a.resize(static_cast<std::size_t>(K));
    for (int k = 1; k <= K; ++k)
        p.generator.a[static_cast<std::size_t>(k - 1)] = -static_cast<double>(k) * k;
    p.q = CovarianceSpec::poly_decay(K, 2.0);
    p.diffusion = canonical_injection_diffusion(p.q, K);
    p.phi = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return s;
    };
    if (r > 0.0) {
        p.psi.value = [r](double, std::span<const double>, double y, std::span<const double>,
                          const CovarianceSpec&) { return -r * y; };
        p.psi.dy = [r](double, std::span<const double>, double, std::span<const double>,
                       const CovarianceSpec&) { return -r; };
        p.psi.lipschitz = r;
        p.psi.lipschitz_y = r;
    }
    return p;
}

} // namespace

TEST_CASE("monte carlo oracle") {
    SUBCASE("psi = 0, phi = 1 is exact with zero variance") {
        ModelProblem p = linear_ou(2, 0.5);
        p.phi = [](std::span<const double>) { return 1.0; };
        const McOracleResult res =
            mc_solution_oracle(p, 0.0, std::vector<double>{0.3, -0.1}, 10, 500, 1, 3);
        CHECK(res.estimate == doctest::Approx(1.0));
        CHECK(res.std_error == doctest::Approx(0.0));
    }
    SUBCASE("matches the closed form on the linear problem within 3 SE") {
        const ModelProblem p = linear_ou(2, 0.5);
        const LinearOUOracle oracle{p.generator.a, p.q, p.T, 0.0};
        const std::vector<double> x = {1.0, 0.5};
        const McOracleResult res = mc_solution_oracle(p, 0.0, x, 80, 20000, 1, 5);
        const double exact = oracle.u(0.0, x);
        // 3 SE plus a small discretization allowance for the finite fine grid.
        CHECK(std::fabs(res.estimate - exact) <= 3.0 * res.std_error + 0.01 * exact);
    }
    SUBCASE("discounting scales the estimate by exp(-r (T-t))") {
        const double r = 0.4, T = 0.5;
        const ModelProblem p0 = linear_ou(2, T);
        const ModelProblem pr = linear_ou(2, T, r);
        const std::vector<double> x = {1.0, 0.5};
        const McOracleResult e0 = mc_solution_oracle(p0, 0.0, x, 60, 20000, 1, 7);
        const McOracleResult er = mc_solution_oracle(pr, 0.0, x, 60, 20000, 8, 7);
        const double expect = e0.estimate * std::exp(-r * T);
        CHECK(std::fabs(er.estimate - expect) <=
              3.0 * (e0.std_error + er.std_error) + 0.01 * expect);
        // Picard deltas contract.
        REQUIRE(er.picard_deltas.size() >= 2);
        CHECK(er.picard_deltas[1] < er.picard_deltas[0]);
    }
    SUBCASE("terminal time returns phi directly") {
        const ModelProblem p = linear_ou(1, 0.5);
        const McOracleResult res =
            mc_solution_oracle(p, 0.5, std::vector<double>{2.0}, 10, 10, 1, 1);
        CHECK(res.estimate == doctest::Approx(4.0));
    }
    SUBCASE("an interval too long for the declared Lipschitz bound is refused") {
        const ModelProblem p = linear_ou(1, 0.5, 4.0);  // (T-t) Lip_y = 2
        CHECK_THROWS_AS(mc_solution_oracle(p, 0.0, std::vector<double>{1.0}, 10, 100, 3, 1),
                        ConfigError);
    }
}

TEST_CASE("closed-form oracle self-consistency") {
    const ModelProblem p = linear_ou(3, 0.5);
    const LinearOUOracle oracle{p.generator.a, p.q, p.T, 0.0};
    // At t = T the value is phi and the gradient is 2x.
    const std::vector<double> x = {0.3, -0.2, 0.9};
    CHECK(oracle.u(p.T, x) == doctest::Approx(p.phi(x)));
    std::vector<double> g(3);
    oracle.grad_u(p.T, x, g);
    for (int k = 0; k < 3; ++k) CHECK(g[static_cast<std::size_t>(k)] == doctest::Approx(2.0 * x[static_cast<std::size_t>(k)]));
    // Gradient against finite differences somewhere in the interior.
    std::vector<double> xp = x;
    oracle.grad_u(0.2, x, g);
    for (int k = 0; k < 3; ++k) {
        const double eps = 1e-6;
        xp[static_cast<std::size_t>(k)] = x[static_cast<std::size_t>(k)] + eps;
        const double up = oracle.u(0.2, xp);
        xp[static_cast<std::size_t>(k)] = x[static_cast<std::size_t>(k)] - eps;
        const double dn = oracle.u(0.2, xp);
        xp[static_cast<std::size_t>(k)] = x[static_cast<std::size_t>(k)];
        CHECK(g[static_cast<std::size_t>(k)] == doctest::Approx((up - dn) / (2 * eps)).epsilon(1e-6));
    }
}

TEST_CASE("nested conditional expectations") {
    const int K = 2;
    const TimeGrid grid = make_grid(0.5, 5);
    const ModelProblem p = linear_ou(K, 0.5);
    std::vector<HilbertVec> probes = {HilbertVec{{0.5, -0.3}, kStateBasis},
                                      HilbertVec{{1.0, 0.0}, kStateBasis}};

    SUBCASE("constant u_next has vanishing zbar") {
        const auto c_next = [](std::span<const double>) { return 3.0; };
        const NestedConditional nc = estimate_zbar_hat(1, c_next, probes, p, grid, 20000, 5);
        for (int pr = 0; pr < nc.probes; ++pr) {
            CHECK(nc.mean_u[static_cast<std::size_t>(pr)] == doctest::Approx(3.0));
            for (int k = 0; k < K; ++k) {
                // 3 SE of (1/h) E[c dbeta]: sd = c / sqrt(h R).
                const double band = 3.0 * 3.0 / std::sqrt(grid.h * 20000);
                CHECK(std::fabs(nc.zbar[static_cast<std::size_t>(pr) * K + k]) <= band);
            }
        }
    }
    SUBCASE("linear u_next recovers sqrt(lambda_1) e^{a_1 h}") {
        const auto lin_next = [](std::span<const double> x) { return x[0]; };
        const NestedConditional nc = estimate_zbar_hat(1, lin_next, probes, p, grid, 40000, 6);
        const double expect = std::sqrt(p.q.eigenvalues[0]) * std::exp(p.generator.a[0] * grid.h);
        for (int pr = 0; pr < nc.probes; ++pr)
            CHECK(nc.zbar[static_cast<std::size_t>(pr) * K] == doctest::Approx(expect).epsilon(0.05));
    }
    SUBCASE("zero diffusion gives exactly zero") {
        ModelProblem pz = linear_ou(K, 0.5);
        pz.diffusion = zero_diffusion();
        const auto lin_next = [](std::span<const double> x) { return x[0] + x[1]; };
        const NestedConditional nc = estimate_zbar_hat(1, lin_next, probes, pz, grid, 500, 7);
        for (double v : nc.zbar) CHECK(v == 0.0);
    }
}

TEST_CASE("implicit one-step values") {
    const int K = 2;
    const TimeGrid grid = make_grid(0.5, 5);  // h = 0.1
    std::vector<HilbertVec> probes = {HilbertVec{{0.5, -0.3}, kStateBasis},
                                      HilbertVec{{-1.0, 0.2}, kStateBasis}};
    const auto next = [](std::span<const double> x) { return x[0] * x[0] + x[1]; };

    SUBCASE("psi = 0 needs no iterations") {
        const ModelProblem p = linear_ou(K, 0.5);
        const VhatResult vh = solve_vhat(1, next, probes, p, grid, 2000, 9);
        CHECK(vh.iterations == 0);
        for (int pr = 0; pr < 2; ++pr)
            CHECK(vh.vhat[static_cast<std::size_t>(pr)] == vh.cond.mean_u[static_cast<std::size_t>(pr)]);
    }
    SUBCASE("constant psi closes after one effective iteration") {
        ModelProblem p = linear_ou(K, 0.5);
        const double kappa = 0.7;
        p.psi.value = [kappa](double, std::span<const double>, double, std::span<const double>,
                              const CovarianceSpec&) { return kappa; };
        p.psi.lipschitz = 0.0;
        p.psi.lipschitz_y = 0.0;
        const VhatResult vh = solve_vhat(1, next, probes, p, grid, 2000, 9);
        for (int pr = 0; pr < 2; ++pr)
            CHECK(vh.vhat[static_cast<std::size_t>(pr)] ==
                  doctest::Approx(vh.cond.mean_u[static_cast<std::size_t>(pr)] + kappa * grid.h));
    }
    SUBCASE("linear psi solves the scalar fixed point with geometric residuals") {
        const double r = 0.8;
        const ModelProblem p = linear_ou(K, 0.5, r);
        const VhatResult vh = solve_vhat(1, next, probes, p, grid, 2000, 9, 1e-12);
        for (int pr = 0; pr < 2; ++pr)
            CHECK(vh.vhat[static_cast<std::size_t>(pr)] ==
                  doctest::Approx(vh.cond.mean_u[static_cast<std::size_t>(pr)] / (1.0 + r * grid.h))
                      .epsilon(1e-10));
        // Residual ratio <= h Lip_y(psi) until rounding noise takes over.
        for (std::size_t m = 1; m < vh.residual_history.size(); ++m)
            if (vh.residual_history[m - 1] > 1e-9)
                CHECK(vh.residual_history[m] <=
                      grid.h * r * vh.residual_history[m - 1] + 1e-14);
    }
    SUBCASE("contraction violation is rejected") {
        const ModelProblem p = linear_ou(K, 0.5, 25.0);  // h Lip = 2.5
        CHECK_THROWS_AS(solve_vhat(1, next, probes, p, grid, 100, 9), ConfigError);
    }
}

TEST_CASE("error functional") {
    const TimeGrid fine = make_grid(1.0, 8);
    const int paths = 3, dim = 2, coarse_N = 2;

    SUBCASE("identical inputs give zero") {
        std::vector<double> fine_vals(static_cast<std::size_t>(paths) * 9 * dim, 0.6);
        std::vector<double> step_vals(static_cast<std::size_t>(paths) * coarse_N * dim, 0.6);
        CHECK(error_functional(fine_vals.data(), 8, step_vals.data(), coarse_N, paths, dim,
                               fine) == doctest::Approx(0.0));
    }
    SUBCASE("constant against zero integrates h ||c||^2 per step") {
        const TimeGrid one = make_grid(0.5, 4);
        std::vector<double> fine_vals(static_cast<std::size_t>(paths) * 5 * dim);
        for (std::size_t i = 0; i < fine_vals.size(); i += 2) {
            fine_vals[i] = 3.0;
            fine_vals[i + 1] = 4.0;
        }
        std::vector<double> step_vals(static_cast<std::size_t>(paths) * 1 * dim, 0.0);
        // One coarse step of width 0.5, ||c||^2 = 25.
        CHECK(error_functional(fine_vals.data(), 4, step_vals.data(), 1, paths, dim, one) ==
              doctest::Approx(0.5 * 25.0));
    }
    SUBCASE("quadratic scaling and grid mismatch") {
        std::vector<double> fine_vals(static_cast<std::size_t>(paths) * 9 * dim, 1.0);
        std::vector<double> step_vals(static_cast<std::size_t>(paths) * coarse_N * dim, 0.0);
        const double base = error_functional(fine_vals.data(), 8, step_vals.data(), coarse_N,
                                             paths, dim, fine);
        for (double& v : fine_vals) v *= 2.0;
        CHECK(error_functional(fine_vals.data(), 8, step_vals.data(), coarse_N, paths, dim,
                               fine) == doctest::Approx(4.0 * base));
        CHECK_THROWS_AS(
            error_functional(fine_vals.data(), 8, step_vals.data(), 3, paths, dim, fine),
            DimensionError);
    }
}

TEST_CASE("capacity gap estimates") {
    const int n = 256, d = 2;
    std::vector<double> X(static_cast<std::size_t>(n) * d);
    for (int i = 0; i < n; ++i)
        rng::standard_normals(7, rng::Stream::probe, i, 0,
                              {X.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)});

    CapacityOptions opts;
    opts.width = 16;
    opts.depth = 2;
    opts.restarts = 2;
    opts.train.epochs = 300;

    SUBCASE("near-zero cost on the zero target; the zero net realizes it") {
        std::vector<double> Y(static_cast<std::size_t>(n), 0.0);
        CHECK(capacity_gap(X.data(), n, d, Y.data(), 1, opts, 3, 1) < 1e-4);
        const MlpParams zero = make_mlp(std::vector<int>{d, 4, 1});
        for (int i = 0; i < n; ++i)
            CHECK(mlp_forward(zero, {X.data() + static_cast<std::size_t>(i) * d,
                                     static_cast<std::size_t>(d)})[0] == 0.0);
    }
    SUBCASE("linear target is representable at modest width") {
        std::vector<double> Y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            Y[static_cast<std::size_t>(i)] = 0.8 * X[static_cast<std::size_t>(i) * d] -
                                             0.3 * X[static_cast<std::size_t>(i) * d + 1];
        CapacityOptions wide = opts;
        wide.train.epochs = 200;
        CHECK(capacity_gap(X.data(), n, d, Y.data(), 1, wide, 3, 2) < 1e-3);
    }
}

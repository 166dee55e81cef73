#include "dbdp/problem.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dbdp/rng.hpp"

namespace dbdp {

DiffusionSpec zero_diffusion() {
    DiffusionSpec d;
    d.whitened_columns = nullptr;
    d.lipschitz_bound = 0.0;
    d.growth_bound = 0.0;
    return d;
}

DiffusionSpec canonical_injection_diffusion(const CovarianceSpec& q, int state_dim) {
    const int n = q.dim();
    if (n > state_dim)
        throw ConfigError("canonical_injection_diffusion: noise_dim exceeds state_dim");
    std::vector<double> roots(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) roots[static_cast<std::size_t>(j)] = std::sqrt(q.eigenvalues[j]);
    DiffusionSpec d;
    d.whitened_columns = [roots, n](double, std::span<const double>, std::span<double> cols) {
        std::fill(cols.begin(), cols.end(), 0.0);
        for (int j = 0; j < n; ++j) cols[static_cast<std::size_t>(j) * n + j] = roots[static_cast<std::size_t>(j)];
    };
    // State-independent, so Lipschitz constant 0; Hilbert-Schmidt norm^2 = tr(Q).
    d.lipschitz_bound = 0.0;
    d.growth_bound = std::sqrt(q.trace);
    return d;
}

void ModelProblem::validate() const {
    if (state_dim < 1) throw ConfigError("ModelProblem: state_dim must be >= 1");
    if (noise_dim < 1) throw ConfigError("ModelProblem: noise_dim must be >= 1");
    if (generator.dim() != state_dim)
        throw ConfigError("ModelProblem: generator has " + std::to_string(generator.dim()) +
                          " eigenvalues, expected " + std::to_string(state_dim));
    for (double a : generator.a)
        if (a > 0.0) throw ConfigError("ModelProblem: generator eigenvalue > 0 (not dissipative)");
    if (q.dim() != noise_dim)
        throw ConfigError("ModelProblem: covariance has " + std::to_string(q.dim()) +
                          " modes, expected " + std::to_string(noise_dim));
    if (!(T > 0.0)) throw ConfigError("ModelProblem: horizon T must be > 0");
    if (!phi) throw ConfigError("ModelProblem: terminal functional phi missing");
    if (psi.lipschitz < 0.0 || psi.lipschitz_y < 0.0)
        throw ConfigError("ModelProblem: negative Lipschitz declaration");
}

double ModelProblem::psi_value(double t, std::span<const double> x, double y,
                               std::span<const double> zeta) const {
    if (!psi.value) return 0.0;
    return psi.value(t, x, y, zeta, q);
}

double ModelProblem::psi_dy(double t, std::span<const double> x, double y,
                            std::span<const double> zeta) const {
    if (!psi.value) return 0.0;
    if (psi.dy) return psi.dy(t, x, y, zeta, q);
    const double step = 1e-6 * (1.0 + std::fabs(y));
    return (psi.value(t, x, y + step, zeta, q) - psi.value(t, x, y - step, zeta, q)) /
           (2.0 * step);
}

void ModelProblem::psi_dzeta(double t, std::span<const double> x, double y,
                             std::span<const double> zeta, std::span<double> out) const {
    if (!psi.value) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    if (psi.dzeta) {
        psi.dzeta(t, x, y, zeta, q, out);
        return;
    }
    std::vector<double> probe(zeta.begin(), zeta.end());
    for (int k = 0; k < static_cast<int>(zeta.size()); ++k) {
        const double step = 1e-6 * (1.0 + std::fabs(zeta[static_cast<std::size_t>(k)]));
        probe[static_cast<std::size_t>(k)] = zeta[static_cast<std::size_t>(k)] + step;
        const double up = psi.value(t, x, y, probe, q);
        probe[static_cast<std::size_t>(k)] = zeta[static_cast<std::size_t>(k)] - step;
        const double dn = psi.value(t, x, y, probe, q);
        probe[static_cast<std::size_t>(k)] = zeta[static_cast<std::size_t>(k)];
        out[static_cast<std::size_t>(k)] = (up - dn) / (2.0 * step);
    }
}

namespace {

void random_state(std::uint64_t seed, std::uint64_t id, int dim, std::vector<double>& out) {
    out.resize(static_cast<std::size_t>(dim));
    rng::standard_normals(seed, rng::Stream::probe, id, 0, out);
}

} // namespace

void spot_check_assumptions(const ModelProblem& problem, std::uint64_t seed, int trials) {
    problem.validate();
    const int K = problem.state_dim;
    const int n = problem.noise_dim;
    const double slack = 1.0 + 1e-9;

    std::vector<double> x, xp, fx, fxp, cols, colsp, zeta, zetap;
    cols.resize(static_cast<std::size_t>(K) * n);
    colsp.resize(static_cast<std::size_t>(K) * n);
    fx.resize(static_cast<std::size_t>(K));
    fxp.resize(static_cast<std::size_t>(K));

    for (int trial = 0; trial < trials; ++trial) {
        random_state(seed, 2 * static_cast<std::uint64_t>(trial), K, x);
        random_state(seed, 2 * static_cast<std::uint64_t>(trial) + 1, K, xp);
        const double t = problem.T * rng::uniform_unit(seed, rng::Stream::probe, trial, 7);

        double dx2 = 0.0, nx2 = 0.0;
        for (int k = 0; k < K; ++k) {
            dx2 += (x[k] - xp[k]) * (x[k] - xp[k]);
            nx2 += x[k] * x[k];
        }
        const double dx = std::sqrt(dx2);

        // F and B share one declared constant pair, so the probe checks the
        // combined quantities ||dF|| + ||dB||_HS and ||F||^2 + ||B||^2_HS.
        double lip_lhs = 0.0, growth_lhs = 0.0;
        if (problem.drift) {
            problem.drift(t, x, fx);
            problem.drift(t, xp, fxp);
            double d = 0.0, g = 0.0;
            for (int k = 0; k < K; ++k) {
                d += (fx[k] - fxp[k]) * (fx[k] - fxp[k]);
                g += fx[k] * fx[k];
            }
            lip_lhs += std::sqrt(d);
            growth_lhs += g;
        }
        if (problem.diffusion.whitened_columns) {
            problem.diffusion.whitened_columns(t, x, cols);
            problem.diffusion.whitened_columns(t, xp, colsp);
            double d = 0.0, g = 0.0;
            for (std::size_t i = 0; i < cols.size(); ++i) {
                d += (cols[i] - colsp[i]) * (cols[i] - colsp[i]);
                g += cols[i] * cols[i];
            }
            lip_lhs += std::sqrt(d);
            growth_lhs += g;
        }
        if (lip_lhs > problem.diffusion.lipschitz_bound * dx * slack + 1e-12)
            throw ConfigError("spot_check: F/B violate the declared Lipschitz bound");
        const double gb = problem.diffusion.growth_bound;
        if (growth_lhs > gb * gb * (1.0 + nx2) * slack + 1e-12)
            throw ConfigError("spot_check: F/B violate the declared growth bound");
        if (problem.psi.value) {
            zeta.resize(static_cast<std::size_t>(n));
            zetap.resize(static_cast<std::size_t>(n));
            rng::standard_normals(seed, rng::Stream::probe, 1000 + trial, 0, zeta);
            rng::standard_normals(seed, rng::Stream::probe, 1000 + trial, 1, zetap);
            const double y = zeta[0];
            const double yp = zetap[0];
            const double lhs = std::fabs(problem.psi_value(t, x, y, zeta) -
                                         problem.psi_value(t, xp, yp, zetap));
            WhitenedNoiseVec dz;
            dz.zeta.resize(static_cast<std::size_t>(n));
            for (int k = 0; k < n; ++k) dz.zeta[static_cast<std::size_t>(k)] = zeta[static_cast<std::size_t>(k)] - zetap[static_cast<std::size_t>(k)];
            const double rhs =
                problem.psi.lipschitz * (dx + std::fabs(y - yp) + v_norm(dz, problem.q));
            if (lhs > rhs * slack + 1e-12)
                throw ConfigError("spot_check: psi violates declared Lipschitz bound");
        }
    }
}

} // namespace dbdp

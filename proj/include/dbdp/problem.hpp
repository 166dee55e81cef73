#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dbdp/hilbert.hpp"

namespace dbdp {

// Diagonal generator A on the state basis: A e_k = a_k e_k with a_k <= 0, so
// the semigroup acts mode-wise as multiplication by exp(a_k t).
struct GeneratorSpec {
    std::vector<double> a;

    int dim() const { return static_cast<int>(a.size()); }
};

using DriftFn =
    std::function<void(double t, std::span<const double> x, std::span<double> out)>;

// Writes the K x n matrix M with column j = B(t,x)(sqrt(lambda_j) f_j) in
// state coefficients; row-major, cols[k * n + j].
using DiffusionColumnsFn =
    std::function<void(double t, std::span<const double> x, std::span<double> cols)>;

// The declared bounds are joint for drift and diffusion, matching the single
// constant of the standing assumptions: ||dF|| + ||dB||_HS <= lipschitz_bound
// * ||dx|| and ||F||^2 + ||B||^2_HS <= growth_bound^2 * (1 + ||x||^2).
struct DiffusionSpec {
    DiffusionColumnsFn whitened_columns;  // null => B == 0
    double lipschitz_bound = 0.0;
    double growth_bound = 0.0;
};

// B == 0.
DiffusionSpec zero_diffusion();

// B(t,x) = canonical injection V -> H: column j = sqrt(lambda_j) e_j.
// Needs noise_dim <= state_dim.
DiffusionSpec canonical_injection_diffusion(const CovarianceSpec& q, int state_dim);

// Driver psi(t, x, y, z) with z in whitened coordinates. Partial derivatives
// are optional; missing ones fall back to central finite differences.
struct Nonlinearity {
    using ValueFn = std::function<double(double t, std::span<const double> x, double y,
                                         std::span<const double> zeta,
                                         const CovarianceSpec& q)>;
    using DyFn = ValueFn;
    using DzFn = std::function<void(double t, std::span<const double> x, double y,
                                    std::span<const double> zeta, const CovarianceSpec& q,
                                    std::span<double> out)>;

    ValueFn value;  // null => psi == 0
    DyFn dy;
    DzFn dzeta;
    double lipschitz = 0.0;    // constant of the full (t,x,y,z) bound, z in the V norm
    double lipschitz_y = 0.0;  // y-only constant; drives the fixed-point contraction
};

// One instance of the terminal-value problem: generator, drift, diffusion,
// driver, terminal functional and noise covariance, all on K state modes and
// n noise modes.
struct ModelProblem {
    int state_dim = 0;
    int noise_dim = 0;
    GeneratorSpec generator;
    DriftFn drift;  // null => F == 0
    DiffusionSpec diffusion;
    Nonlinearity psi;
    std::function<double(std::span<const double> x)> phi;
    double T = 1.0;
    CovarianceSpec q;

    void validate() const;

    double psi_value(double t, std::span<const double> x, double y,
                     std::span<const double> zeta) const;
    double psi_dy(double t, std::span<const double> x, double y,
                  std::span<const double> zeta) const;
    void psi_dzeta(double t, std::span<const double> x, double y,
                   std::span<const double> zeta, std::span<double> out) const;
};

// Random-pair probe of the declared Lipschitz/growth bounds of F, B and psi
// (z-distance taken in the V norm). Throws ConfigError on a violation beyond
// slack; a probe is not a proof, it catches misdeclared presets.
void spot_check_assumptions(const ModelProblem& problem, std::uint64_t seed, int trials = 64);

} // namespace dbdp

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dbdp/errors.hpp"

namespace dbdp {

// Spectral representation: an element of a separable Hilbert space is stored
// as its first K coefficients on a fixed orthonormal basis. Which basis the
// coefficients refer to is tracked by a small integer tag.
using BasisId = std::uint32_t;

constexpr BasisId kStateBasis = 1;  // H, basis (e_k)
constexpr BasisId kNoiseBasis = 2;  // V, basis (f_k)

struct HilbertVec {
    std::vector<double> coeffs;
    BasisId basis_id = kStateBasis;

    int dim() const { return static_cast<int>(coeffs.size()); }
};

double norm(const HilbertVec& x);

// P_k: zeroes every coefficient beyond index k. 1 <= k <= dim.
HilbertVec project(const HilbertVec& x, int k);

// Smallest k with max_x ||x - P_k x|| <= eps over the given sample of points.
// A finite sample stands in for the compact set the projection lemma speaks
// about; with K modes P_K is the identity, so a valid k always exists.
int min_projection_dim(std::span<const HilbertVec> points, double eps);

// Eigenvalues of the trace-class covariance Q on the noise space, all > 0.
// Zero modes carry no noise and are dropped at construction; negatives are
// rejected. `trace` is the truncated trace, exactly the sum of what is kept.
struct CovarianceSpec {
    std::vector<double> eigenvalues;
    double trace = 0.0;

    int dim() const { return static_cast<int>(eigenvalues.size()); }
    double max_eigenvalue() const;
    double min_eigenvalue() const;

    static CovarianceSpec from_eigenvalues(std::vector<double> lambdas);
    // lambda_k = scale * k^(-exponent); exponent > 1 so the untruncated tail
    // stays summable and Q is genuinely trace class.
    static CovarianceSpec poly_decay(int n, double exponent, double scale = 1.0);
};

// Element of the Cameron-Martin space V_0 = Q^{1/2} V in whitened coordinates
// zeta_k = <Q^{-1/2} z, f_k>_V. In these coordinates <.,.>_0 is Euclidean and
// the discrete stochastic pairing is a plain dot product with the increments.
struct WhitenedNoiseVec {
    std::vector<double> zeta;

    int dim() const { return static_cast<int>(zeta.size()); }
};

double inner_0(const WhitenedNoiseVec& a, const WhitenedNoiseVec& b);
double norm_0(const WhitenedNoiseVec& z);

// ||z||_V = sqrt(sum lambda_k zeta_k^2); bounded by sqrt(max lambda) * ||z||_0.
double v_norm(const WhitenedNoiseVec& z, const CovarianceSpec& q);

} // namespace dbdp

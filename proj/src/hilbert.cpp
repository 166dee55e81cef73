#include "dbdp/hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dbdp {

double norm(const HilbertVec& x) {
    double s = 0.0;
    for (double c : x.coeffs) s += c * c;
    return std::sqrt(s);
}

HilbertVec project(const HilbertVec& x, int k) {
    if (k < 1 || k > x.dim())
        throw DimensionError("project: k=" + std::to_string(k) + " outside [1," +
                             std::to_string(x.dim()) + "]");
    HilbertVec out = x;
    std::fill(out.coeffs.begin() + k, out.coeffs.end(), 0.0);
    return out;
}

int min_projection_dim(std::span<const HilbertVec> points, double eps) {
    if (points.empty()) throw DimensionError("min_projection_dim: empty point set");
    if (!(eps > 0.0)) throw DimensionError("min_projection_dim: eps must be > 0");
    const int K = points.front().dim();
    for (const auto& p : points)
        if (p.dim() != K)
            throw DimensionError("min_projection_dim: mixed dimensions in point set");

    // residual(k)^2 = sum_{j>k} c_j^2, evaluated from tail sums per point.
    for (int k = 1; k <= K; ++k) {
        double worst = 0.0;
        for (const auto& p : points) {
            double tail = 0.0;
            for (int j = k; j < K; ++j) tail += p.coeffs[j] * p.coeffs[j];
            worst = std::max(worst, tail);
        }
        if (std::sqrt(worst) <= eps) return k;
    }
    throw NumericError("min_projection_dim: P_K is the identity yet the bound failed");
}

double CovarianceSpec::max_eigenvalue() const {
    return eigenvalues.empty() ? 0.0 : *std::max_element(eigenvalues.begin(), eigenvalues.end());
}

double CovarianceSpec::min_eigenvalue() const {
    return eigenvalues.empty() ? 0.0 : *std::min_element(eigenvalues.begin(), eigenvalues.end());
}

CovarianceSpec CovarianceSpec::from_eigenvalues(std::vector<double> lambdas) {
    CovarianceSpec q;
    q.eigenvalues.reserve(lambdas.size());
    for (double l : lambdas) {
        if (l < 0.0) throw ConfigError("CovarianceSpec: negative eigenvalue");
        if (l == 0.0) continue;  // a zero mode carries no noise
        q.eigenvalues.push_back(l);
    }
    if (q.eigenvalues.empty()) throw ConfigError("CovarianceSpec: no positive eigenvalues");
    double tr = 0.0;
    for (double l : q.eigenvalues) tr += l;
    q.trace = tr;
    return q;
}

CovarianceSpec CovarianceSpec::poly_decay(int n, double exponent, double scale) {
    if (n < 1) throw ConfigError("CovarianceSpec::poly_decay: n must be >= 1");
    if (!(exponent > 1.0))
        throw ConfigError("CovarianceSpec::poly_decay: exponent must be > 1 (trace class)");
    if (!(scale > 0.0)) throw ConfigError("CovarianceSpec::poly_decay: scale must be > 0");
    std::vector<double> lambdas(static_cast<std::size_t>(n));
    for (int k = 1; k <= n; ++k)
        lambdas[static_cast<std::size_t>(k - 1)] = scale * std::pow(static_cast<double>(k), -exponent);
    return from_eigenvalues(std::move(lambdas));
}

double inner_0(const WhitenedNoiseVec& a, const WhitenedNoiseVec& b) {
    if (a.dim() != b.dim()) throw DimensionError("inner_0: length mismatch");
    double s = 0.0;
    for (int k = 0; k < a.dim(); ++k) s += a.zeta[k] * b.zeta[k];
    return s;
}

double norm_0(const WhitenedNoiseVec& z) {
    double s = 0.0;
    for (double c : z.zeta) s += c * c;
    return std::sqrt(s);
}

double v_norm(const WhitenedNoiseVec& z, const CovarianceSpec& q) {
    if (z.dim() != q.dim()) throw DimensionError("v_norm: length mismatch with covariance");
    double s = 0.0;
    for (int k = 0; k < z.dim(); ++k) s += q.eigenvalues[k] * z.zeta[k] * z.zeta[k];
    return std::sqrt(s);
}

} // namespace dbdp

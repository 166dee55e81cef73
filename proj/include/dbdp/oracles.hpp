#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dbdp/dbdp.hpp"

namespace dbdp {

// Closed form for the linear test problem: F == 0, B the canonical injection,
// psi = -r y, phi = squared norm, diagonal dissipative generator. Then
//   u(t,x) = e^{-r(T-t)} [ sum_k e^{2 a_k (T-t)} x_k^2 + sum_k m_k(T-t) ],
// with m_k(dt) = lambda_k (1 - e^{2 a_k dt}) / (2 |a_k|) (a_k = 0: lambda_k dt),
// du/dx_k = 2 e^{-r(T-t)} e^{2 a_k (T-t)} x_k and zeta_k = sqrt(lambda_k) du/dx_k.
// These formulas are validated against the Monte Carlo oracle before use.
struct LinearOUOracle {
    std::vector<double> a;
    CovarianceSpec q;
    double T = 0.0;
    double r = 0.0;

    double variance_integral(int k, double dt) const;
    double u(double t, std::span<const double> x) const;
    void grad_u(double t, std::span<const double> x, std::span<double> out) const;
    void z_whitened(double t, std::span<const double> x, std::span<double> out) const;
};

// Optional exact z input for the Monte Carlo oracle when psi depends on z.
using ZEvaluator =
    std::function<void(double t, std::span<const double> x, std::span<double> zeta)>;

struct McOracleResult {
    double estimate = 0.0;
    double std_error = 0.0;
    int picard_iterations = 0;
    std::vector<double> picard_deltas;  // mean |Y^j_0 - Y^{j-1}_0| per iteration
};

// Pathwise Picard estimate of u(t, x): iterate
//   Y^j_s = phi(X_T) + sum_{r >= s} psi(t_r, X_r, Y^{j-1}_r, z_r) h
// along simulated fine-grid paths; for psi == 0 this is plain Monte Carlo of
// E phi(X_T). Throws NumericError when the iterates start diverging.
McOracleResult mc_solution_oracle(const ModelProblem& problem, double t,
                                  std::span<const double> x, int steps, int paths,
                                  int picard_iterations, std::uint64_t seed,
                                  const ZEvaluator& z_eval = nullptr);

// Nested Monte Carlo conditional expectations from frozen left states:
// mean_u[p]  ~ E_i[u_next(X_{i+1})],
// zbar[p][k] ~ (1/h) E_i[u_next(X_{i+1}) dbeta_k]  (whitened coordinates).
struct NestedConditional {
    int probes = 0;
    int noise_dim = 0;
    std::vector<double> mean_u;
    std::vector<double> zbar;
};

NestedConditional estimate_zbar_hat(int i, const ScalarEvaluator& u_next,
                                    std::span<const HilbertVec> probe_states,
                                    const ModelProblem& problem, const TimeGrid& grid,
                                    int inner_samples, std::uint64_t seed);

// Implicit one-step values: V[p] solves v = E_i[u_next] + psi(t_i, x_p, v, zbar_p) h,
// computed by Picard iteration (contraction ratio <= h Lip_y(psi)).
struct VhatResult {
    std::vector<double> vhat;
    NestedConditional cond;
    int iterations = 0;
    double final_residual = 0.0;
    std::vector<double> residual_history;  // max-over-probes |v_{m+1} - v_m|
};

VhatResult solve_vhat(int i, const ScalarEvaluator& u_next,
                      std::span<const HilbertVec> probe_states, const ModelProblem& problem,
                      const TimeGrid& grid, int inner_samples, std::uint64_t seed,
                      double tol = 1e-10, int max_iterations = 100);

// e(M, L) = sum_i E int_{t_i}^{t_{i+1}} ||M_s - L_i||^2 ds via the left-endpoint
// rule on the fine grid. fine_vals is paths x (fine_N+1) x dim, step_vals is
// paths x coarse_N x dim; fine_N must be a multiple of coarse_N.
double error_functional(const double* fine_vals, int fine_N, const double* step_vals,
                        int coarse_N, int paths, int dim, const TimeGrid& fine_grid);

// Best-of-restarts held-out MSE of a trained net against given targets; an
// upper estimate of the family's approximation infimum, never the inf itself.
struct CapacityOptions {
    int width = 64;
    int depth = 3;
    int restarts = 3;
    RegressionOptions train;
};

double capacity_gap(const double* X, int n, int in_dim, const double* Y, int out_dim,
                    const CapacityOptions& opts, std::uint64_t seed, std::uint64_t tag);

// Side-by-side estimate of the consistency bound's measurable ingredients. The
// constant C and the regularity rate rho(h) are non-constructive; what is
// reported is every term that can be measured, for trend analysis across h.
struct DiagnosticConfig {
    int paths = 2048;           // validation paths (fresh seed)
    int refine = 8;             // fine-grid refinement for the strong errors
    int probe_states = 256;     // probes for nested-MC and capacity targets
    int inner_samples = 2048;   // nested-MC inner resamples
    int zbar_probe_paths = 128; // paths probed for the time-average Z term
    bool with_capacity = true;
    CapacityOptions capacity;
    std::uint64_t seed = 0;
};

struct DiagnosticReport {
    double h = 0.0;
    int N = 0;
    bool rhs_only = false;  // no oracle: only scheme-measurable terms present
    // Strong-error functionals e(X, X^pi), e(Y, Y_pi), e(Z, Zbar_pi).
    double e_X = 0.0, e_Y = 0.0, e_Z = 0.0;
    // Consistency left side.
    double lhs_y_max = 0.0, lhs_y_se = 0.0;
    double lhs_z_sum = 0.0, lhs_z_se = 0.0;
    // Right-side ingredients.
    double term_terminal = 0.0;
    std::vector<double> eps_v, eps_z;
    double eps_v_sum = 0.0, eps_z_sum = 0.0;
    // Small sampled tables of the auxiliary scheme at step 0 probes.
    std::vector<double> vhat_table;
    std::vector<double> zbar_table;
};

DiagnosticReport theorem61_report(const SchemeState& scheme, const LinearOUOracle* oracle,
                                  const ModelProblem& problem, const TimeGrid& grid,
                                  const HilbertVec& x0, const DiagnosticConfig& cfg);

} // namespace dbdp

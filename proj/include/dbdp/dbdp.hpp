#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dbdp/deeponet.hpp"
#include "dbdp/grid.hpp"
#include "dbdp/paths.hpp"
#include "dbdp/problem.hpp"

namespace dbdp {

// Scalar functional of a state, used for the frozen u-hat of the next step.
using ScalarEvaluator = std::function<double(std::span<const double> x)>;

ScalarEvaluator terminal_evaluator(const ModelProblem& problem);
ScalarEvaluator net_evaluator(const DeepOnetSpec& u_net);

// Discrete stochastic pairing: the integral of a step-constant V_0 integrand
// against the noise collapses to zeta . dbeta in whitened coordinates.
// Conditionally centered with second moment h * ||zeta||^2.
double discrete_pairing(const WhitenedNoiseVec& z, std::span<const double> dbeta);

struct NetConfig {
    int d = 0;      // encoder modes, defaults to the state truncation
    int m_z = 0;    // z-net output modes, defaults to the noise truncation
    int width = 64;
    int depth = 3;  // number of affine maps
};

struct OptimizerConfig {
    double lr = 3e-3;
    double lr_decay = 0.99;  // per-epoch multiplier
    int batch = 256;
    int epochs = 200;
    int restarts = 3;  // used by capacity estimates, not by the backward pass
    // Fresh paths per backward step. Reusing one bundle couples u-hat_{i+1}'s
    // in-sample error with the next step's increments and the regression bias
    // compounds through the recursion; resampling keeps every step unbiased.
    bool resample_paths = true;
    // After the Adam epochs, refit the two output layers by exact joint least
    // squares (the residual is linear in them once psi is frozen): the argmin
    // over that subspace is closed-form, and pinning the in-sample mean
    // residual to zero stops optimizer slack from drifting through the
    // backward recursion. Kept only when it lowers the step loss.
    bool final_least_squares = true;
};

struct StepReport {
    int step_index = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double best_loss = 0.0;
    std::vector<double> epoch_losses;
};

// One pair (u-hat_i, z-hat_i) per step, trained backward from the terminal
// condition. u-hat_N is never a net: it is the terminal functional itself.
struct SchemeState {
    TimeGrid grid;
    NetConfig nets;
    std::vector<DeepOnetSpec> u_nets;  // i = 0..N-1, scalar output
    std::vector<DeepOnetSpec> z_nets;  // i = 0..N-1, whitened noise output
    std::vector<StepReport> reports;
};

// Empirical one-step residual loss over the bundle:
//   E | u_next(X_{i+1}) - u(X_i) - zeta(X_i) . dbeta_i + psi(t_i, X_i, u, zeta) h |^2
// with psi evaluated at the left endpoint on the current approximators.
double step_loss(int i, const ScalarEvaluator& u_next, const DeepOnetSpec& u_net,
                 const DeepOnetSpec& z_net, const PathBundle& bundle,
                 const ModelProblem& problem, const TimeGrid& grid);

// Minibatch Adam on the joint parameters of (u_i, z_i) against the frozen
// u_next. Keeps the best epoch snapshot. Deterministic for fixed inputs.
StepReport train_step(int i, const ScalarEvaluator& u_next, DeepOnetSpec& u_net,
                      DeepOnetSpec& z_net, const PathBundle& bundle,
                      const ModelProblem& problem, const TimeGrid& grid,
                      const OptimizerConfig& opt, std::uint64_t seed);

// Backward induction from the terminal condition down to step 0, warm-starting
// each step from the previous one. Requires h < 1 and h * Lip_y(psi) < 1.
SchemeState backward_induction(const ModelProblem& problem, const TimeGrid& grid,
                               const PathBundle& bundle, const NetConfig& nets,
                               const OptimizerConfig& opt, std::uint64_t seed);

} // namespace dbdp

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dbdp/grid.hpp"
#include "dbdp/problem.hpp"

namespace dbdp {

// Forward-scheme sample: M paths of K state coefficients on the grid plus the
// whitened Brownian increments that drove them. Delta beta_{p,i,k} ~ N(0, h)
// i.i.d.; the V-valued increment is recovered as sqrt(lambda_k) * dbeta_k.
// Regeneration from the same (seed, config) is bit-for-bit identical.
struct PathBundle {
    int paths = 0;
    int steps = 0;      // N
    int state_dim = 0;  // K
    int noise_dim = 0;  // n
    std::uint64_t seed = 0;
    std::vector<double> states;      // [p][i][k], i = 0..N
    std::vector<double> increments;  // [p][i][j], i = 0..N-1

    std::span<const double> state(int p, int i) const {
        return {states.data() +
                    (static_cast<std::size_t>(p) * (steps + 1) + static_cast<std::size_t>(i)) *
                        state_dim,
                static_cast<std::size_t>(state_dim)};
    }
    std::span<const double> incr(int p, int i) const {
        return {increments.data() +
                    (static_cast<std::size_t>(p) * steps + static_cast<std::size_t>(i)) *
                        noise_dim,
                static_cast<std::size_t>(noise_dim)};
    }
    HilbertVec state_vec(int p, int i) const {
        auto s = state(p, i);
        return HilbertVec{{s.begin(), s.end()}, kStateBasis};
    }
};

// i.i.d. N(0, h) whitened increments laid out [path][step][mode]; each entry
// is keyed by (seed, path, step, mode) so generation order is irrelevant.
std::vector<double> sample_increments(const TimeGrid& grid, int noise_dim, int paths,
                                      std::uint64_t seed);

// Exponential (mild) Euler step applied to the given increments:
//   X_{i+1,k} = exp(a_k h) * (X_{i,k} + h F_k(t_i, X_i) + sum_j M_{k,j} dbeta_{i,j}).
// Throws NumericError naming path and step if a state goes non-finite.
PathBundle euler_forward(const ModelProblem& problem, const TimeGrid& grid,
                         std::vector<double> increments, const HilbertVec& x0, int paths,
                         std::uint64_t seed);

// Samples the increments itself.
PathBundle euler_forward(const ModelProblem& problem, const TimeGrid& grid,
                         const HilbertVec& x0, int paths, std::uint64_t seed);

// Plain single-loop reference used by the tests and the kernel benchmark.
PathBundle euler_forward_serial(const ModelProblem& problem, const TimeGrid& grid,
                                std::vector<double> increments, const HilbertVec& x0,
                                int paths, std::uint64_t seed);

// Fine and coarse bundles driven by the same Brownian coordinates: the fine
// increments are sampled per fine step and summed within each coarse step.
// Feeds the strong-error diagnostics.
struct PairedBundles {
    TimeGrid fine_grid;
    TimeGrid coarse_grid;
    PathBundle fine;
    PathBundle coarse;
    int refine = 1;
};

PairedBundles fine_reference_paths(const ModelProblem& problem, const TimeGrid& coarse_grid,
                                   int refine, const HilbertVec& x0, int paths,
                                   std::uint64_t seed);

} // namespace dbdp

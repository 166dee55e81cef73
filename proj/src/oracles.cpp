#include "dbdp/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "dbdp/parallel.hpp"
#include "dbdp/rng.hpp"

namespace dbdp {

double LinearOUOracle::variance_integral(int k, double dt) const {
    const double ak = a[static_cast<std::size_t>(k)];
    const double lk = q.eigenvalues[static_cast<std::size_t>(k)];
    if (ak == 0.0) return lk * dt;
    return lk * (1.0 - std::exp(2.0 * ak * dt)) / (2.0 * std::fabs(ak));
}

double LinearOUOracle::u(double t, std::span<const double> x) const {
    const double dt = T - t;
    double s = 0.0;
    for (int k = 0; k < static_cast<int>(a.size()); ++k) {
        const double decay = std::exp(2.0 * a[static_cast<std::size_t>(k)] * dt);
        const double xk = k < static_cast<int>(x.size()) ? x[static_cast<std::size_t>(k)] : 0.0;
        s += decay * xk * xk;
        if (k < q.dim()) s += variance_integral(k, dt);
    }
    return std::exp(-r * dt) * s;
}

void LinearOUOracle::grad_u(double t, std::span<const double> x, std::span<double> out) const {
    const double dt = T - t;
    const double disc = std::exp(-r * dt);
    for (int k = 0; k < static_cast<int>(out.size()); ++k) {
        const double xk = k < static_cast<int>(x.size()) ? x[static_cast<std::size_t>(k)] : 0.0;
        out[static_cast<std::size_t>(k)] =
            disc * 2.0 * std::exp(2.0 * a[static_cast<std::size_t>(k)] * dt) * xk;
    }
}

void LinearOUOracle::z_whitened(double t, std::span<const double> x,
                                std::span<double> out) const {
    grad_u(t, x, out);
    for (int k = 0; k < static_cast<int>(out.size()); ++k)
        out[static_cast<std::size_t>(k)] *= std::sqrt(q.eigenvalues[static_cast<std::size_t>(k)]);
}

namespace {

// One exponential Euler step from x at time t with given whitened increments.
void euler_step(const ModelProblem& problem, double t, double h, const double* x,
                const double* db, double* out, std::vector<double>& fx,
                std::vector<double>& cols) {
    const int K = problem.state_dim;
    const int n = problem.noise_dim;
    const std::span<const double> xs{x, static_cast<std::size_t>(K)};
    if (problem.drift) problem.drift(t, xs, fx);
    if (problem.diffusion.whitened_columns) problem.diffusion.whitened_columns(t, xs, cols);
    for (int k = 0; k < K; ++k) {
        double v = x[k];
        if (problem.drift) v += h * fx[static_cast<std::size_t>(k)];
        if (problem.diffusion.whitened_columns) {
            const double* row = cols.data() + static_cast<std::size_t>(k) * n;
            double noise = 0.0;
            for (int j = 0; j < n; ++j) noise += row[j] * db[j];
            v += noise;
        }
        out[k] = std::exp(problem.generator.a[static_cast<std::size_t>(k)] * h) * v;
    }
}

} // namespace

McOracleResult mc_solution_oracle(const ModelProblem& problem, double t,
                                  std::span<const double> x, int steps, int paths,
                                  int picard_iterations, std::uint64_t seed,
                                  const ZEvaluator& z_eval) {
    problem.validate();
    if (static_cast<int>(x.size()) != problem.state_dim)
        throw DimensionError("mc_solution_oracle: state has wrong dimension");
    if (steps < 1 || paths < 1 || picard_iterations < 1)
        throw ConfigError("mc_solution_oracle: steps, paths and iterations must be >= 1");
    McOracleResult res;
    if (t >= problem.T) {
        res.estimate = problem.phi(x);
        return res;
    }
    const double hf = (problem.T - t) / steps;
    const int K = problem.state_dim;
    const int n = problem.noise_dim;
    const bool has_psi = static_cast<bool>(problem.psi.value);
    const double rho = hf * static_cast<double>(steps) * problem.psi.lipschitz_y;
    if (has_psi && rho >= 1.0)
        throw ConfigError("mc_solution_oracle: (T-t) * Lip_y(psi) = " + std::to_string(rho) +
                          " >= 1, Picard map need not contract");

    // One pass: simulate the driving paths (regenerated identically each call)
    // and fold psi along them against the previous iterate's pathwise values.
    // y_prev == nullptr means the psi-free base pass.
    const std::size_t ny = static_cast<std::size_t>(paths) * (steps + 1);
    std::vector<double> y_prev, y_next(ny, 0.0);

    auto pass = [&](const std::vector<double>* prev, std::vector<double>& out) {
        parallel_blocks(static_cast<std::size_t>(paths), [&](std::size_t, std::size_t lo, std::size_t hi) {
            std::vector<double> cur(static_cast<std::size_t>(K)), nxt(static_cast<std::size_t>(K));
            std::vector<double> db(static_cast<std::size_t>(n));
            std::vector<double> fx(static_cast<std::size_t>(K)), cols(static_cast<std::size_t>(K) * n);
            std::vector<double> contrib(static_cast<std::size_t>(steps));
            std::vector<double> zeta(static_cast<std::size_t>(n), 0.0);
            for (std::size_t p = lo; p < hi; ++p) {
                std::memcpy(cur.data(), x.data(), static_cast<std::size_t>(K) * sizeof(double));
                for (int s = 0; s < steps; ++s) {
                    const double ts = t + hf * s;
                    if (prev && has_psi) {
                        if (z_eval) z_eval(ts, cur, zeta);
                        const double yv = (*prev)[p * (steps + 1) + static_cast<std::size_t>(s)];
                        contrib[static_cast<std::size_t>(s)] =
                            problem.psi_value(ts, cur, yv, zeta) * hf;
                    }
                    rng::standard_normals(seed, rng::Stream::oracle, p, static_cast<std::uint64_t>(s), db);
                    for (int j = 0; j < n; ++j) db[static_cast<std::size_t>(j)] *= std::sqrt(hf);
                    euler_step(problem, ts, hf, cur.data(), db.data(), nxt.data(), fx, cols);
                    std::swap(cur, nxt);
                }
                const double terminal = problem.phi(cur);
                double acc = terminal;
                double* yrow = out.data() + p * (steps + 1);
                yrow[steps] = terminal;
                for (int s = steps - 1; s >= 0; --s) {
                    if (prev && has_psi) acc += contrib[static_cast<std::size_t>(s)];
                    yrow[s] = acc;
                }
            }
        });
    };

    pass(nullptr, y_next);
    int iters = 0;
    if (has_psi) {
        double prev_delta = -1.0;
        int growing = 0;
        for (int j = 0; j < picard_iterations; ++j) {
            y_prev = y_next;
            pass(&y_prev, y_next);
            ++iters;
            const double delta = blocked_sum(static_cast<std::size_t>(paths), [&](std::size_t p) {
                                     return std::fabs(y_next[p * (steps + 1)] - y_prev[p * (steps + 1)]);
                                 }) /
                                 paths;
            res.picard_deltas.push_back(delta);
            if (prev_delta >= 0.0 && delta > prev_delta * (1.0 + 1e-12) && delta > 1e-14) {
                if (++growing >= 2)
                    throw NumericError("mc_solution_oracle: Picard iterates diverging");
            } else {
                growing = 0;
            }
            prev_delta = delta;
            if (delta < 1e-14) break;
        }
    }
    res.picard_iterations = iters;

    const double mean = blocked_sum(static_cast<std::size_t>(paths), [&](std::size_t p) {
                            return y_next[p * (steps + 1)];
                        }) /
                        paths;
    const double var = blocked_sum(static_cast<std::size_t>(paths), [&](std::size_t p) {
                           const double d = y_next[p * (steps + 1)] - mean;
                           return d * d;
                       }) /
                       std::max(paths - 1, 1);
    res.estimate = mean;
    res.std_error = std::sqrt(var / paths);
    return res;
}

NestedConditional estimate_zbar_hat(int i, const ScalarEvaluator& u_next,
                                    std::span<const HilbertVec> probe_states,
                                    const ModelProblem& problem, const TimeGrid& grid,
                                    int inner_samples, std::uint64_t seed) {
    problem.validate();
    if (probe_states.empty()) throw DimensionError("estimate_zbar_hat: no probe states");
    if (inner_samples < 1) throw ConfigError("estimate_zbar_hat: inner_samples must be >= 1");
    const int K = problem.state_dim;
    const int n = problem.noise_dim;
    const double h = grid.h;
    const double t = grid.times[static_cast<std::size_t>(i)];
    const double root_h = std::sqrt(h);

    NestedConditional out;
    out.probes = static_cast<int>(probe_states.size());
    out.noise_dim = n;
    out.mean_u.assign(static_cast<std::size_t>(out.probes), 0.0);
    out.zbar.assign(static_cast<std::size_t>(out.probes) * n, 0.0);

    if (!problem.diffusion.whitened_columns) {
        // No diffusion: the one-step transition is deterministic, the
        // conditional mean needs no sampling and the increment covariance is
        // exactly zero.
        parallel_blocks(static_cast<std::size_t>(out.probes), [&](std::size_t, std::size_t lo, std::size_t hi) {
            std::vector<double> db(static_cast<std::size_t>(n), 0.0), next(static_cast<std::size_t>(K));
            std::vector<double> fx(static_cast<std::size_t>(K)), cols;
            for (std::size_t p = lo; p < hi; ++p) {
                euler_step(problem, t, h, probe_states[p].coeffs.data(), db.data(), next.data(),
                           fx, cols);
                out.mean_u[p] = u_next(next);
            }
        });
        return out;
    }

    parallel_blocks(static_cast<std::size_t>(out.probes), [&](std::size_t, std::size_t lo, std::size_t hi) {
        std::vector<double> db(static_cast<std::size_t>(n)), next(static_cast<std::size_t>(K));
        std::vector<double> fx(static_cast<std::size_t>(K)), cols(static_cast<std::size_t>(K) * n);
        std::vector<double> db_sum(static_cast<std::size_t>(n));
        for (std::size_t p = lo; p < hi; ++p) {
            const HilbertVec& xp = probe_states[p];
            if (xp.dim() != K)
                throw DimensionError("estimate_zbar_hat: probe state has wrong dimension");
            double mean = 0.0;
            double* zrow = out.zbar.data() + p * n;
            std::fill(db_sum.begin(), db_sum.end(), 0.0);
            const std::uint64_t tag = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)) << 32) | p;
            for (int rsm = 0; rsm < inner_samples; ++rsm) {
                rng::standard_normals(seed, rng::Stream::nested_inner, tag, static_cast<std::uint64_t>(rsm), db);
                for (int j = 0; j < n; ++j) db[static_cast<std::size_t>(j)] *= root_h;
                euler_step(problem, t, h, xp.coeffs.data(), db.data(), next.data(), fx, cols);
                const double val = u_next(next);
                mean += val;
                for (int j = 0; j < n; ++j) {
                    zrow[j] += val * db[static_cast<std::size_t>(j)];
                    db_sum[static_cast<std::size_t>(j)] += db[static_cast<std::size_t>(j)];
                }
            }
            mean /= inner_samples;
            out.mean_u[p] = mean;
            // Centered (covariance) form: E[dbeta] = 0 leaves the estimand
            // unchanged, kills the constant-integrand noise outright, and the
            // R/(R-1) factor removes the plug-in bias.
            const double unbias =
                inner_samples > 1 ? static_cast<double>(inner_samples) / (inner_samples - 1) : 1.0;
            for (int j = 0; j < n; ++j)
                zrow[j] = unbias * (zrow[j] / inner_samples - mean * db_sum[static_cast<std::size_t>(j)] / inner_samples) / h;
        }
    });
    return out;
}

VhatResult solve_vhat(int i, const ScalarEvaluator& u_next,
                      std::span<const HilbertVec> probe_states, const ModelProblem& problem,
                      const TimeGrid& grid, int inner_samples, std::uint64_t seed, double tol,
                      int max_iterations) {
    const double h = grid.h;
    if (!(h < 1.0 && h * problem.psi.lipschitz_y < 1.0))
        throw ConfigError("solve_vhat: contraction requires h < 1 and h * Lip_y(psi) < 1; h = " +
                          std::to_string(h) + ", Lip_y = " + std::to_string(problem.psi.lipschitz_y));

    VhatResult res;
    res.cond = estimate_zbar_hat(i, u_next, probe_states, problem, grid, inner_samples, seed);
    const int P = res.cond.probes;
    const int n = res.cond.noise_dim;
    res.vhat = res.cond.mean_u;  // v_0 = conditional mean, exact already for psi == 0
    if (!problem.psi.value) return res;

    const double t = grid.times[static_cast<std::size_t>(i)];
    std::vector<double> next(static_cast<std::size_t>(P));
    for (int it = 0; it < max_iterations; ++it) {
        double max_delta = 0.0;
        for (int p = 0; p < P; ++p) {
            const HilbertVec& xp = probe_states[static_cast<std::size_t>(p)];
            const std::span<const double> zbar{res.cond.zbar.data() + static_cast<std::size_t>(p) * n,
                                               static_cast<std::size_t>(n)};
            next[static_cast<std::size_t>(p)] =
                res.cond.mean_u[static_cast<std::size_t>(p)] +
                problem.psi_value(t, xp.coeffs, res.vhat[static_cast<std::size_t>(p)], zbar) * h;
            max_delta = std::max(max_delta,
                                 std::fabs(next[static_cast<std::size_t>(p)] - res.vhat[static_cast<std::size_t>(p)]));
        }
        res.vhat.swap(next);
        res.residual_history.push_back(max_delta);
        res.iterations = it + 1;
        res.final_residual = max_delta;
        if (max_delta <= tol) break;
    }
    return res;
}

double error_functional(const double* fine_vals, int fine_N, const double* step_vals,
                        int coarse_N, int paths, int dim, const TimeGrid& fine_grid) {
    if (coarse_N < 1 || fine_N % coarse_N != 0)
        throw DimensionError("error_functional: fine grid does not refine the coarse one");
    if (fine_grid.N != fine_N) throw DimensionError("error_functional: grid/step mismatch");
    const int refine = fine_N / coarse_N;
    const double hf = fine_grid.h;
    const double sum = blocked_sum(static_cast<std::size_t>(paths), [&](std::size_t p) {
        double acc = 0.0;
        const double* frow = fine_vals + p * (static_cast<std::size_t>(fine_N) + 1) * dim;
        const double* srow = step_vals + p * static_cast<std::size_t>(coarse_N) * dim;
        for (int i = 0; i < coarse_N; ++i) {
            const double* li = srow + static_cast<std::size_t>(i) * dim;
            for (int s = i * refine; s < (i + 1) * refine; ++s) {
                const double* ms = frow + static_cast<std::size_t>(s) * dim;
                double d2 = 0.0;
                for (int k = 0; k < dim; ++k) {
                    const double d = ms[k] - li[k];
                    d2 += d * d;
                }
                acc += d2 * hf;
            }
        }
        return acc;
    });
    return sum / paths;
}

double capacity_gap(const double* X, int n, int in_dim, const double* Y, int out_dim,
                    const CapacityOptions& opts, std::uint64_t seed, std::uint64_t tag) {
    double best = 0.0;
    for (int restart = 0; restart < std::max(1, opts.restarts); ++restart) {
        RegressionOptions ropts = opts.train;
        ropts.width = opts.width;
        ropts.depth = opts.depth;
        RegressionResult fit = fit_regression(X, Y, n, in_dim, out_dim, ropts, seed,
                                              (tag << 8) + static_cast<std::uint64_t>(restart));
        if (restart == 0 || fit.holdout_mse < best) best = fit.holdout_mse;
    }
    return best;
}

namespace {

// u-hat_i / z-hat_i over a batch of coarse states; z padded to n coordinates.
void eval_u_net(const DeepOnetSpec& net, const PathBundle& coarse, int i,
                std::vector<double>& out) {
    out.resize(static_cast<std::size_t>(coarse.paths));
    std::vector<double> xb(static_cast<std::size_t>(coarse.paths) * net.d);
    for (int p = 0; p < coarse.paths; ++p)
        std::memcpy(xb.data() + static_cast<std::size_t>(p) * net.d, coarse.state(p, i).data(),
                    static_cast<std::size_t>(net.d) * sizeof(double));
    mlp_forward_batch(net.theta, xb.data(), coarse.paths, out.data());
}

void eval_z_net(const DeepOnetSpec& net, const PathBundle& coarse, int i, int n,
                std::vector<double>& out) {
    std::vector<double> xb(static_cast<std::size_t>(coarse.paths) * net.d);
    for (int p = 0; p < coarse.paths; ++p)
        std::memcpy(xb.data() + static_cast<std::size_t>(p) * net.d, coarse.state(p, i).data(),
                    static_cast<std::size_t>(net.d) * sizeof(double));
    std::vector<double> raw(static_cast<std::size_t>(coarse.paths) * net.m);
    mlp_forward_batch(net.theta, xb.data(), coarse.paths, raw.data());
    out.assign(static_cast<std::size_t>(coarse.paths) * n, 0.0);
    for (int p = 0; p < coarse.paths; ++p)
        std::memcpy(out.data() + static_cast<std::size_t>(p) * n,
                    raw.data() + static_cast<std::size_t>(p) * net.m,
                    static_cast<std::size_t>(net.m) * sizeof(double));
}

} // namespace

DiagnosticReport theorem61_report(const SchemeState& scheme, const LinearOUOracle* oracle,
                                  const ModelProblem& problem, const TimeGrid& grid,
                                  const HilbertVec& x0, const DiagnosticConfig& cfg) {
    problem.validate();
    const int N = grid.N;
    const int K = problem.state_dim;
    const int n = problem.noise_dim;
    if (static_cast<int>(scheme.u_nets.size()) != N)
        throw DimensionError("theorem61_report: scheme does not match the grid");

    DiagnosticReport rep;
    rep.h = grid.h;
    rep.N = N;
    rep.rhs_only = (oracle == nullptr);

    PairedBundles pb = fine_reference_paths(problem, grid, cfg.refine, x0, cfg.paths, cfg.seed);
    const int fine_N = pb.fine_grid.N;
    const int P = cfg.paths;

    // e(X, X^pi): fine states against the frozen coarse states.
    {
        std::vector<double> coarse_steps(static_cast<std::size_t>(P) * N * K);
        for (int p = 0; p < P; ++p)
            for (int i = 0; i < N; ++i)
                std::memcpy(coarse_steps.data() + (static_cast<std::size_t>(p) * N + i) * K,
                            pb.coarse.state(p, i).data(), static_cast<std::size_t>(K) * sizeof(double));
        rep.e_X = error_functional(pb.fine.states.data(), fine_N, coarse_steps.data(), N, P, K,
                                   pb.fine_grid);
    }

    // Terminal mismatch E|phi(X_T) - phi(X_T^pi)|^2 under the coupled driver.
    rep.term_terminal = blocked_sum(static_cast<std::size_t>(P), [&](std::size_t p) {
                            const double d = problem.phi(pb.fine.state(static_cast<int>(p), fine_N)) -
                                             problem.phi(pb.coarse.state(static_cast<int>(p), N));
                            return d * d;
                        }) /
                        P;

    // Scheme evaluations on the coarse states.
    std::vector<std::vector<double>> uhat(static_cast<std::size_t>(N)), zhat(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        eval_u_net(scheme.u_nets[static_cast<std::size_t>(i)], pb.coarse, i, uhat[static_cast<std::size_t>(i)]);
        eval_z_net(scheme.z_nets[static_cast<std::size_t>(i)], pb.coarse, i, n, zhat[static_cast<std::size_t>(i)]);
    }

    if (oracle) {
        // Exact Y and whitened Z along the fine paths.
        std::vector<double> y_fine(static_cast<std::size_t>(P) * (fine_N + 1));
        std::vector<double> z_fine(static_cast<std::size_t>(P) * (fine_N + 1) * n);
        parallel_blocks(static_cast<std::size_t>(P), [&](std::size_t, std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p) {
                for (int s = 0; s <= fine_N; ++s) {
                    const double ts = pb.fine_grid.times[static_cast<std::size_t>(s)];
                    const auto xs = pb.fine.state(static_cast<int>(p), s);
                    y_fine[p * (fine_N + 1) + static_cast<std::size_t>(s)] = oracle->u(ts, xs);
                    oracle->z_whitened(ts, xs,
                                       {z_fine.data() + (p * (fine_N + 1) + static_cast<std::size_t>(s)) * n,
                                        static_cast<std::size_t>(n)});
                }
            }
        });

        // e(Y, (Y_t)_pi): the true Y against its own coarse-node values.
        {
            std::vector<double> y_steps(static_cast<std::size_t>(P) * N);
            for (int p = 0; p < P; ++p)
                for (int i = 0; i < N; ++i)
                    y_steps[static_cast<std::size_t>(p) * N + i] =
                        y_fine[static_cast<std::size_t>(p) * (fine_N + 1) + static_cast<std::size_t>(i) * cfg.refine];
            rep.e_Y = error_functional(y_fine.data(), fine_N, y_steps.data(), N, P, 1, pb.fine_grid);
        }

        // e(Z, (Zbar_t)_pi) on a probe subset: Zbar_{t_i} is the conditional
        // time average of Z over the step, estimated by nested resampling of
        // fine sub-paths from the frozen node state.
        {
            const int PP = std::min(cfg.zbar_probe_paths, P);
            const int R = std::max(64, cfg.inner_samples / 4);
            const double hf = pb.fine_grid.h;
            std::vector<double> zbar_steps(static_cast<std::size_t>(PP) * N * n, 0.0);
            parallel_blocks(static_cast<std::size_t>(PP), [&](std::size_t, std::size_t lo, std::size_t hi) {
                std::vector<double> cur(static_cast<std::size_t>(K)), nxt(static_cast<std::size_t>(K));
                std::vector<double> db(static_cast<std::size_t>(n));
                std::vector<double> fx(static_cast<std::size_t>(K)), cols(static_cast<std::size_t>(K) * n);
                std::vector<double> zacc(static_cast<std::size_t>(n));
                std::vector<double> zv(static_cast<std::size_t>(n));
                for (std::size_t p = lo; p < hi; ++p) {
                    for (int i = 0; i < N; ++i) {
                        double* dst = zbar_steps.data() + (p * N + static_cast<std::size_t>(i)) * n;
                        std::fill(zacc.begin(), zacc.end(), 0.0);
                        for (int rsm = 0; rsm < R; ++rsm) {
                            const auto node = pb.fine.state(static_cast<int>(p), i * cfg.refine);
                            std::memcpy(cur.data(), node.data(), static_cast<std::size_t>(K) * sizeof(double));
                            for (int s = 0; s < cfg.refine; ++s) {
                                const double ts = grid.times[static_cast<std::size_t>(i)] + hf * s;
                                oracle->z_whitened(ts, cur, zv);
                                for (int k = 0; k < n; ++k) zacc[static_cast<std::size_t>(k)] += zv[static_cast<std::size_t>(k)];
                                const std::uint64_t tag =
                                    ((p * N + static_cast<std::size_t>(i)) << 16) | static_cast<std::uint64_t>(rsm);
                                rng::standard_normals(cfg.seed + 1, rng::Stream::nested_inner, tag,
                                                      static_cast<std::uint64_t>(s), db);
                                for (int j = 0; j < n; ++j) db[static_cast<std::size_t>(j)] *= std::sqrt(hf);
                                euler_step(problem, ts, hf, cur.data(), db.data(), nxt.data(), fx, cols);
                                std::swap(cur, nxt);
                            }
                        }
                        // Mean over resamples and over the fine nodes of the step.
                        for (int k = 0; k < n; ++k)
                            dst[k] = zacc[static_cast<std::size_t>(k)] / (static_cast<double>(R) * cfg.refine);
                    }
                }
            });
            std::vector<double> z_fine_probe(static_cast<std::size_t>(PP) * (fine_N + 1) * n);
            std::memcpy(z_fine_probe.data(), z_fine.data(), z_fine_probe.size() * sizeof(double));
            rep.e_Z = error_functional(z_fine_probe.data(), fine_N, zbar_steps.data(), N, PP, n,
                                       pb.fine_grid);
        }

        // Consistency left side: max_i E|Y_{t_i} - u-hat_i(X^pi_i)|^2 plus the
        // summed Z error in the Cameron-Martin norm.
        {
            double max_y = -1.0, max_se = 0.0;
            for (int i = 0; i < N; ++i) {
                const auto& ui = uhat[static_cast<std::size_t>(i)];
                double mean = 0.0;
                for (int p = 0; p < P; ++p) {
                    const double d = y_fine[static_cast<std::size_t>(p) * (fine_N + 1) +
                                            static_cast<std::size_t>(i) * cfg.refine] -
                                     ui[static_cast<std::size_t>(p)];
                    mean += d * d;
                }
                mean /= P;
                if (mean > max_y) {
                    double var = 0.0;
                    for (int p = 0; p < P; ++p) {
                        const double d = y_fine[static_cast<std::size_t>(p) * (fine_N + 1) +
                                                static_cast<std::size_t>(i) * cfg.refine] -
                                         ui[static_cast<std::size_t>(p)];
                        const double c = d * d - mean;
                        var += c * c;
                    }
                    max_y = mean;
                    max_se = std::sqrt(var / std::max(P - 1, 1) / P);
                }
            }
            rep.lhs_y_max = max_y;
            rep.lhs_y_se = max_se;

            const double hf = pb.fine_grid.h;
            std::vector<double> per_path(static_cast<std::size_t>(P), 0.0);
            parallel_blocks(static_cast<std::size_t>(P), [&](std::size_t, std::size_t lo, std::size_t hi) {
                for (std::size_t p = lo; p < hi; ++p) {
                    double acc = 0.0;
                    for (int i = 0; i < N; ++i) {
                        const double* zh = zhat[static_cast<std::size_t>(i)].data() + p * n;
                        for (int s = i * cfg.refine; s < (i + 1) * cfg.refine; ++s) {
                            const double* ze = z_fine.data() + (p * (fine_N + 1) + static_cast<std::size_t>(s)) * n;
                            double d2 = 0.0;
                            for (int k = 0; k < n; ++k) {
                                const double d = ze[k] - zh[k];
                                d2 += d * d;
                            }
                            acc += d2 * hf;
                        }
                    }
                    per_path[p] = acc;
                }
            });
            double mean = 0.0;
            for (double v : per_path) mean += v;
            mean /= P;
            double var = 0.0;
            for (double v : per_path) var += (v - mean) * (v - mean);
            rep.lhs_z_sum = mean;
            rep.lhs_z_se = std::sqrt(var / std::max(P - 1, 1) / P);
        }
    }

    // Capacity gaps against the auxiliary-scheme targets on probe states.
    if (cfg.with_capacity) {
        const int PS = std::min(cfg.probe_states, P);
        const int d = scheme.nets.d;
        rep.eps_v.resize(static_cast<std::size_t>(N));
        rep.eps_z.resize(static_cast<std::size_t>(N));
        std::vector<HilbertVec> probes(static_cast<std::size_t>(PS));
        std::vector<double> X(static_cast<std::size_t>(PS) * d);
        for (int i = 0; i < N; ++i) {
            for (int p = 0; p < PS; ++p) {
                probes[static_cast<std::size_t>(p)] = pb.coarse.state_vec(p, i);
                std::memcpy(X.data() + static_cast<std::size_t>(p) * d,
                            pb.coarse.state(p, i).data(), static_cast<std::size_t>(d) * sizeof(double));
            }
            const ScalarEvaluator u_next =
                (i == N - 1) ? terminal_evaluator(problem)
                             : net_evaluator(scheme.u_nets[static_cast<std::size_t>(i) + 1]);
            VhatResult vh = solve_vhat(i, u_next, probes, problem, grid, cfg.inner_samples,
                                       cfg.seed + 17 + static_cast<std::uint64_t>(i));
            rep.eps_v[static_cast<std::size_t>(i)] =
                capacity_gap(X.data(), PS, d, vh.vhat.data(), 1,
                             cfg.capacity, cfg.seed, 2 * static_cast<std::uint64_t>(i));
            rep.eps_z[static_cast<std::size_t>(i)] =
                capacity_gap(X.data(), PS, d, vh.cond.zbar.data(), n,
                             cfg.capacity, cfg.seed, 2 * static_cast<std::uint64_t>(i) + 1);
            if (i == 0) {
                const int keep = std::min(PS, 8);
                rep.vhat_table.assign(vh.vhat.begin(), vh.vhat.begin() + keep);
                rep.zbar_table.assign(vh.cond.zbar.begin(),
                                      vh.cond.zbar.begin() + static_cast<std::size_t>(keep) * n);
            }
        }
        for (int i = 0; i < N; ++i) {
            rep.eps_v_sum += rep.eps_v[static_cast<std::size_t>(i)];
            rep.eps_z_sum += rep.eps_z[static_cast<std::size_t>(i)];
        }
    }

    return rep;
}

} // namespace dbdp

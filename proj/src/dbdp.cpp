#include "dbdp/dbdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "dbdp/parallel.hpp"
#include "dbdp/rng.hpp"

namespace dbdp {

ScalarEvaluator terminal_evaluator(const ModelProblem& problem) {
    return [&problem](std::span<const double> x) { return problem.phi(x); };
}

ScalarEvaluator net_evaluator(const DeepOnetSpec& u_net) {
    return [&u_net](std::span<const double> x) {
        double out = 0.0;
        const std::span<const double> enc = x.subspan(0, static_cast<std::size_t>(u_net.d));
        mlp_forward(u_net.theta, enc, std::span<double>(&out, 1));
        return out;
    };
}

double discrete_pairing(const WhitenedNoiseVec& z, std::span<const double> dbeta) {
    if (z.dim() != static_cast<int>(dbeta.size()))
        throw DimensionError("discrete_pairing: length mismatch");
    double s = 0.0;
    for (int k = 0; k < z.dim(); ++k) s += z.zeta[static_cast<std::size_t>(k)] * dbeta[static_cast<std::size_t>(k)];
    return s;
}

namespace {

// Everything one training step needs gathered once: left states, encoded left
// states, increments and the frozen u_next values at the right states.
struct StepData {
    int n_paths = 0;
    int K = 0, n = 0, d = 0, m_z = 0;
    double t = 0.0, h = 0.0;
    std::vector<double> x_full;   // paths x K
    std::vector<double> x_enc;    // paths x d
    std::vector<double> dbeta;    // paths x n
    std::vector<double> target;   // paths
};

StepData gather_step(int i, const ScalarEvaluator& u_next, const DeepOnetSpec& u_net,
                     const DeepOnetSpec& z_net, const PathBundle& bundle,
                     const ModelProblem& problem, const TimeGrid& grid) {
    if (i < 0 || i >= grid.N) throw DimensionError("step index outside the grid");
    if (bundle.steps != grid.N)
        throw DimensionError("bundle was generated on a different grid");
    StepData s;
    s.n_paths = bundle.paths;
    s.K = bundle.state_dim;
    s.n = bundle.noise_dim;
    s.d = u_net.d;
    s.m_z = z_net.m;
    s.t = grid.times[static_cast<std::size_t>(i)];
    s.h = grid.h;
    s.x_full.resize(static_cast<std::size_t>(s.n_paths) * s.K);
    s.x_enc.resize(static_cast<std::size_t>(s.n_paths) * s.d);
    s.dbeta.resize(static_cast<std::size_t>(s.n_paths) * s.n);
    s.target.resize(static_cast<std::size_t>(s.n_paths));
    parallel_blocks(static_cast<std::size_t>(s.n_paths), [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            const auto xl = bundle.state(static_cast<int>(p), i);
            const auto xr = bundle.state(static_cast<int>(p), i + 1);
            const auto db = bundle.incr(static_cast<int>(p), i);
            std::memcpy(s.x_full.data() + p * s.K, xl.data(), static_cast<std::size_t>(s.K) * sizeof(double));
            std::memcpy(s.x_enc.data() + p * s.d, xl.data(), static_cast<std::size_t>(s.d) * sizeof(double));
            std::memcpy(s.dbeta.data() + p * s.n, db.data(), static_cast<std::size_t>(s.n) * sizeof(double));
            s.target[p] = u_next(xr);
        }
    });
    return s;
}

// Residuals and (optionally) output adjoints for a set of sample rows.
// Returns the summed squared residual. adj_u / adj_z are per-sample rows
// scaled by `adj_scale` (typically 2/batch for the mean-squared loss).
double residual_pass(const StepData& s, const ModelProblem& problem,
                     std::span<const int> rows, const double* u_out, const double* z_out,
                     double* adj_u, double* adj_z, double adj_scale) {
    const int n = s.n;
    const int m_z = s.m_z;
    const std::size_t count = rows.size();
    std::vector<double> loss_partial(block_count(count), 0.0);
    parallel_blocks(count, [&](std::size_t b, std::size_t lo, std::size_t hi) {
        std::vector<double> zeta(static_cast<std::size_t>(n), 0.0);
        std::vector<double> dpsi(static_cast<std::size_t>(n), 0.0);
        double acc = 0.0;
        for (std::size_t idx = lo; idx < hi; ++idx) {
            const int p = rows[idx];
            const double* x = s.x_full.data() + static_cast<std::size_t>(p) * s.K;
            const double* db = s.dbeta.data() + static_cast<std::size_t>(p) * n;
            const double u = u_out[idx];
            const double* zrow = z_out + idx * m_z;
            std::memcpy(zeta.data(), zrow, static_cast<std::size_t>(m_z) * sizeof(double));
            std::fill(zeta.begin() + m_z, zeta.end(), 0.0);

            double pairing = 0.0;
            for (int k = 0; k < m_z; ++k) pairing += zrow[k] * db[k];

            const std::span<const double> xs{x, static_cast<std::size_t>(s.K)};
            const double psi = problem.psi_value(s.t, xs, u, zeta);
            const double r = s.target[static_cast<std::size_t>(p)] - u - pairing + psi * s.h;
            acc += r * r;

            if (adj_u) {
                const double scale = adj_scale * r;
                const double psi_dy = problem.psi_dy(s.t, xs, u, zeta);
                adj_u[idx] = scale * (-1.0 + s.h * psi_dy);
                problem.psi_dzeta(s.t, xs, u, zeta, dpsi);
                double* arow = adj_z + idx * m_z;
                for (int k = 0; k < m_z; ++k)
                    arow[k] = scale * (-db[k] + s.h * dpsi[static_cast<std::size_t>(k)]);
            }
        }
        loss_partial[b] = acc;
    });
    double total = 0.0;
    for (double v : loss_partial) total += v;
    if (!std::isfinite(total)) {
        for (std::size_t idx = 0; idx < count; ++idx) {
            const double u = u_out[idx];
            if (!std::isfinite(u))
                throw NumericError("step residual non-finite on path " +
                                   std::to_string(rows[idx]));
        }
        throw NumericError("step residual non-finite");
    }
    return total;
}

std::vector<int> all_rows(int n) {
    std::vector<int> rows(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
    return rows;
}

// In-place Cholesky solve of the symmetric positive definite system A x = b.
// Returns false when a pivot collapses (rank-deficient features).
bool cholesky_solve(std::vector<double>& A, std::vector<double>& b, int n) {
    for (int j = 0; j < n; ++j) {
        double d = A[static_cast<std::size_t>(j) * n + j];
        for (int k = 0; k < j; ++k) {
            const double l = A[static_cast<std::size_t>(j) * n + k];
            d -= l * l;
        }
        if (!(d > 0.0)) return false;
        const double dj = std::sqrt(d);
        A[static_cast<std::size_t>(j) * n + j] = dj;
        for (int i = j + 1; i < n; ++i) {
            double s = A[static_cast<std::size_t>(i) * n + j];
            for (int k = 0; k < j; ++k)
                s -= A[static_cast<std::size_t>(i) * n + k] * A[static_cast<std::size_t>(j) * n + k];
            A[static_cast<std::size_t>(i) * n + j] = s / dj;
        }
    }
    for (int i = 0; i < n; ++i) {
        double s = b[static_cast<std::size_t>(i)];
        for (int k = 0; k < i; ++k) s -= A[static_cast<std::size_t>(i) * n + k] * b[static_cast<std::size_t>(k)];
        b[static_cast<std::size_t>(i)] = s / A[static_cast<std::size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = b[static_cast<std::size_t>(i)];
        for (int k = i + 1; k < n; ++k) s -= A[static_cast<std::size_t>(k) * n + i] * b[static_cast<std::size_t>(k)];
        b[static_cast<std::size_t>(i)] = s / A[static_cast<std::size_t>(i) * n + i];
    }
    return true;
}

// Ridge-regularized least squares: solve (AtA + ridge I) beta = Aty + ridge beta0.
// beta0 pins rarely-active columns to their current values.
bool ridge_solve(std::vector<double> AtA, std::vector<double> Aty,
                 const std::vector<double>& beta0, int P, double ridge_rel,
                 std::vector<double>& beta) {
    double diag_mean = 0.0;
    for (int i = 0; i < P; ++i) diag_mean += AtA[static_cast<std::size_t>(i) * P + i];
    diag_mean /= P;
    const double ridge = ridge_rel * (diag_mean > 0.0 ? diag_mean : 1.0);
    for (int i = 0; i < P; ++i) {
        AtA[static_cast<std::size_t>(i) * P + i] += ridge;
        Aty[static_cast<std::size_t>(i)] += ridge * beta0[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < P; ++j)
            AtA[static_cast<std::size_t>(i) * P + j] = AtA[static_cast<std::size_t>(j) * P + i];
    }
    beta = Aty;
    return cholesky_solve(AtA, beta, P);
}

// Output-layer refit after the Adam epochs. The one-step residual is linear
// in both output layers once psi is frozen, so the argmin over them is a
// least-squares solve. Two details matter:
//  - the z offsets used when refitting u come from z coefficients fitted on
//    the OTHER half of the paths (cross-fitting): a z fit sharing the same
//    increments soaks part of the realized noise and that soak shifts u's
//    level down step after step;
//  - a proximal ridge keeps rarely-activated feature columns at their Adam
//    values instead of letting a handful of samples fling them around.
void refit_output_layers(const StepData& s, const ModelProblem& problem, DeepOnetSpec& u_net,
                         DeepOnetSpec& z_net) {
    const int wu = u_net.theta.layers.back().in;
    const int wz = z_net.theta.layers.back().in;
    const int m_z = s.m_z;
    const int n = s.n;
    const int pu = wu + 1;
    const int pz = (wz + 1) * m_z;
    const int M = s.n_paths;
    if (M < 4) return;
    const double kRidge = 1e-3;

    // Last hidden activations of both nets over the whole bundle.
    BatchTape tape_u, tape_z;
    std::vector<double> u_out(static_cast<std::size_t>(M));
    std::vector<double> z_out(static_cast<std::size_t>(M) * m_z);
    mlp_forward_batch(u_net.theta, s.x_enc.data(), M, u_out.data(), &tape_u);
    mlp_forward_batch(z_net.theta, s.x_enc.data(), M, z_out.data(), &tape_z);
    const std::size_t off_u = tape_u.stride - static_cast<std::size_t>(wu);
    const std::size_t off_z = tape_z.stride - static_cast<std::size_t>(wz);

    std::vector<double> beta0_u(static_cast<std::size_t>(pu));
    std::vector<double> beta0_z(static_cast<std::size_t>(pz));
    {
        const auto& lu = u_net.theta.layers.back();
        for (int j = 0; j < wu; ++j) beta0_u[static_cast<std::size_t>(j)] = lu.w[static_cast<std::size_t>(j)];
        beta0_u[static_cast<std::size_t>(wu)] = lu.b[0];
        const auto& lz = z_net.theta.layers.back();
        for (int k = 0; k < m_z; ++k) {
            for (int j = 0; j < wz; ++j)
                beta0_z[static_cast<std::size_t>(k * (wz + 1) + j)] = lz.w[static_cast<std::size_t>(k) * wz + j];
            beta0_z[static_cast<std::size_t>(k * (wz + 1) + wz)] = lz.b[static_cast<std::size_t>(k)];
        }
    }

    std::vector<double> fz(static_cast<std::size_t>(pz));
    std::vector<double> zeta(static_cast<std::size_t>(n), 0.0);
    std::vector<double> y(static_cast<std::size_t>(M));

    const int passes = problem.psi.value ? 2 : 1;
    for (int pass = 0; pass < passes; ++pass) {
        for (int p = 0; p < M; ++p) {
            std::memcpy(zeta.data(), z_out.data() + static_cast<std::size_t>(p) * m_z,
                        static_cast<std::size_t>(m_z) * sizeof(double));
            const double psi =
                problem.psi_value(s.t, {s.x_full.data() + static_cast<std::size_t>(p) * s.K,
                                        static_cast<std::size_t>(s.K)},
                                  u_out[static_cast<std::size_t>(p)], zeta);
            y[static_cast<std::size_t>(p)] = s.target[static_cast<std::size_t>(p)] + s.h * psi;
        }

        // z normal equations per path-parity half.
        std::vector<double> AtA_half[2] = {
            std::vector<double>(static_cast<std::size_t>(pz) * pz, 0.0),
            std::vector<double>(static_cast<std::size_t>(pz) * pz, 0.0)};
        std::vector<double> Aty_half[2] = {std::vector<double>(static_cast<std::size_t>(pz), 0.0),
                                           std::vector<double>(static_cast<std::size_t>(pz), 0.0)};
        for (int p = 0; p < M; ++p) {
            const double* az = tape_z.acts.data() + static_cast<std::size_t>(p) * tape_z.stride + off_z;
            const double* db = s.dbeta.data() + static_cast<std::size_t>(p) * n;
            for (int k = 0; k < m_z; ++k) {
                for (int j = 0; j < wz; ++j) fz[static_cast<std::size_t>(k * (wz + 1) + j)] = az[j] * db[k];
                fz[static_cast<std::size_t>(k * (wz + 1) + wz)] = db[k];
            }
            auto& AtA = AtA_half[p & 1];
            auto& Aty = Aty_half[p & 1];
            for (int a = 0; a < pz; ++a) {
                const double fa = fz[static_cast<std::size_t>(a)];
                if (fa == 0.0) continue;
                double* row = AtA.data() + static_cast<std::size_t>(a) * pz;
                for (int c = 0; c <= a; ++c) row[c] += fa * fz[static_cast<std::size_t>(c)];
                Aty[static_cast<std::size_t>(a)] += fa * y[static_cast<std::size_t>(p)];
            }
        }
        std::vector<double> zbeta_half[2];
        const bool half_ok =
            ridge_solve(AtA_half[0], Aty_half[0], beta0_z, pz, kRidge, zbeta_half[0]) &&
            ridge_solve(AtA_half[1], Aty_half[1], beta0_z, pz, kRidge, zbeta_half[1]);
        // All-data z fit for the reported z net.
        std::vector<double> AtA_full = AtA_half[0];
        std::vector<double> Aty_full = Aty_half[0];
        for (std::size_t i = 0; i < AtA_full.size(); ++i) AtA_full[i] += AtA_half[1][i];
        for (std::size_t i = 0; i < Aty_full.size(); ++i) Aty_full[i] += Aty_half[1][i];
        std::vector<double> zbeta;
        if (!ridge_solve(AtA_full, Aty_full, beta0_z, pz, kRidge, zbeta)) return;

        // u normal equations with cross-fitted z offsets (fall back to the
        // all-data z when a half was rank-deficient).
        std::vector<double> AtA_u(static_cast<std::size_t>(pu) * pu, 0.0);
        std::vector<double> Aty_u(static_cast<std::size_t>(pu), 0.0);
        std::vector<double> fu(static_cast<std::size_t>(pu));
        for (int p = 0; p < M; ++p) {
            const double* au = tape_u.acts.data() + static_cast<std::size_t>(p) * tape_u.stride + off_u;
            const double* az = tape_z.acts.data() + static_cast<std::size_t>(p) * tape_z.stride + off_z;
            const double* db = s.dbeta.data() + static_cast<std::size_t>(p) * n;
            const std::vector<double>& zb = half_ok ? zbeta_half[(p & 1) ^ 1] : zbeta;
            double offset = 0.0;
            for (int k = 0; k < m_z; ++k) {
                double zk = zb[static_cast<std::size_t>(k * (wz + 1) + wz)];
                for (int j = 0; j < wz; ++j) zk += zb[static_cast<std::size_t>(k * (wz + 1) + j)] * az[j];
                offset += zk * db[k];
            }
            for (int j = 0; j < wu; ++j) fu[static_cast<std::size_t>(j)] = au[j];
            fu[static_cast<std::size_t>(wu)] = 1.0;
            const double yu = y[static_cast<std::size_t>(p)] - offset;
            for (int a = 0; a < pu; ++a) {
                const double fa = fu[static_cast<std::size_t>(a)];
                double* row = AtA_u.data() + static_cast<std::size_t>(a) * pu;
                for (int c = 0; c <= a; ++c) row[c] += fa * fu[static_cast<std::size_t>(c)];
                Aty_u[static_cast<std::size_t>(a)] += fa * yu;
            }
        }
        std::vector<double> ubeta;
        if (!ridge_solve(AtA_u, Aty_u, beta0_u, pu, kRidge, ubeta)) return;

        auto& lu = u_net.theta.layers.back();
        for (int j = 0; j < wu; ++j) lu.w[static_cast<std::size_t>(j)] = ubeta[static_cast<std::size_t>(j)];
        lu.b[0] = ubeta[static_cast<std::size_t>(wu)];
        auto& lz = z_net.theta.layers.back();
        for (int k = 0; k < m_z; ++k) {
            for (int j = 0; j < wz; ++j)
                lz.w[static_cast<std::size_t>(k) * wz + j] = zbeta[static_cast<std::size_t>(k * (wz + 1) + j)];
            lz.b[static_cast<std::size_t>(k)] = zbeta[static_cast<std::size_t>(k * (wz + 1) + wz)];
        }
        if (pass + 1 < passes) {
            mlp_forward_batch(u_net.theta, s.x_enc.data(), M, u_out.data());
            mlp_forward_batch(z_net.theta, s.x_enc.data(), M, z_out.data());
        }
    }
}

double loss_over_rows(const StepData& s, const ModelProblem& problem,
                      const DeepOnetSpec& u_net, const DeepOnetSpec& z_net,
                      std::span<const int> rows, std::vector<double>& xb,
                      std::vector<double>& u_out, std::vector<double>& z_out) {
    const std::size_t count = rows.size();
    xb.resize(count * s.d);
    for (std::size_t i = 0; i < count; ++i)
        std::memcpy(xb.data() + i * s.d,
                    s.x_enc.data() + static_cast<std::size_t>(rows[i]) * s.d,
                    static_cast<std::size_t>(s.d) * sizeof(double));
    u_out.resize(count);
    z_out.resize(count * s.m_z);
    mlp_forward_batch(u_net.theta, xb.data(), static_cast<int>(count), u_out.data());
    mlp_forward_batch(z_net.theta, xb.data(), static_cast<int>(count), z_out.data());
    const double sum = residual_pass(s, problem, rows, u_out.data(), z_out.data(), nullptr,
                                     nullptr, 0.0);
    return sum / static_cast<double>(count);
}

} // namespace

double step_loss(int i, const ScalarEvaluator& u_next, const DeepOnetSpec& u_net,
                 const DeepOnetSpec& z_net, const PathBundle& bundle,
                 const ModelProblem& problem, const TimeGrid& grid) {
    u_net.validate();
    z_net.validate();
    const StepData s = gather_step(i, u_next, u_net, z_net, bundle, problem, grid);
    const std::vector<int> rows = all_rows(s.n_paths);
    std::vector<double> xb, u_out, z_out;
    return loss_over_rows(s, problem, u_net, z_net, rows, xb, u_out, z_out);
}

StepReport train_step(int i, const ScalarEvaluator& u_next, DeepOnetSpec& u_net,
                      DeepOnetSpec& z_net, const PathBundle& bundle,
                      const ModelProblem& problem, const TimeGrid& grid,
                      const OptimizerConfig& opt, std::uint64_t seed) {
    u_net.validate();
    z_net.validate();
    if (!(grid.h < 1.0))
        throw ConfigError("train_step: contraction requires h < 1, got h = " +
                          std::to_string(grid.h));
    if (!(grid.h * problem.psi.lipschitz_y < 1.0))
        throw ConfigError("train_step: contraction condition h * Lip_y(psi) < 1 violated");

    const StepData s = gather_step(i, u_next, u_net, z_net, bundle, problem, grid);
    const std::vector<int> rows = all_rows(s.n_paths);
    std::vector<double> xb, u_out, z_out;

    StepReport report;
    report.step_index = i;
    report.initial_loss = loss_over_rows(s, problem, u_net, z_net, rows, xb, u_out, z_out);

    AdamState adam = AdamState::for_params(u_net.theta.param_count() + z_net.theta.param_count());
    AdamHyper hyper;

    MlpParams best_u = u_net.theta;
    MlpParams best_z = z_net.theta;
    double best_epoch_loss = report.initial_loss;
    report.best_loss = report.initial_loss;

    std::vector<int> order = rows;
    std::vector<double> adj_u, adj_z;
    BatchTape tape_u, tape_z;

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        // Deterministic reshuffle keyed by (step, epoch).
        const std::uint64_t shuffle_tag =
            (static_cast<std::uint64_t>(i) << 32) ^ static_cast<std::uint64_t>(epoch);
        for (int k = s.n_paths - 1; k > 0; --k) {
            const std::uint32_t r = rng::uniform_u32(seed, rng::Stream::shuffle, shuffle_tag, k);
            std::swap(order[static_cast<std::size_t>(k)], order[r % static_cast<std::uint32_t>(k + 1)]);
        }
        hyper.lr = opt.lr * std::pow(opt.lr_decay, epoch);

        double epoch_loss = 0.0;
        int batches = 0;
        for (int lo = 0; lo < s.n_paths; lo += opt.batch) {
            const int bs = std::min(opt.batch, s.n_paths - lo);
            const std::span<const int> batch_rows{order.data() + lo, static_cast<std::size_t>(bs)};

            xb.resize(static_cast<std::size_t>(bs) * s.d);
            for (int k = 0; k < bs; ++k)
                std::memcpy(xb.data() + static_cast<std::size_t>(k) * s.d,
                            s.x_enc.data() + static_cast<std::size_t>(batch_rows[static_cast<std::size_t>(k)]) * s.d,
                            static_cast<std::size_t>(s.d) * sizeof(double));

            u_out.resize(static_cast<std::size_t>(bs));
            z_out.resize(static_cast<std::size_t>(bs) * s.m_z);
            mlp_forward_batch(u_net.theta, xb.data(), bs, u_out.data(), &tape_u);
            mlp_forward_batch(z_net.theta, xb.data(), bs, z_out.data(), &tape_z);

            adj_u.resize(static_cast<std::size_t>(bs));
            adj_z.resize(static_cast<std::size_t>(bs) * s.m_z);
            const double sum = residual_pass(s, problem, batch_rows, u_out.data(), z_out.data(),
                                             adj_u.data(), adj_z.data(), 2.0 / bs);
            epoch_loss += sum / bs;
            ++batches;

            MlpParams grad_u = mlp_backward_batch(u_net.theta, tape_u, adj_u.data());
            MlpParams grad_z = mlp_backward_batch(z_net.theta, tape_z, adj_z.data());
            MlpParams* nets[2] = {&u_net.theta, &z_net.theta};
            const MlpParams* grads[2] = {&grad_u, &grad_z};
            adam_step_joint({nets, 2}, {grads, 2}, adam, hyper);
        }
        epoch_loss /= std::max(batches, 1);
        report.epoch_losses.push_back(epoch_loss);
        if (!std::isfinite(epoch_loss))
            throw TrainingError("train_step: loss diverged at step " + std::to_string(i) +
                                ", epoch " + std::to_string(epoch));
        if (epoch_loss < best_epoch_loss) {
            best_epoch_loss = epoch_loss;
            best_u = u_net.theta;
            best_z = z_net.theta;
        }
    }

    if (opt.epochs > 0) {
        u_net.theta = std::move(best_u);
        z_net.theta = std::move(best_z);
    }
    report.best_loss = best_epoch_loss;
    report.final_loss = loss_over_rows(s, problem, u_net, z_net, rows, xb, u_out, z_out);

    if (opt.final_least_squares) {
        DeepOnetSpec u_polished = u_net;
        DeepOnetSpec z_polished = z_net;
        refit_output_layers(s, problem, u_polished, z_polished);
        const double polished =
            loss_over_rows(s, problem, u_polished, z_polished, rows, xb, u_out, z_out);
        // The cross-fitted level gives away a little in-sample loss by
        // construction; accept it unless the refit went materially wrong.
        if (std::isfinite(polished) && polished < report.final_loss * 1.05 + 1e-12) {
            u_net = std::move(u_polished);
            z_net = std::move(z_polished);
            report.final_loss = polished;
            report.best_loss = std::min(report.best_loss, polished);
        }
    }
    return report;
}

SchemeState backward_induction(const ModelProblem& problem, const TimeGrid& grid,
                               const PathBundle& bundle, const NetConfig& nets,
                               const OptimizerConfig& opt, std::uint64_t seed) {
    problem.validate();
    NetConfig nc = nets;
    if (nc.d <= 0) nc.d = problem.state_dim;
    if (nc.m_z <= 0) nc.m_z = problem.noise_dim;
    if (nc.d > problem.state_dim)
        throw ConfigError("backward_induction: encoder dimension d exceeds state truncation");
    if (nc.m_z > problem.noise_dim)
        throw ConfigError("backward_induction: z output modes exceed noise truncation");

    SchemeState state;
    state.grid = grid;
    state.nets = nc;
    state.u_nets.resize(static_cast<std::size_t>(grid.N));
    state.z_nets.resize(static_cast<std::size_t>(grid.N));
    state.reports.resize(static_cast<std::size_t>(grid.N));

    auto net_dims = [&](int out) {
        std::vector<int> dims;
        dims.push_back(nc.d);
        for (int l = 0; l < nc.depth - 1; ++l) dims.push_back(nc.width);
        dims.push_back(out);
        return dims;
    };

    const SpaceDesc in_space{kStateBasis, problem.state_dim};
    const SpaceDesc out_scalar{kStateBasis, 1};
    const SpaceDesc out_noise{kNoiseBasis, problem.noise_dim};

    const HilbertVec x0 = bundle.state_vec(0, 0);

    for (int i = grid.N - 1; i >= 0; --i) {
        DeepOnetSpec& u_net = state.u_nets[static_cast<std::size_t>(i)];
        DeepOnetSpec& z_net = state.z_nets[static_cast<std::size_t>(i)];
        u_net.d = z_net.d = nc.d;
        u_net.m = 1;
        z_net.m = nc.m_z;
        u_net.input_space = z_net.input_space = in_space;
        u_net.output_space = out_scalar;
        z_net.output_space = out_noise;
        if (i == grid.N - 1) {
            const auto du = net_dims(1);
            const auto dz = net_dims(nc.m_z);
            // Warm start for the terminal step: u(t_{N-1}, .) is close to phi,
            // and phi is known, so pre-fit the value net on it before the
            // residual training sees any noise.
            std::vector<double> xs(static_cast<std::size_t>(bundle.paths) * nc.d);
            std::vector<double> ys(static_cast<std::size_t>(bundle.paths));
            for (int p = 0; p < bundle.paths; ++p) {
                const auto terminal = bundle.state(p, grid.N);
                for (int k = 0; k < nc.d; ++k)
                    xs[static_cast<std::size_t>(p) * nc.d + k] = terminal[static_cast<std::size_t>(k)];
                ys[static_cast<std::size_t>(p)] = problem.phi(terminal);
            }
            RegressionOptions pre;
            pre.epochs = std::min(opt.epochs, 150);
            pre.batch = opt.batch;
            pre.lr = opt.lr;
            pre.lr_decay = opt.lr_decay;
            pre.holdout_fraction = 0.0;
            u_net.theta = fit_regression_from(he_init(du, seed, 2 * static_cast<std::uint64_t>(i) + 1),
                                              xs.data(), ys.data(), bundle.paths, nc.d, 1, pre,
                                              seed, 0x7E57ull)
                              .params;
            z_net.theta = he_init(dz, seed, 2 * static_cast<std::uint64_t>(i) + 2);
        } else {
            // Warm start: u(t_i, .) is close to u(t_{i+1}, .) for small h.
            u_net.theta = state.u_nets[static_cast<std::size_t>(i) + 1].theta;
            z_net.theta = state.z_nets[static_cast<std::size_t>(i) + 1].theta;
        }

        const ScalarEvaluator u_next =
            (i == grid.N - 1) ? terminal_evaluator(problem)
                              : net_evaluator(state.u_nets[static_cast<std::size_t>(i) + 1]);
        const bool fresh = opt.resample_paths && i < grid.N - 1;
        const PathBundle step_bundle =
            fresh ? euler_forward(problem, grid, x0, bundle.paths,
                                  bundle.seed + 1000003ull * static_cast<std::uint64_t>(grid.N - 1 - i))
                  : PathBundle{};
        try {
            state.reports[static_cast<std::size_t>(i)] =
                train_step(i, u_next, u_net, z_net, fresh ? step_bundle : bundle, problem,
                           grid, opt, seed);
        } catch (const TrainingError& e) {
            throw TrainingError("backward_induction at step " + std::to_string(i) + ": " +
                                e.what());
        }
    }
    return state;
}

} // namespace dbdp

#include "dbdp/paths.hpp"

#include <cmath>
#include <string>

#include "dbdp/parallel.hpp"
#include "dbdp/rng.hpp"

namespace dbdp {

std::vector<double> sample_increments(const TimeGrid& grid, int noise_dim, int paths,
                                      std::uint64_t seed) {
    if (paths < 1) throw ConfigError("sample_increments: need at least one path");
    if (noise_dim < 1) throw ConfigError("sample_increments: need at least one noise mode");
    const double root_h = std::sqrt(grid.h);
    std::vector<double> incr(static_cast<std::size_t>(paths) * grid.N * noise_dim);
    parallel_blocks(static_cast<std::size_t>(paths), [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            for (int i = 0; i < grid.N; ++i) {
                double* row = incr.data() + (p * grid.N + static_cast<std::size_t>(i)) * noise_dim;
                rng::standard_normals(seed, rng::Stream::path_increments, p, static_cast<std::uint64_t>(i),
                                      {row, static_cast<std::size_t>(noise_dim)});
                for (int j = 0; j < noise_dim; ++j) row[j] *= root_h;
            }
        }
    });
    return incr;
}

namespace {

// One path forward in place; shared by the parallel and serial drivers.
void run_path(const ModelProblem& problem, const TimeGrid& grid, const double* semigroup,
              const double* incr, const double* x0, double* states, int p,
              std::vector<double>& fx, std::vector<double>& cols) {
    const int K = problem.state_dim;
    const int n = problem.noise_dim;
    const double h = grid.h;

    double* x = states;
    for (int k = 0; k < K; ++k) x[k] = x0[k];

    for (int i = 0; i < grid.N; ++i) {
        const double t = grid.times[static_cast<std::size_t>(i)];
        const double* prev = states + static_cast<std::size_t>(i) * K;
        double* next = states + static_cast<std::size_t>(i + 1) * K;
        const double* db = incr + static_cast<std::size_t>(i) * n;

        if (problem.drift)
            problem.drift(t, {prev, static_cast<std::size_t>(K)}, fx);
        if (problem.diffusion.whitened_columns)
            problem.diffusion.whitened_columns(t, {prev, static_cast<std::size_t>(K)}, cols);

        bool finite = true;
        for (int k = 0; k < K; ++k) {
            double v = prev[k];
            if (problem.drift) v += h * fx[static_cast<std::size_t>(k)];
            if (problem.diffusion.whitened_columns) {
                const double* row = cols.data() + static_cast<std::size_t>(k) * n;
                double noise = 0.0;
                for (int j = 0; j < n; ++j) noise += row[j] * db[j];
                v += noise;
            }
            next[k] = semigroup[k] * v;
            finite = finite && std::isfinite(next[k]);
        }
        if (!finite)
            throw NumericError("euler_forward: non-finite state on path " + std::to_string(p) +
                               " at step " + std::to_string(i + 1));
    }
}

PathBundle make_bundle(const ModelProblem& problem, const TimeGrid& grid,
                       std::vector<double> increments, const HilbertVec& x0, int paths,
                       std::uint64_t seed) {
    problem.validate();
    if (x0.dim() != problem.state_dim)
        throw DimensionError("euler_forward: x0 has dimension " + std::to_string(x0.dim()) +
                             ", expected " + std::to_string(problem.state_dim));
    const std::size_t want =
        static_cast<std::size_t>(paths) * grid.N * problem.noise_dim;
    if (increments.size() != want)
        throw DimensionError("euler_forward: increment array has wrong size");

    PathBundle b;
    b.paths = paths;
    b.steps = grid.N;
    b.state_dim = problem.state_dim;
    b.noise_dim = problem.noise_dim;
    b.seed = seed;
    b.increments = std::move(increments);
    b.states.resize(static_cast<std::size_t>(paths) * (grid.N + 1) * problem.state_dim);
    return b;
}

} // namespace

PathBundle euler_forward(const ModelProblem& problem, const TimeGrid& grid,
                         std::vector<double> increments, const HilbertVec& x0, int paths,
                         std::uint64_t seed) {
    PathBundle b = make_bundle(problem, grid, std::move(increments), x0, paths, seed);
    const int K = problem.state_dim;
    std::vector<double> semigroup(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) semigroup[static_cast<std::size_t>(k)] = std::exp(problem.generator.a[static_cast<std::size_t>(k)] * grid.h);

    parallel_blocks(static_cast<std::size_t>(paths), [&](std::size_t, std::size_t lo, std::size_t hi) {
        std::vector<double> fx(static_cast<std::size_t>(K));
        std::vector<double> cols(static_cast<std::size_t>(K) * problem.noise_dim);
        for (std::size_t p = lo; p < hi; ++p) {
            run_path(problem, grid, semigroup.data(),
                     b.increments.data() + p * grid.N * problem.noise_dim,
                     x0.coeffs.data(),
                     b.states.data() + p * (grid.N + 1) * K, static_cast<int>(p), fx, cols);
        }
    });
    return b;
}

PathBundle euler_forward(const ModelProblem& problem, const TimeGrid& grid,
                         const HilbertVec& x0, int paths, std::uint64_t seed) {
    return euler_forward(problem, grid, sample_increments(grid, problem.noise_dim, paths, seed),
                         x0, paths, seed);
}

PathBundle euler_forward_serial(const ModelProblem& problem, const TimeGrid& grid,
                                std::vector<double> increments, const HilbertVec& x0,
                                int paths, std::uint64_t seed) {
    PathBundle b = make_bundle(problem, grid, std::move(increments), x0, paths, seed);
    const int K = problem.state_dim;
    std::vector<double> semigroup(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) semigroup[static_cast<std::size_t>(k)] = std::exp(problem.generator.a[static_cast<std::size_t>(k)] * grid.h);

    std::vector<double> fx(static_cast<std::size_t>(K));
    std::vector<double> cols(static_cast<std::size_t>(K) * problem.noise_dim);
    for (int p = 0; p < paths; ++p) {
        run_path(problem, grid, semigroup.data(),
                 b.increments.data() + static_cast<std::size_t>(p) * grid.N * problem.noise_dim,
                 x0.coeffs.data(),
                 b.states.data() + static_cast<std::size_t>(p) * (grid.N + 1) * K, p, fx, cols);
    }
    return b;
}

PairedBundles fine_reference_paths(const ModelProblem& problem, const TimeGrid& coarse_grid,
                                   int refine, const HilbertVec& x0, int paths,
                                   std::uint64_t seed) {
    if (refine < 1) throw ConfigError("fine_reference_paths: refine factor must be >= 1");
    PairedBundles out;
    out.refine = refine;
    out.coarse_grid = coarse_grid;
    out.fine_grid = make_grid(coarse_grid.T, coarse_grid.N * refine);

    const int n = problem.noise_dim;
    std::vector<double> fine_incr = sample_increments(out.fine_grid, n, paths, seed);

    // Coarse increments aggregate the fine ones inside each coarse step, the
    // standard strong coupling.
    std::vector<double> coarse_incr(static_cast<std::size_t>(paths) * coarse_grid.N * n, 0.0);
    parallel_blocks(static_cast<std::size_t>(paths), [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            for (int i = 0; i < coarse_grid.N; ++i) {
                double* dst = coarse_incr.data() + (p * coarse_grid.N + static_cast<std::size_t>(i)) * n;
                for (int s = 0; s < refine; ++s) {
                    const double* src =
                        fine_incr.data() +
                        (p * out.fine_grid.N + static_cast<std::size_t>(i * refine + s)) * n;
                    for (int j = 0; j < n; ++j) dst[j] += src[j];
                }
            }
        }
    });

    out.fine = euler_forward(problem, out.fine_grid, std::move(fine_incr), x0, paths, seed);
    out.coarse = euler_forward(problem, coarse_grid, std::move(coarse_incr), x0, paths, seed);
    return out;
}

} // namespace dbdp

// Wall-time comparison of the OpenMP kernels against their serial references:
// path generation and batched reverse-mode gradients.

#include <chrono>
#include <cmath>
#include <cstdio>

#include "dbdp/mlp.hpp"
#include "dbdp/parallel.hpp"
#include "dbdp/paths.hpp"
#include "dbdp/rng.hpp"

using namespace dbdp;
using clock_type = std::chrono::steady_clock;

namespace {

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

ModelProblem ou_problem(int K) {
    ModelProblem p;
    p.state_dim = K;
    p.noise_dim = K;
    p.T = 1.0;
    p.generator.a.resize(static_cast<std::size_t>(K));
    for (int k = 1; k <= K; ++k) p.generator.a[static_cast<std::size_t>(k - 1)] = -static_cast<double>(k);
    p.q = CovarianceSpec::poly_decay(K, 2.0);
    p.diffusion = canonical_injection_diffusion(p.q, K);
    p.phi = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return s;
    };
    return p;
}

} // namespace

int main() {
    std::printf("workers: %d\n\n", worker_count());

    {
        const int K = 16, N = 50, M = 20000;
        const ModelProblem problem = ou_problem(K);
        const TimeGrid grid = make_grid(1.0, N);
        const HilbertVec x0{std::vector<double>(static_cast<std::size_t>(K), 1.0), kStateBasis};
        auto incr = sample_increments(grid, K, M, 7);

        auto t0 = clock_type::now();
        const PathBundle serial = euler_forward_serial(problem, grid, incr, x0, M, 7);
        const double ts = seconds_since(t0);
        t0 = clock_type::now();
        const PathBundle parallel = euler_forward(problem, grid, std::move(incr), x0, M, 7);
        const double tp = seconds_since(t0);

        double max_dev = 0.0;
        for (std::size_t i = 0; i < serial.states.size(); ++i)
            max_dev = std::max(max_dev, std::fabs(serial.states[i] - parallel.states[i]));
        std::printf("euler_forward   %d paths x %d steps x %d modes\n", M, N, K);
        std::printf("  serial   %8.3f s\n  parallel %8.3f s  (x%.2f)  max |dev| = %g\n\n", ts,
                    tp, ts / tp, max_dev);
    }

    {
        const int in = 16, width = 64, out = 8, batch = 8192, reps = 20;
        const std::vector<int> dims = {in, width, width, out};
        const MlpParams net = he_init(dims, 11, 1);
        std::vector<double> xs(static_cast<std::size_t>(batch) * in);
        std::vector<double> adj(static_cast<std::size_t>(batch) * out, 1.0);
        rng::standard_normals(3, rng::Stream::probe, 0, 0, xs);

        auto t0 = clock_type::now();
        MlpParams gs;
        for (int r = 0; r < reps; ++r) gs = mlp_backward_batch_serial(net, xs.data(), batch, adj.data());
        const double ts = seconds_since(t0);
        t0 = clock_type::now();
        MlpParams gp;
        for (int r = 0; r < reps; ++r) gp = mlp_backward_batch(net, xs.data(), batch, adj.data());
        const double tp = seconds_since(t0);

        double max_rel = 0.0;
        for (std::size_t li = 0; li < gs.layers.size(); ++li)
            for (std::size_t i = 0; i < gs.layers[li].w.size(); ++i) {
                const double a = gs.layers[li].w[i], b = gp.layers[li].w[i];
                max_rel = std::max(max_rel, std::fabs(a - b) / (1.0 + std::fabs(a)));
            }
        std::printf("mlp_backward    batch %d, dims %d-%d-%d-%d, %d reps\n", batch, in, width,
                    width, out, reps);
        std::printf("  serial   %8.3f s\n  parallel %8.3f s  (x%.2f)  max rel dev = %g\n", ts,
                    tp, ts / tp, max_rel);
    }
    return 0;
}

#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dbdp {

// Worker cap for all OpenMP regions in the library. 0 keeps the runtime default.
inline void set_worker_count(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

inline int worker_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Reduction results must not depend on the number of workers, so every
// map-reduce in the library is expressed over fixed-size blocks: each block is
// computed as a unit (by whichever thread gets it) and the per-block partials
// are combined serially in block order.
constexpr std::size_t kReduceBlock = 64;

inline std::size_t block_count(std::size_t n, std::size_t block = kReduceBlock) {
    return (n + block - 1) / block;
}

// Runs body(block_index, lo, hi) over the blocks of [0, n) in parallel.
// Exceptions must not unwind across the OpenMP region, so the first one is
// captured and rethrown once every worker has stopped.
template <typename Fn>
void parallel_blocks(std::size_t n, Fn&& body, std::size_t block = kReduceBlock) {
    const std::size_t nb = block_count(n, block);
    std::exception_ptr error;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long b = 0; b < static_cast<long long>(nb); ++b) {
        try {
            const std::size_t lo = static_cast<std::size_t>(b) * block;
            const std::size_t hi = lo + block < n ? lo + block : n;
            body(static_cast<std::size_t>(b), lo, hi);
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical(dbdp_parallel_error)
#endif
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

// Sums fn(i) over i in [0, n) with the blocked deterministic scheme.
template <typename Fn>
double blocked_sum(std::size_t n, Fn&& fn, std::size_t block = kReduceBlock) {
    const std::size_t nb = block_count(n, block);
    std::vector<double> partial(nb, 0.0);
    parallel_blocks(
        n,
        [&](std::size_t b, std::size_t lo, std::size_t hi) {
            double acc = 0.0;
            for (std::size_t i = lo; i < hi; ++i) acc += fn(i);
            partial[b] = acc;
        },
        block);
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

} // namespace dbdp

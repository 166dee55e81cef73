#pragma once

#include <vector>

#include "dbdp/errors.hpp"

namespace dbdp {

// Uniform partition of [0, T] into N steps of width h = T/N.
struct TimeGrid {
    double T = 0.0;
    int N = 0;
    double h = 0.0;
    std::vector<double> times;  // t_i = i*T/N, i = 0..N
};

inline TimeGrid make_grid(double T, int N) {
    if (!(T > 0.0)) throw ConfigError("TimeGrid: horizon T must be > 0");
    if (N < 1) throw ConfigError("TimeGrid: step count N must be >= 1");
    TimeGrid g;
    g.T = T;
    g.N = N;
    g.h = T / static_cast<double>(N);
    g.times.resize(static_cast<std::size_t>(N) + 1);
    for (int i = 0; i <= N; ++i)
        g.times[static_cast<std::size_t>(i)] = static_cast<double>(i) * T / static_cast<double>(N);
    return g;
}

} // namespace dbdp

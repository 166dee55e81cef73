#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace dbdp {

// Counter-based generator (Philox 4x32-10, Salmon et al. 2011). Every draw is
// a pure function of (seed, stream, id0, id1, lane), so sampling is
// reproducible bit-for-bit no matter how the loops around it are scheduled.
namespace rng {

enum class Stream : std::uint32_t {
    path_increments = 1,
    nested_inner = 2,
    net_init = 3,
    shuffle = 4,
    probe = 5,
    oracle = 6,
    fit_split = 7,
};

namespace detail {

inline std::uint32_t mulhi(std::uint32_t a, std::uint32_t b) {
    return static_cast<std::uint32_t>((static_cast<std::uint64_t>(a) * b) >> 32);
}

inline void philox4x32(std::uint64_t key, std::uint32_t c0, std::uint32_t c1,
                       std::uint32_t c2, std::uint32_t c3, std::uint32_t out[4]) {
    constexpr std::uint32_t kM0 = 0xD2511F53u;
    constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u;
    constexpr std::uint32_t kW1 = 0xBB67AE85u;
    std::uint32_t k0 = static_cast<std::uint32_t>(key);
    std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
    for (int round = 0; round < 10; ++round) {
        const std::uint32_t hi0 = mulhi(kM0, c0), lo0 = kM0 * c0;
        const std::uint32_t hi1 = mulhi(kM1, c2), lo1 = kM1 * c2;
        const std::uint32_t n0 = hi1 ^ c1 ^ k0;
        const std::uint32_t n1 = lo1;
        const std::uint32_t n2 = hi0 ^ c3 ^ k1;
        const std::uint32_t n3 = lo0;
        c0 = n0; c1 = n1; c2 = n2; c3 = n3;
        k0 += kW0; k1 += kW1;
    }
    out[0] = c0; out[1] = c1; out[2] = c2; out[3] = c3;
}

inline double to_unit(std::uint32_t x) {
    // (0, 1), symmetric, never exactly 0 or 1.
    return (static_cast<double>(x) + 0.5) * 0x1p-32;
}

} // namespace detail

// Fills out with independent N(0,1) draws identified by (seed, stream, id0, id1).
// id0/id1 are caller-level coordinates (e.g. path and step); successive lanes
// within one call advance an internal block counter, so out.size() may be
// anything below 2^17.
inline void standard_normals(std::uint64_t seed, Stream stream, std::uint64_t id0,
                             std::uint64_t id1, std::span<double> out) {
    const std::uint32_t c0 = static_cast<std::uint32_t>(id0);
    const std::uint32_t c1 = static_cast<std::uint32_t>(id0 >> 32);
    const std::uint32_t c2 = static_cast<std::uint32_t>(id1);
    const std::uint32_t tag = static_cast<std::uint32_t>(stream) << 16;
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    std::uint32_t words[4];
    std::size_t i = 0;
    std::uint32_t block = 0;
    while (i < out.size()) {
        detail::philox4x32(seed, c0, c1, c2, tag | block, words);
        ++block;
        const double u1 = detail::to_unit(words[0]);
        const double u2 = detail::to_unit(words[1]);
        const double r = std::sqrt(-2.0 * std::log(u1));
        out[i++] = r * std::cos(kTwoPi * u2);
        if (i < out.size()) {
            const double u3 = detail::to_unit(words[2]);
            const double u4 = detail::to_unit(words[3]);
            const double r2 = std::sqrt(-2.0 * std::log(u3));
            out[i++] = r2 * std::cos(kTwoPi * u4);
        }
    }
}

inline double standard_normal(std::uint64_t seed, Stream stream, std::uint64_t id0,
                              std::uint64_t id1) {
    double z;
    standard_normals(seed, stream, id0, id1, std::span<double>(&z, 1));
    return z;
}

// Uniform u32 draw for shuffles and index picks.
inline std::uint32_t uniform_u32(std::uint64_t seed, Stream stream, std::uint64_t id0,
                                 std::uint64_t id1, std::uint32_t lane = 0) {
    std::uint32_t words[4];
    detail::philox4x32(seed, static_cast<std::uint32_t>(id0),
                       static_cast<std::uint32_t>(id0 >> 32),
                       static_cast<std::uint32_t>(id1),
                       (static_cast<std::uint32_t>(stream) << 16) | lane, words);
    return words[0];
}

inline double uniform_unit(std::uint64_t seed, Stream stream, std::uint64_t id0,
                           std::uint64_t id1, std::uint32_t lane = 0) {
    return detail::to_unit(uniform_u32(seed, stream, id0, id1, lane));
}

} // namespace rng
} // namespace dbdp

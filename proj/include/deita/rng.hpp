#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "deita/errors.hpp"

namespace deita {

// Uniform draw in [0, bound) from a pinned generator. Rejection sampling
// instead of std::uniform_int_distribution, whose output is
// implementation-defined; results must be identical across toolchains.
inline std::uint64_t bounded_rand(std::mt19937_64& rng, std::uint64_t bound) {
    if (bound == 0) throw Error("bounded_rand: bound must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
        v = rng();
    } while (v >= limit);
    return v % bound;
}

/// Uniform sample of `n_draw` distinct indices from [0, n_total), in draw
/// order, deterministic under `seed` (partial Fisher-Yates over mt19937_64).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n_total,
                                                           std::size_t n_draw,
                                                           std::uint64_t seed) {
    if (n_draw > n_total)
        throw DataError("sample_without_replacement: requested " + std::to_string(n_draw) +
                        " from population of " + std::to_string(n_total));
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(n_total);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < n_draw; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(bounded_rand(rng, n_total - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n_draw);
    return idx;
}

} // namespace deita

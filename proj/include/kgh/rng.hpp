#pragma once

#include <cstdint>
#include <random>

namespace kgh {

// std::uniform_int_distribution differs between standard libraries; this
// keeps seeded runs identical everywhere.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

} // namespace kgh

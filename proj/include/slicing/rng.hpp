#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace slicing {

using Rng = std::mt19937_64;

// Named random streams split off one root seed. Each subsystem draws from its
// own stream so that changing one consumer never perturbs another.
enum class Stream : std::uint64_t {
    Arrivals = 1,
    Noise = 2,
    Replay = 3,
    Miner = 4,
    Feedback = 5,
    Init = 6,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, Stream stream) {
    return splitmix64(splitmix64(root) ^ static_cast<std::uint64_t>(stream));
}

inline Rng make_rng(std::uint64_t root, Stream stream) {
    return Rng(derive_seed(root, stream));
}

} // namespace slicing

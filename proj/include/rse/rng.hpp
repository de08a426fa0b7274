#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace rse {

/// Independent random streams derived from one user seed.
enum class Stream : std::uint64_t {
    ModelInit = 1,
    Shuffle = 2,
    LatentNoise = 3,
    Policy = 4,
    Replay = 5,
    AgentInit = 6,
    Fixture = 7,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based split: the same (seed, stream, counter) always maps to the same child seed.
inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t counter = 0) {
    return splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream))) + counter);
}

inline std::string engine_state(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

inline void restore_engine(std::mt19937_64& rng, const std::string& state) {
    std::istringstream is(state);
    is >> rng;
}

} // namespace rse

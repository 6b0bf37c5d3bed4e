#pragma once

#include <cstdint>
#include <random>

namespace aqnet {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for stream (purpose, index) derived from a run seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index = 0) {
    return splitmix64(splitmix64(seed ^ splitmix64(purpose)) + index);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index = 0) {
    return Rng(derive_seed(seed, purpose, index));
}

// Stream purposes. Values are part of the determinism contract; do not renumber.
namespace stream {
inline constexpr std::uint64_t kTexturePm10 = 1;
inline constexpr std::uint64_t kTexturePm25 = 2;
inline constexpr std::uint64_t kLayout = 3;
inline constexpr std::uint64_t kSensorModel = 4;
inline constexpr std::uint64_t kSensorNoise = 5;
inline constexpr std::uint64_t kWeather = 6;
inline constexpr std::uint64_t kOutage = 7;
inline constexpr std::uint64_t kEvents = 8;
inline constexpr std::uint64_t kSubset = 9;
inline constexpr std::uint64_t kColocationNoise = 10;
}  // namespace stream

}  // namespace aqnet

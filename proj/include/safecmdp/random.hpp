#pragma once

#include <cstdint>
#include <random>

namespace safecmdp {

/// Random stream used throughout the library.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/**
 * Deterministic substream for item `index` of a job identified by `key`.
 *
 * Batch sampling draws one key from the caller's stream and hands each chunk
 * of trajectories its own substream, so the sampled batch does not depend on
 * how chunks are scheduled across threads.
 */
inline Rng substream(std::uint64_t key, std::uint64_t index) {
    return Rng(mix64(mix64(key) ^ mix64(index + 0x632be59bd9b4e019ULL)));
}

/// Uniform double in [0, 1).
inline double uniform01(Rng& rng) {
    // 53 random mantissa bits; identical across standard library implementations.
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace safecmdp

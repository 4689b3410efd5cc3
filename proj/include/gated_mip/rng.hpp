#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gmip {

/// SplitMix64 finalizer; used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t value) noexcept;

/// Seed of the named substream of `root` (e.g. "data", "init", "sampling", "dropout").
std::uint64_t substream_seed(std::uint64_t root, std::string_view name) noexcept;

/// Seed of the `counter`-th element of a substream.
std::uint64_t counter_seed(std::uint64_t stream_seed, std::uint64_t counter) noexcept;

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

/// Uniform double in [0, 1) built from the top 53 bits; identical on every platform.
double uniform01(std::mt19937_64& rng) noexcept;
/// Uniform integer in [0, n) without modulo bias.
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);
/// Standard normal draw (Box-Muller, one variate per call).
double standard_normal(std::mt19937_64& rng) noexcept;

} // namespace gmip

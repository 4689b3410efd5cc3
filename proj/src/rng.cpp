#include "gated_mip/rng.hpp"

#include "gated_mip/errors.hpp"

#include <cmath>
#include <numbers>

namespace gmip {

std::uint64_t mix_seed(std::uint64_t value) noexcept {
    value += 0x9E3779B97F4A7C15ULL;
    value = (value ^ (value >> 30)) * 0xBF58476D1CE4E5B9ULL;
    value = (value ^ (value >> 27)) * 0x94D049BB133111EBULL;
    return value ^ (value >> 31);
}

std::uint64_t substream_seed(std::uint64_t root, std::string_view name) noexcept {
    // FNV-1a over the name, then mixed with the root.
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return mix_seed(mix_seed(root) ^ h);
}

std::uint64_t counter_seed(std::uint64_t stream_seed, std::uint64_t counter) noexcept {
    return mix_seed(stream_seed ^ mix_seed(counter + 0x632BE59BD9B4E019ULL));
}

double uniform01(std::mt19937_64& rng) noexcept {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
    if (n == 0) throw DomainError("uniform_index: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

double standard_normal(std::mt19937_64& rng) noexcept {
    const double u1 = 1.0 - uniform01(rng); // (0, 1]
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace gmip

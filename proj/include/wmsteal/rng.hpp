#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace wmsteal {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

/// splitmix64 finalizer. Every seeded decision in the library goes through it:
///   z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
///   z ^= z >> 27; z *= 0x94D049BB133111EB;
///   z ^= z >> 31;
constexpr std::uint64_t fmix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

/// Two-argument avalanche mixer: mix(a, b) = fmix64(b ^ fmix64(a + golden)).
constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    return fmix64(b ^ fmix64(a + kGolden));
}

/// FNV-1a 64 over bytes; used for content and config hashes.
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Counter-based splitmix64 stream. Draw i of a stream seeded with s is
/// fmix64(s + (i + 1) * golden), so any (seed, path) pair replays exactly.
class RngStream {
  public:
    constexpr explicit RngStream(std::uint64_t seed = 0) : seed_(seed) {}

    constexpr std::uint64_t seed() const { return seed_; }
    constexpr std::uint64_t counter() const { return counter_; }

    constexpr std::uint64_t next() {
        ++counter_;
        return fmix64(seed_ + counter_ * kGolden);
    }

    /// Child stream for a sub-task; independent of how many draws the parent made.
    constexpr RngStream split(std::uint64_t path) const { return RngStream(mix(path, seed_)); }
    RngStream split(std::string_view name) const { return split(fnv1a(name)); }

    /// Uniform in [0, 1) with 53 bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Plain modulo; n is tiny relative to 2^64.
    std::uint64_t below(std::uint64_t n) { return next() % n; }

    /// Standard normal via Box-Muller (one value per two draws).
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

  private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace wmsteal

#pragma once

// Counter-based keyed randomness.
//
// Every random draw in the toolkit is a pure function of a key tuple
// (seed, frame/draw, ordinal, purpose tag, counter). There is no hidden
// generator state, so results do not depend on call order or thread
// interleaving, and the integer stream is bit-identical on every platform.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace rtdet {

/// splitmix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Folds a key tuple into one 64-bit word. Order-sensitive.
constexpr std::uint64_t hash_key(std::initializer_list<std::uint64_t> words) noexcept {
    std::uint64_t h = 0x6a09e667f3bcc908ULL;
    for (std::uint64_t w : words) {
        h = mix64(h ^ mix64(w));
    }
    return h;
}

/// Purpose tags keep draws made for different reasons independent even when
/// the rest of the key matches.
enum class RngPurpose : std::uint64_t {
    Miss = 1,
    JitterX,
    JitterY,
    JitterW,
    JitterH,
    TpConfidence,
    FpCount,
    FpGeometry,
    FpConfidence,
    FpClass,
    Flip,
    Brightness,
    Noise,
    Crop,
    Split,
    Scene,
};

/// A keyed stream: the n-th value is mix64(key + n * golden), so any element
/// can be computed directly without advancing through its predecessors.
class KeyedStream {
public:
    constexpr explicit KeyedStream(std::uint64_t key) noexcept : key_(key) {}
    KeyedStream(std::uint64_t seed, std::initializer_list<std::uint64_t> key_words) noexcept
        : key_(mix64(seed) ^ hash_key(key_words)) {}

    constexpr std::uint64_t at(std::uint64_t counter) const noexcept {
        return mix64(key_ + counter * 0x9e3779b97f4a7c15ULL);
    }

    constexpr std::uint64_t next_u64() noexcept { return at(counter_++); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (one value per call, two words consumed).
    double normal() noexcept {
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double sigma) noexcept { return mean + sigma * normal(); }

    /// Poisson variate. Knuth's product method on chunks of mean <= 30 so
    /// exp(-lambda) never underflows.
    std::uint64_t poisson(double lambda) noexcept {
        std::uint64_t total = 0;
        while (lambda > 0.0) {
            const double chunk = lambda > 30.0 ? 30.0 : lambda;
            lambda -= chunk;
            const double limit = std::exp(-chunk);
            double p = 1.0;
            std::uint64_t k = 0;
            while (true) {
                p *= uniform();
                if (p <= limit) break;
                ++k;
            }
            total += k;
        }
        return total;
    }

    constexpr std::uint64_t key() const noexcept { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

inline KeyedStream keyed_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b, RngPurpose purpose) {
    return KeyedStream(seed, {a, b, static_cast<std::uint64_t>(purpose)});
}

} // namespace rtdet

#pragma once

#include <cmath>
#include <cstdint>

namespace proxtune {

// SplitMix64 (Steele, Lea & Flood 2014; constants from Vigna's reference
// implementation). Chosen over std:: engines because the output sequence is
// fixed by the published constants: datasets and trajectories reproduce
// bit-for-bit regardless of standard library.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller. Two raw draws per sample, no caching,
    // so the consumption pattern is independent of call history.
    double next_normal() {
        const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Uniform integer in [0, n) by 128-bit multiply (Lemire's reduction
    // without the rejection step; bias is < n / 2^64).
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

private:
    std::uint64_t state_;
};

// SplitMix64 finalizer, usable as a standalone 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Deterministic sub-stream seed: one experiment seed fans out into
// independent streams (data splits, batch order, ...) keyed by tag.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t tag) {
    return mix64(seed + 0x9E3779B97F4A7C15ull * (tag + 1));
}

}  // namespace proxtune

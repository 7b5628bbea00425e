#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace pixcorr {

// Deterministic splitmix64 stream. Used everywhere instead of <random> so that
// results are bit-identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller. Consumes two draws per call.
    double normal() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

// FNV-1a over a string, for deriving independent substreams and naming runs.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a_mix(std::uint64_t h, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffU;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Substream seed derived from (seed, tag, index). Stateless helpers like
// per-step sample selection use this so training is resumable mid-run.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
    std::uint64_t h = fnv1a_mix(0xcbf29ce484222325ULL, seed);
    h = fnv1a(tag, h);
    h = fnv1a_mix(h, index);
    return h;
}

} // namespace pixcorr

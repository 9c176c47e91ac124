#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lql {

// Error taxonomy used across the library. Every precondition violation maps
// to one of these so callers (and tests) can discriminate failure kinds.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct InvalidSpec : Error {
    explicit InvalidSpec(const std::string& m) : Error("invalid-spec: " + m) {}
};
struct InvalidCall : Error {
    explicit InvalidCall(const std::string& m) : Error("invalid-call: " + m) {}
};
struct InvalidEpisode : Error {
    explicit InvalidEpisode(const std::string& m) : Error("invalid-episode: " + m) {}
};
struct EmptyBuffer : Error {
    explicit EmptyBuffer(const std::string& m) : Error("empty-buffer: " + m) {}
};
struct InvalidIndices : Error {
    explicit InvalidIndices(const std::string& m) : Error("invalid-indices: " + m) {}
};
struct InvalidInput : Error {
    explicit InvalidInput(const std::string& m) : Error("invalid-input: " + m) {}
};
struct InvalidConfig : Error {
    explicit InvalidConfig(const std::string& m) : Error("invalid-config: " + m) {}
};

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent seed streams from
// (base seed, run index, trial index, ...) so results do not depend on
// execution order.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return mix_seed(base ^ mix_seed(stream));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(base, a), b);
}

// Uniform in [0,1) with 53 random bits. Hand-rolled so traces are identical
// across standard library implementations.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Rejection sampling keeps it exactly uniform.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    if (n == 0) throw InvalidInput("uniform_index: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
}

// Sample an index from an unnormalized-but-valid probability vector.
inline std::size_t sample_categorical(Rng& rng, const std::vector<double>& probs) {
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    // Guard against accumulated rounding in the final bucket.
    for (std::size_t i = probs.size(); i-- > 0;) {
        if (probs[i] > 0.0) return i;
    }
    throw InvalidInput("sample_categorical: all-zero probability vector");
}

// Standard normal via Box-Muller on our own uniform bits (platform-stable).
inline double normal01(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

// FNV-1a over a string; used for config hashes in run manifests.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline double sqr(double x) { return x * x; }

// [x]_+ = max(x, 0)
inline double pos(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace lql

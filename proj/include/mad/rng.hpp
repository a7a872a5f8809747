#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace mad::rng {

// FNV-1a, used to fold question ids into seed material.
inline std::uint64_t hash64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// splitmix64 finalizer; combines seed components without short cycles.
inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull + b;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t global, std::string_view question_id,
                                 std::string_view tag, std::uint64_t index) {
    return mix(mix(mix(global, hash64(question_id)), hash64(tag)), index);
}

// Deterministic generator with hand-rolled distributions so that pinned
// regression values do not depend on the standard library implementation.
class Rand {
public:
    explicit Rand(std::uint64_t seed) : eng_(seed) {}

    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    // [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(uniform() * (hi - lo + 1));
    }

    double normal(double mean, double stddev) {
        // Box-Muller; u1 kept away from 0.
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mean + stddev * z;
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace mad::rng

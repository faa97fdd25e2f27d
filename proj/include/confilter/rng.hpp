#pragma once

// Seeded randomness for the simulator. One named generator (mt19937_64, whose
// output sequence the standard pins down) plus hand-rolled distribution
// transforms, so draws do not depend on the standard library's unspecified
// distribution algorithms. Per-trial substreams are derived with a splitmix64
// mix of (seed, stream index), which lets trials run in any order without
// changing their draws.

#include <cmath>
#include <cstdint>
#include <random>

#include "confilter/errors.hpp"

namespace confilter::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(index * 2 + 1)));
}

// Uniform on [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller (one value per pair of uniforms; no state).
inline double standard_normal(std::mt19937_64& gen) {
    double u1 = uniform01(gen);
    while (u1 == 0.0) u1 = uniform01(gen);
    const double u2 = uniform01(gen);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Marsaglia-Tsang gamma with unit scale; shapes below 1 are boosted via
// gamma(a) = gamma(a+1) * U^(1/a).
inline double sample_gamma(std::mt19937_64& gen, double shape) {
    if (!(shape > 0.0)) {
        throw DomainError("gamma shape must be > 0");
    }
    if (shape < 1.0) {
        double u = uniform01(gen);
        while (u == 0.0) u = uniform01(gen);
        return sample_gamma(gen, shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
        const double x = standard_normal(gen);
        const double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        const double v = t * t * t;
        double u = uniform01(gen);
        while (u == 0.0) u = uniform01(gen);
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

inline double sample_beta(std::mt19937_64& gen, double a, double b) {
    const double x = sample_gamma(gen, a);
    const double y = sample_gamma(gen, b);
    return x / (x + y);
}

}  // namespace confilter::rng

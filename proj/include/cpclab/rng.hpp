#pragma once

#include "cpclab/common.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace cpclab {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stage/sub-stream seed derivation. Children are decorrelated from the parent
// and from each other, so adding a new stage label never perturbs existing
// streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    return splitmix64(seed ^ splitmix64(salt + 0xd1b54a32d192ed03ULL));
}

inline std::uint64_t mix_seed(std::uint64_t seed, const std::string& label) {
    return mix_seed(seed, fnv1a64(label));
}

// Deterministic RNG. All distributions are implemented explicitly so that
// streams are bit-reproducible independent of the standard library's
// distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), n > 0. Rejection-free modulo of a 64-bit
    // draw; bias is negligible for the n used here (n << 2^32).
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; the half-offset keeps u1 away from 0.
    double normal() {
        double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Beta(alpha, 1) via inverse CDF: F(x) = x^alpha.
    double beta_a1(double alpha) {
        if (!(alpha > 0.0)) throw ValidationError("beta_a1: alpha must be positive");
        return std::pow(uniform01(), 1.0 / alpha);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_int(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Index draw from unnormalized nonnegative weights by CDF inversion.
    std::size_t pick_weighted(const std::vector<double>& weights);

private:
    std::mt19937_64 eng_;
};

}  // namespace cpclab

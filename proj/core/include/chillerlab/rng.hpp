#pragma once

#include <cmath>
#include <cstdint>

namespace chillerlab {

// Deterministic, portable RNG (splitmix64). We avoid <random> distributions
// because their output is implementation-defined; every stochastic result in
// the lab must be bit-reproducible from a seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ULL) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller without caching so the call sequence stays deterministic.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Uniform integer in [0, n). Modulo bias is < 2^-53 for any n we use.
    std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

    Rng fork(std::uint64_t salt) const {
        Rng r(0);
        r.state_ = hash_mix(state_ ^ (salt * 0xd6e8feb86659fd93ULL));
        return r;
    }

    static std::uint64_t hash_mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

// Stateless noise stream: same (seed, t, stream) always yields the same draw.
inline double hash_uniform(std::uint64_t seed, std::int64_t t, std::uint64_t stream) {
    std::uint64_t h = Rng::hash_mix(seed ^ Rng::hash_mix(static_cast<std::uint64_t>(t) ^ Rng::hash_mix(stream)));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double hash_normal(std::uint64_t seed, std::int64_t t, std::uint64_t stream) {
    double u1 = hash_uniform(seed, t, stream * 2 + 1);
    double u2 = hash_uniform(seed, t, stream * 2 + 2);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

} // namespace chillerlab

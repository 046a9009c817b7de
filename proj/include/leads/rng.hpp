#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace leads {

// Seeded engine used everywhere randomness enters. Streams derived with
// derive() are independent of the order in which they are consumed.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(mix(seed)) {}

    static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path)
    {
        std::uint64_t h = mix(seed);
        for (auto p : path) {
            h = mix(h ^ (p + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
        }
        Rng r;
        r.engine_.seed(h);
        return r;
    }

    double uniform(double lo = 0.0, double hi = 1.0)
    {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

    // Uniform index in [0, n).
    std::size_t index(std::size_t n)
    {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::mt19937_64& engine() { return engine_; }

private:
    // splitmix64 finalizer
    static std::uint64_t mix(std::uint64_t x)
    {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
};

} // namespace leads

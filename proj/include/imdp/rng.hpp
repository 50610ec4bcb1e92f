// Deterministic RNG streams. Every random draw in the system goes through a
// named stream derived from a master seed, so runs are reproducible and
// modules cannot perturb each other's sequences.

#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace imdp {

/// One independent RNG stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(engine_);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        std::normal_distribution<double> d(mean, stddev);
        return d(engine_);
    }

    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uniform_int_distribution<std::int64_t> d(lo, hi);
        return d(engine_);
    }

    bool bernoulli(double p) {
        std::bernoulli_distribution d(p);
        return d(engine_);
    }

    template <class It>
    void shuffle(It first, It last) {
        std::shuffle(first, last, engine_);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

/// Derives independent streams from a master seed by name (FNV-1a mix).
class RngFactory {
public:
    explicit RngFactory(std::uint64_t master_seed) : master_(master_seed) {}

    Rng stream(const std::string& name) const {
        std::uint64_t h = 14695981039346656037ull;
        for (unsigned char c : name) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= master_ + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        return Rng(h);
    }

    std::uint64_t master_seed() const { return master_; }

private:
    std::uint64_t master_;
};

}  // namespace imdp

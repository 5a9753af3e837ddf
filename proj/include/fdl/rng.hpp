#pragma once

#include <cstdint>
#include <random>

namespace fdl {

// splitmix64 step; used to derive independent stream seeds from a base seed.
std::uint64_t mix_seed(std::uint64_t state);

// Seed for stream `index` derived from `base`. Streams for distinct indices
// are decorrelated, so adding models never shifts existing streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

// Deterministic random source. The distributions are implemented by hand on
// top of mt19937_64 so that sequences are identical across standard libraries
// (std::normal_distribution is not portable).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Entropy-seeded generator for the "none" initialization strategy.
    static Rng from_entropy();

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform();

    // Uniform in [lo, hi).
    double uniform(double lo, double hi);

    // Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi);

    // Standard normal via Box-Muller (spare cached).
    double normal();

    // Normal with the given standard deviation.
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Laplace(0, scale) via inverse CDF.
    double laplace(double scale);

    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates shuffle, stable across platforms.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<int>(i - 1)));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fdl

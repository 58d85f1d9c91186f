#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "dimba/tensor.hpp"

namespace dimba {

// Deterministic RNG. Normal draws are produced with an explicit Box-Muller
// transform over mt19937_64 output so golden values do not depend on the
// standard library's normal_distribution implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Derive an independent stream from (seed, index); splitmix64 finalizer.
    static Rng derive(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        z = z ^ (z >> 31);
        return Rng(z);
    }

    double uniform() {  // [0, 1)
        return (gen_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t next_u64() { return gen_(); }

    int uniform_int(int n) {  // [0, n)
        return static_cast<int>(gen_() % static_cast<std::uint64_t>(n));
    }

    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    void fill_normal(Tensor& t, double stddev = 1.0) {
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = stddev * normal();
    }

    void fill_uniform(Tensor& t, double lo, double hi) {
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace dimba

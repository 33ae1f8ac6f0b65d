#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cdc {

// Deterministic random source. All stochastic code in the library draws from
// one of these, seeded explicitly, so runs are reproducible bit-for-bit.
// Distributions are hand-rolled from raw mt19937_64 output instead of
// <random> distribution objects, whose streams differ across standard
// library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

    // uniform in [0, 1)
    double u01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * u01();
    }

    // standard Gumbel draw, -log(-log(u)) with u in (0, 1)
    double gumbel() {
        double u = u01();
        if (u <= 0.0) u = 0x1.0p-53;
        return -std::log(-std::log(u));
    }

    // integer in [0, n)
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(u01() * static_cast<double>(n)) % n;
    }

    // derive an independent stream (for sub-components)
    Rng split() {
        std::uint64_t a = gen_();
        std::uint64_t b = gen_();
        return Rng(a ^ (b << 1) ^ 0x9e3779b97f4a7c15ull);
    }

    std::uint64_t raw() { return gen_(); }

private:
    std::mt19937_64 gen_;
};

}  // namespace cdc

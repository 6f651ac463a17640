#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace skp {

// Deterministic random stream. mt19937_64 output is fully specified by the
// standard; the transforms below are hand-rolled so that identical seeds give
// identical streams on every compiler and platform (the standard library
// distribution objects make no such guarantee).
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next() { return gen_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased uniform integer in [0, n). n must be nonzero.
    uint64_t below(uint64_t n);

    // Standard normal via Box-Muller.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    // m distinct values from [0, n), in draw order.
    std::vector<size_t> sample_distinct(size_t n, size_t m);

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Independent child seed for a (base, salt) pair.
uint64_t derive_seed(uint64_t base, uint64_t salt);

} // namespace skp

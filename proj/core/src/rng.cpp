#include "skp/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

namespace skp {

uint64_t Rng::below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be nonzero");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t r;
    do {
        r = next();
    } while (r >= limit);
    return r % n;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // (0,1) on both sides so log() stays finite
    double u1 = (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
    double u2 = uniform();
    double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return mag * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<size_t> Rng::sample_distinct(size_t n, size_t m) {
    if (m > n) throw std::invalid_argument("Rng::sample_distinct: m > n");
    std::vector<size_t> out;
    out.reserve(m);
    // Partial Fisher-Yates over a virtual identity array.
    std::unordered_map<size_t, size_t> moved;
    for (size_t i = 0; i < m; ++i) {
        size_t j = i + below(n - i);
        auto it_j = moved.find(j);
        size_t value_j = it_j == moved.end() ? j : it_j->second;
        auto it_i = moved.find(i);
        size_t value_i = it_i == moved.end() ? i : it_i->second;
        moved[j] = value_i;
        out.push_back(value_j);
    }
    return out;
}

uint64_t derive_seed(uint64_t base, uint64_t salt) {
    // splitmix64 finalizer over the mixed pair
    uint64_t z = base + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace skp

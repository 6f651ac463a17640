#include "skp/half.hpp"

#include <bit>
#include <cmath>
#include <limits>

namespace skp {

uint16_t to_half(double x) {
    const uint64_t bits = std::bit_cast<uint64_t>(x);
    const uint16_t sign = static_cast<uint16_t>((bits >> 48) & 0x8000u);
    const double ax = std::fabs(x);

    if (std::isnan(x)) return static_cast<uint16_t>(sign | 0x7E00u);
    // 65520 is the midpoint between the largest finite half (65504) and the
    // next grid value; everything at or beyond it saturates.
    if (ax >= 65520.0) return static_cast<uint16_t>(sign | 0x7BFFu);
    if (ax < 0x1p-14) {
        // Subnormal target grid, units of 2^-24. The scale is a power of two
        // so the product is exact; nearbyint rounds to nearest even in the
        // default environment. A carry to 1024 lands on the smallest normal,
        // whose encoding is exactly exponent=1, mantissa=0.
        double q = ax * 0x1p24;
        auto m = static_cast<uint16_t>(std::nearbyint(q));
        return static_cast<uint16_t>(sign | m);
    }

    int e = std::ilogb(ax);
    double t = std::ldexp(ax, 10 - e); // in [1024, 2048)
    auto q = static_cast<uint32_t>(std::nearbyint(t));
    if (q == 2048) {
        q = 1024;
        ++e;
    }
    auto he = static_cast<uint16_t>(e + 15);
    return static_cast<uint16_t>(sign | (he << 10) | static_cast<uint16_t>(q - 1024));
}

double from_half(uint16_t h) {
    const bool neg = (h & 0x8000u) != 0;
    const int he = (h >> 10) & 0x1F;
    const int hm = h & 0x3FF;
    double v;
    if (he == 0) {
        v = std::ldexp(static_cast<double>(hm), -24);
    } else if (he == 31) {
        v = hm != 0 ? std::numeric_limits<double>::quiet_NaN()
                    : std::numeric_limits<double>::infinity();
    } else {
        v = std::ldexp(static_cast<double>(1024 + hm), he - 25);
    }
    return neg ? -v : v;
}

} // namespace skp

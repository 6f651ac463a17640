#pragma once

#include <cstdint>

namespace skp {

// IEEE 754 binary16 conversion, round-to-nearest-even. Values beyond the
// finite half range saturate to +-65504 instead of producing infinities.
uint16_t to_half(double x);

// Exact widening of a binary16 pattern. Infinity/NaN patterns map to the
// corresponding double values; callers reject non-finite data at ingestion.
double from_half(uint16_t bits);

} // namespace skp

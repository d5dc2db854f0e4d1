// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "tailor/bf16.hpp"

using namespace tailor;

namespace {

float from_bits(std::uint32_t bits) {
    float x;
    std::memcpy(&x, &bits, sizeof(x));
    return x;
}

// Independent round-to-nearest-even reference: compare the exact distance to
// the two neighbouring BF16 values in double precision.
std::uint16_t reference_round(float x) {
    std::uint32_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    if (std::isnan(x)) return static_cast<std::uint16_t>((bits >> 16) | 0x0040u);

    const std::uint16_t lo = static_cast<std::uint16_t>(bits >> 16); // truncation
    if ((bits & 0xFFFFu) == 0) return lo;
    // lo and lo+1 bracket x unless lo is the top of a binade sign-wise;
    // stepping the 16-bit pattern by one is exactly the next BF16 value
    // away from zero, which is the correct upper neighbour here because a
    // nonzero low half means |x| > |bf16(lo)|.
    const std::uint16_t hi = static_cast<std::uint16_t>(lo + 1);
    const double dx = static_cast<double>(x);
    const double dlo = static_cast<double>(bf16_to_float(lo));
    // When hi overflows to infinity, the value it stands in for on the
    // rounding grid is 2^128.
    double dhi = static_cast<double>(bf16_to_float(hi));
    if (std::isinf(dhi)) dhi = std::copysign(std::ldexp(1.0, 128), dhi);
    const double to_lo = std::abs(dx - dlo);
    const double to_hi = std::abs(dhi - dx);
    if (to_lo < to_hi) return lo;
    if (to_hi < to_lo) return hi;
    return (lo & 1) == 0 ? lo : hi; // tie: even mantissa wins
}

} // namespace

TEST_CASE("bf16 rounding basics") {
    CHECK(bf16_round(1.0f) == 0x3F80);
    CHECK(bf16_to_float(bf16_round(1.0f)) == 1.0f);

    // 1.001953125: low half 0x4000 is exactly half of an odd... no, rounds
    // down to even 0x3F80.
    CHECK(bf16_round(from_bits(0x3F804000u)) == 0x3F80);

    // Negative zero keeps its sign.
    CHECK(bf16_round(-0.0f) == 0x8000);
    CHECK(std::signbit(bf16_to_float(bf16_round(-0.0f))));

    // Ties to even: 0x3F808000 is exactly between 0x3F80 and 0x3F81.
    CHECK(bf16_round(from_bits(0x3F808000u)) == 0x3F80);
    CHECK(bf16_round(from_bits(0x3F818000u)) == 0x3F82);

    // Inf propagates; NaN stays NaN.
    CHECK(bf16_round(INFINITY) == 0x7F80);
    CHECK(std::isnan(bf16_to_float(bf16_round(NAN))));
}

TEST_CASE("bf16 rounding matches the nearest-even reference across all prefixes") {
    // Sweep every 16-bit prefix with the interesting low halves: exact,
    // just-below-half, half (tie), just-above-half, maximal.
    const std::uint32_t suffixes[] = {0x0000u, 0x7FFFu, 0x8000u, 0x8001u, 0xFFFFu};
    for (std::uint32_t prefix = 0; prefix <= 0xFFFFu; ++prefix) {
        for (std::uint32_t suffix : suffixes) {
            const float x = from_bits((prefix << 16) | suffix);
            if (std::isnan(x)) {
                CHECK(std::isnan(bf16_to_float(bf16_round(x))));
                continue;
            }
            if (std::isinf(x)) {
                CHECK(bf16_round(x) == static_cast<std::uint16_t>(prefix));
                continue;
            }
            const std::uint16_t got = bf16_round(x);
            const std::uint16_t want = reference_round(x);
            if (got != want) {
                CAPTURE(prefix);
                CAPTURE(suffix);
                REQUIRE(got == want);
            }
        }
    }
}

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>

namespace tailor {

/// Round an FP32 value to BF16 (round-to-nearest-even on the top 16 bits
/// of the IEEE-754 representation). NaN and Inf propagate; NaN payloads are
/// quieted so the result stays a NaN after truncation.
inline std::uint16_t bf16_round(float x) {
    std::uint32_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    if ((bits & 0x7F800000u) == 0x7F800000u && (bits & 0x007FFFFFu) != 0) {
        return static_cast<std::uint16_t>((bits >> 16) | 0x0040u); // quiet NaN
    }
    const std::uint32_t lsb = (bits >> 16) & 1u;
    return static_cast<std::uint16_t>((bits + 0x7FFFu + lsb) >> 16);
}

/// Widen a BF16 value back to FP32 (exact).
inline float bf16_to_float(std::uint16_t h) {
    const std::uint32_t bits = static_cast<std::uint32_t>(h) << 16;
    float x;
    std::memcpy(&x, &bits, sizeof(x));
    return x;
}

} // namespace tailor

#pragma once

#include <cstdint>

namespace snprobe {

/// IEEE 754 binary16 -> binary32. Exact for every input, NaN payloads kept.
float half_to_float(std::uint16_t h) noexcept;

/// binary32 -> binary16 with round-to-nearest-even; overflow saturates to inf.
std::uint16_t float_to_half(float f) noexcept;

inline constexpr bool half_is_finite(std::uint16_t h) noexcept {
    return (h & 0x7c00u) != 0x7c00u;
}

} // namespace snprobe

#pragma once

#include "snprobe/dump.hpp"
#include "snprobe/half.hpp"

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>

namespace snprobe::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
inline T load_le(const std::byte* p) noexcept {
    T v;
    std::memcpy(&v, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        auto* b = reinterpret_cast<unsigned char*>(&v);
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    return v;
}

template <class T>
inline void store_le(std::byte* p, T v) noexcept {
    if constexpr (std::endian::native == std::endian::big) {
        auto* b = reinterpret_cast<unsigned char*>(&v);
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    std::memcpy(p, &v, sizeof(T));
}

inline float load_scalar(ScalarKind kind, const std::byte* p) noexcept {
    if (kind == ScalarKind::f16) return half_to_float(load_le<std::uint16_t>(p));
    return load_le<float>(p);
}

inline bool f32_bits_finite(std::uint32_t bits) noexcept {
    return (bits & 0x7f800000u) != 0x7f800000u;
}

} // namespace snprobe::detail

#include "snprobe/half.hpp"

#include <gtest/gtest.h>
#include <immintrin.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

using namespace snprobe;

namespace {

bool have_f16c() { return __builtin_cpu_supports("f16c"); }

float hw_half_to_float(std::uint16_t h) { return _cvtsh_ss(h); }
std::uint16_t hw_float_to_half(float f) {
    return static_cast<std::uint16_t>(_cvtss_sh(f, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC));
}

} // namespace

TEST(Half, DecodesEveryBitPatternLikeHardware) {
    if (!have_f16c()) GTEST_SKIP() << "no F16C on this CPU";
    for (std::uint32_t h = 0; h <= 0xffff; ++h) {
        const float ours = half_to_float(static_cast<std::uint16_t>(h));
        const float hw = hw_half_to_float(static_cast<std::uint16_t>(h));
        if (std::isnan(hw)) {
            ASSERT_TRUE(std::isnan(ours)) << h;
        } else {
            ASSERT_EQ(std::bit_cast<std::uint32_t>(ours), std::bit_cast<std::uint32_t>(hw)) << h;
        }
    }
}

TEST(Half, EveryHalfRoundTrips) {
    for (std::uint32_t h = 0; h <= 0xffff; ++h) {
        if (!half_is_finite(static_cast<std::uint16_t>(h)) && (h & 0x3ffu) != 0) continue; // NaN
        ASSERT_EQ(float_to_half(half_to_float(static_cast<std::uint16_t>(h))), h) << h;
    }
}

TEST(Half, EncodesRandomFloatsLikeHardware) {
    if (!have_f16c()) GTEST_SKIP() << "no F16C on this CPU";
    std::mt19937 rng(1234);
    for (int i = 0; i < 2'000'000; ++i) {
        const float f = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
        if (std::isnan(f)) continue;
        ASSERT_EQ(float_to_half(f), hw_float_to_half(f)) << std::bit_cast<std::uint32_t>(f);
    }
}

TEST(Half, EncodesEveryRoundingBoundaryLikeHardware) {
    if (!have_f16c()) GTEST_SKIP() << "no F16C on this CPU";
    // Midpoints between adjacent halves, and their float neighbours.
    for (std::uint32_t h = 0; h < 0x7c00; ++h) {
        const double lo = half_to_float(static_cast<std::uint16_t>(h));
        const double hi = h + 1 == 0x7c00 ? 65536.0 : half_to_float(static_cast<std::uint16_t>(h + 1));
        const float mid = static_cast<float>((lo + hi) / 2);
        for (float f : {mid, std::nextafter(mid, 0.0f), std::nextafter(mid, 1e30f)}) {
            ASSERT_EQ(float_to_half(f), hw_float_to_half(f)) << h;
            ASSERT_EQ(float_to_half(-f), hw_float_to_half(-f)) << h;
        }
    }
}

TEST(Half, SpecialValues) {
    EXPECT_EQ(float_to_half(0.0f), 0x0000);
    EXPECT_EQ(float_to_half(-0.0f), 0x8000);
    EXPECT_EQ(float_to_half(1.0f), 0x3c00);
    EXPECT_EQ(float_to_half(65504.0f), 0x7bff);
    EXPECT_EQ(float_to_half(65520.0f), 0x7c00); // rounds up to inf
    EXPECT_EQ(float_to_half(std::numeric_limits<float>::infinity()), 0x7c00);
    EXPECT_TRUE(std::isnan(half_to_float(float_to_half(std::numeric_limits<float>::quiet_NaN()))));
    EXPECT_EQ(half_to_float(0x0001), std::ldexp(1.0f, -24));
    EXPECT_FALSE(half_is_finite(0x7c00));
    EXPECT_FALSE(half_is_finite(0xfe00));
    EXPECT_TRUE(half_is_finite(0x7bff));
}

#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Stateless:
// every output block is a pure function of (counter, key), so any element of
// a generated tensor can be produced independently of the others.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace snprobe {

class Philox4x32 {
  public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    explicit constexpr Philox4x32(std::uint64_t seed) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}
    explicit constexpr Philox4x32(Key key) noexcept : key_(key) {}

    constexpr Counter operator()(Counter ctr) const noexcept {
        Key key = key_;
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        }
        return ctr;
    }

  private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    Key key_;
};

/// Uniform in the open interval (0, 1).
constexpr double unit_open(std::uint32_t x) noexcept {
    return (static_cast<double>(x) + 0.5) * (1.0 / 4294967296.0);
}

inline constexpr std::uint64_t join64(std::uint32_t hi, std::uint32_t lo) noexcept {
    return (std::uint64_t{hi} << 32) | lo;
}

/// Two independent standard normals from one block (Box-Muller).
inline std::array<double, 2> normal_pair(const Philox4x32::Counter& block) noexcept {
    const double u1 = unit_open(block[0]);
    const double u2 = unit_open(block[1]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
}

} // namespace snprobe

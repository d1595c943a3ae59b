#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace fastmr {

/// Philox4x32-10 counter-based generator (Salmon et al. 2011 constants).
struct Philox4x32 {
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr std::uint32_t kM0 = 0xD2511F53U;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57U;
    static constexpr std::uint32_t kW0 = 0x9E3779B9U;
    static constexpr std::uint32_t kW1 = 0xBB67AE85U;

    static constexpr Block generate(Block ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kW0;
                key[1] += kW1;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }
};

/// Two standard normals for (stream, step) from one Philox block by Box-Muller.
/// The stream is a 64-bit path-pair index; the seed forms the key.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t stream)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_lo_(static_cast<std::uint32_t>(stream)),
          stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

    std::array<double, 2> pair(std::uint64_t step) const {
        const auto b = Philox4x32::generate(
            {static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32), stream_lo_, stream_hi_}, key_);
        constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
        const std::uint64_t a = (static_cast<std::uint64_t>(b[0]) << 32 | b[1]) >> 11;
        const std::uint64_t c = (static_cast<std::uint64_t>(b[2]) << 32 | b[3]) >> 11;
        const double u1 = (static_cast<double>(a) + 1.0) * kScale;  // (0, 1]
        const double u2 = static_cast<double>(c) * kScale;          // [0, 1)
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = 2.0 * std::numbers::pi * u2;
        return {r * std::cos(phi), r * std::sin(phi)};
    }

private:
    Philox4x32::Key key_;
    std::uint32_t stream_lo_;
    std::uint32_t stream_hi_;
};

}  // namespace fastmr

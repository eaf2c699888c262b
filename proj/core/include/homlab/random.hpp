#pragma once

// Counter-based random numbers (Philox4x32-10). Every simulated path owns a
// stream keyed by (seed, stream id), so a path's draws do not depend on how
// paths are scheduled across workers.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace homlab {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

constexpr PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept {
    constexpr std::uint32_t kMulA = 0xD2511F53u;
    constexpr std::uint32_t kMulB = 0xCD9E8D57u;
    constexpr std::uint32_t kWeylA = 0x9E3779B9u;
    constexpr std::uint32_t kWeylB = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeylA;
        key[1] += kWeylB;
    }
    return ctr;
}

/// splitmix64 finaliser; used to derive independent seeds for sub-experiments.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// One reproducible stream. Each Philox block yields two 64-bit words, which
/// become two uniforms or (Box-Muller) two standard normals.
class StreamRng {
public:
    StreamRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_lo_(static_cast<std::uint32_t>(stream)),
          stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept {
        if (!have_uniform_) {
            refill();
            have_uniform_ = true;
            return to_unit(word0_);
        }
        have_uniform_ = false;
        return to_unit(word1_);
    }

    double normal() noexcept {
        if (have_normal_) {
            have_normal_ = false;
            return spare_normal_;
        }
        refill();
        const double u1 = to_unit(word0_);
        const double u2 = to_unit(word1_);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_normal_ = r * std::sin(angle);
        have_normal_ = true;
        return r * std::cos(angle);
    }

    std::uint64_t blocks_used() const noexcept { return block_; }

private:
    static double to_unit(std::uint64_t w) noexcept {
        return (static_cast<double>(w >> 11) + 0.5) * 0x1.0p-53;
    }

    void refill() noexcept {
        const PhiloxCounter out = philox4x32_10(
            {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32), stream_lo_, stream_hi_},
            key_);
        ++block_;
        word0_ = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
        word1_ = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
    }

    PhiloxKey key_;
    std::uint32_t stream_lo_;
    std::uint32_t stream_hi_;
    std::uint64_t block_ = 0;
    std::uint64_t word0_ = 0;
    std::uint64_t word1_ = 0;
    double spare_normal_ = 0.0;
    bool have_normal_ = false;
    bool have_uniform_ = false;
};

}  // namespace homlab

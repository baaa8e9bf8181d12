#pragma once

// Counter-based random streams built on Philox4x32-10 (Salmon et al., SC'11).
//
// A stream is identified by (key, stream id); the 128-bit Philox counter is
// laid out as {block_lo, block_hi, stream_lo, stream_hi}. Deriving a child
// stream never consumes state from the parent, so any (seed, step, layer)
// triple maps to the same numbers regardless of evaluation order.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace specclip {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Raw Philox4x32 block function with 10 rounds.
inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kM0 = 0xD2511F53u;
    constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u;
    constexpr std::uint32_t kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kW0;
        key[1] += kW1;
    }
    return ctr;
}

/// A seeded stream handle. Copying an Rng copies its position; `derive`
/// produces an independent child stream keyed by the given tag.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : key_{seed}, stream_{stream} {}

    [[nodiscard]] Rng derive(std::uint64_t tag) const {
        return Rng{key_, detail::splitmix64(stream_ ^ detail::splitmix64(tag + 0x632BE59BD9B4E019ULL))};
    }
    template <class... Tags>
    [[nodiscard]] Rng derive(std::uint64_t tag, Tags... rest) const {
        return derive(tag).derive(static_cast<std::uint64_t>(rest)...);
    }

    std::uint32_t next_u32() {
        if (used_ == 4) refill();
        return buffer_[used_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1].
    double uniform_pos() { return 1.0 - uniform(); }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double radius = std::sqrt(-2.0 * std::log(uniform_pos()));
        const double angle = 2.0 * std::numbers::pi * uniform();
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Fair coin, +1 or -1.
    int sign() { return (next_u32() & 1u) ? 1 : -1; }

    [[nodiscard]] std::uint64_t seed() const { return key_; }
    [[nodiscard]] std::uint64_t stream() const { return stream_; }

private:
    void refill() {
        const std::array<std::uint32_t, 4> ctr{
            static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
            static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        buffer_ = philox4x32_10(ctr, {static_cast<std::uint32_t>(key_),
                                      static_cast<std::uint32_t>(key_ >> 32)});
        ++block_;
        used_ = 0;
    }

    std::uint64_t key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int used_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace specclip

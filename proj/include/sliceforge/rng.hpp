#pragma once

// Deterministic random streams.
//
// Generator: xoshiro256** (Blackman & Vigna, 2018), state seeded by four
// consecutive outputs of SplitMix64. Bounded integers use rejection sampling
// on the full 64-bit output (threshold = 2^64 mod range), doubles use the
// top 53 bits. No std:: distributions are involved, so draws are identical
// across standard libraries and platforms.
//
// Streams are derived from (seed, purpose, index): the SplitMix64 seed word is
// seed ^ mix(purpose) ^ mix(index + 1) with mix = one SplitMix64 finalizer.

#include <array>
#include <cstddef>
#include <cstdint>

namespace sliceforge {

enum class StreamPurpose : std::uint64_t {
    Scenario = 1,
    Exploration = 2,
    Replay = 3,
    Init = 4,
    Evaluation = 5,
};

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        return splitmix64_mix(state_);
    }

private:
    std::uint64_t state_;
};

class Rng {
public:
    using result_type = std::uint64_t;

    explicit constexpr Rng(std::uint64_t seed) noexcept {
        SplitMix64 sm(seed);
        for (auto& word : s_) word = sm.next();
    }

    static constexpr Rng stream(std::uint64_t seed, StreamPurpose purpose,
                                std::uint64_t index = 0) noexcept {
        const auto tag = static_cast<std::uint64_t>(purpose);
        return Rng(seed ^ splitmix64_mix(tag * 0x9e3779b97f4a7c15ULL) ^
                   splitmix64_mix(index + 1));
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~std::uint64_t{0}; }

    constexpr result_type operator()() noexcept { return next(); }

    constexpr std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform integer in [lo, hi], both inclusive. Requires lo <= hi.
    constexpr std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
        const std::uint64_t range =
            static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
        if (range == 0) return static_cast<std::int64_t>(next());  // full 64-bit span
        const std::uint64_t threshold = (0 - range) % range;
        std::uint64_t x = next();
        while (x < threshold) x = next();
        return static_cast<std::int64_t>(static_cast<std::uint64_t>(lo) + x % range);
    }

    // Uniform index in [0, count). Requires count > 0.
    constexpr std::size_t uniform_index(std::size_t count) noexcept {
        return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(count) - 1));
    }

    // Uniform double in [0, 1).
    constexpr double uniform01() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Uniform double in [lo, hi).
    constexpr double uniform_real(double lo, double hi) noexcept {
        return lo + (hi - lo) * uniform01();
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> s_{};
};

}  // namespace sliceforge

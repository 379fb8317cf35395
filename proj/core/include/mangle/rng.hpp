#pragma once

#include <cstdint>
#include <string_view>

namespace mangle {

/// SplitMix64. Fixed algorithm so partitions and schedules reproduce across
/// platforms and standard libraries (std distributions are not portable).
class SplitMix64 {
public:
    static constexpr std::string_view name = "splitmix64";

    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept
    {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform draw from [0, bound) by rejection; bound must be nonzero.
    constexpr std::uint64_t below(std::uint64_t bound) noexcept
    {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x = next();
        while (x >= limit)
            x = next();
        return x % bound;
    }

    /// Uniform double in [0, 1).
    constexpr double unit() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Independent child stream.
    constexpr SplitMix64 split() noexcept { return SplitMix64(next()); }

private:
    std::uint64_t state_;
};

} // namespace mangle

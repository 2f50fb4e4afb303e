#pragma once

// Counter-based random streams. Every draw is a pure function of
// (seed, tag, stream, counter), so results never depend on the order in
// which workers consume them.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace rcm {

/// Purpose tags keep streams for different uses disjoint.
enum class StreamTag : std::uint64_t {
    EdgeSample = 0x45444745,   // "EDGE"
    Resample = 0x52534d50,     // "RSMP"
    Moment = 0x4d4f4d54,       // "MOMT"
    Ensemble = 0x454e5342,     // "ENSB"
    Bootstrap = 0x42535450,    // "BSTP"
    Probe = 0x50524f42,        // "PROB"
};

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t hash_key(std::uint64_t seed, StreamTag tag, std::uint64_t stream,
                                 std::uint64_t index) noexcept {
    std::uint64_t h = splitmix64(seed ^ static_cast<std::uint64_t>(tag));
    h = splitmix64(h ^ stream);
    return splitmix64(h ^ index);
}

/// A stream of uniform draws addressed by a fixed key plus a running counter.
class CounterRng {
public:
    constexpr CounterRng(std::uint64_t seed, StreamTag tag, std::uint64_t stream,
                         std::uint64_t index) noexcept
        : key_(hash_key(seed, tag, stream, index)) {}

    constexpr std::uint64_t next_u64() noexcept { return splitmix64(key_ + 0x632be59bd9b4e019ULL * ++counter_); }

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal() noexcept {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace rcm

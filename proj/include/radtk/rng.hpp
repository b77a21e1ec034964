#pragma once

#include <cmath>
#include <cstdint>
#include <iterator>
#include <utility>

namespace radtk {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
}

}  // namespace detail

// Deterministic stream generator: xoshiro256** seeded through splitmix64.
// The algorithm is fixed by this header, so an identical seed yields an
// identical stream on every platform. All randomized operations in the
// library draw from this type only; std:: distributions are never used
// because their output is implementation-defined.
class RngState {
public:
    explicit RngState(std::uint64_t seed) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = detail::splitmix64(sm);
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl64(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = detail::rotl64(s_[3], 45);
        return result;
    }

    // Uniform in [0,1) with 53 bits of precision.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float next_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Unbiased integer in [0, bound) via 128-bit multiply with rejection.
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound == 0) return 0;
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < bound) {
            const std::uint64_t floor = (0 - bound) % bound;
            while (lo < floor) {
                m = static_cast<unsigned __int128>(next_u64()) * bound;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Standard normal via Box-Muller (both draws consumed every call so the
    // stream position stays a pure function of call count).
    double next_gaussian() {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Fisher-Yates.
    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(std::distance(first, last));
        for (std::uint64_t i = n; i > 1; --i) {
            const std::uint64_t j = next_below(i);
            std::swap(*(first + static_cast<std::ptrdiff_t>(i - 1)),
                      *(first + static_cast<std::ptrdiff_t>(j)));
        }
    }

    // Independent substream keyed on (seed, tag); used to decorrelate the
    // init / dropout / shuffle / split consumers of one run-level seed.
    RngState split(std::uint64_t tag) const {
        std::uint64_t sm = seed_ ^ (0x6a09e667f3bcc909ULL + tag * 0x9e3779b97f4a7c15ULL);
        return RngState(detail::splitmix64(sm));
    }

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
};

}  // namespace radtk

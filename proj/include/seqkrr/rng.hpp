#pragma once

#include <cmath>
#include <cstdint>

namespace seqkrr {

// Deterministic, platform-independent streams: results must be byte-identical
// for a fixed (config, seed) regardless of stdlib or thread scheduling, so we
// avoid std::normal_distribution and derive one stream per (trial, purpose).

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// xoshiro256** with Box-Muller gaussians.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    std::uint64_t next_u64() {
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

    /// Uniform in (0,1).
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4]{};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Independent substream for (trial, purpose) under a master seed.
inline Rng derive_stream(std::uint64_t master, std::uint64_t trial, std::uint64_t purpose) {
    std::uint64_t sm = master;
    std::uint64_t a = splitmix64(sm);
    sm = a ^ (trial * 0x9e3779b97f4a7c15ULL + 0x243f6a8885a308d3ULL);
    std::uint64_t b = splitmix64(sm);
    sm = b ^ (purpose * 0xd1b54a32d192ed03ULL + 0x452821e638d01377ULL);
    return Rng(splitmix64(sm));
}

}  // namespace seqkrr

#pragma once

#include <cmath>
#include <cstdint>

namespace hdtreat {

// splitmix64 finalizer; also used to derive independent sub-seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Injective-in-practice seed derivation for (point, rep) grids; every stage
// is a bijection of the accumulated state so collisions require a genuine
// birthday coincidence. The harness tests injectivity over each sweep.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = base;
    std::uint64_t h = splitmix64(s);
    s = h + 0x9e3779b97f4a7c15ull * (a + 1);
    h = splitmix64(s);
    s = h + 0xd1b54a32d192ed03ull * (b + 1);
    return splitmix64(s);
}

// xoshiro256++ with all draw transforms written out explicitly, so that a
// given seed produces the same stream on every platform and thread count.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    bool next_bernoulli(double p) { return next_double() < p; }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller; one spare is cached.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - next_double();  // (0, 1], log-safe
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace hdtreat

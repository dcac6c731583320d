#pragma once

#include <cstdint>
#include <vector>

namespace tmfill {

// PCG32 (XSH-RR variant, 64-bit state / 32-bit output), fixed here so that
// seeded runs are bit-identical on every platform. The reference algorithm
// is O'Neill's pcg32 with the default stream constant.
//
//   state' = state * 6364136223846793005 + inc
//   output = rotr32((state ^ (state >> 18)) >> 27, state >> 59)
//
// Seeding: state = 0; step; state += seed; step.
class Pcg32 {
public:
    static constexpr std::uint64_t kDefaultStream = 0xda3e39cb94b95bdbULL;

    explicit Pcg32(std::uint64_t seed, std::uint64_t stream = kDefaultStream)
        : state_(0), inc_((stream << 1u) | 1u) {
        next();
        state_ += seed;
        next();
    }

    std::uint32_t next() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    /// Unbiased integer in [0, bound) via rejection sampling. bound ≥ 1.
    std::uint32_t bounded(std::uint32_t bound) {
        std::uint32_t threshold = (0u - bound) % bound;
        for (;;) {
            std::uint32_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    /// Uniform double in [0, 1) with 32 bits of randomness.
    double next_double() { return next() * 0x1p-32; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

private:
    std::uint64_t state_;
    std::uint64_t inc_;
};

// In-place Fisher-Yates: for i = n-1 .. 1, j = bounded(i+1), swap(v[i], v[j]).
// This exact order is part of the on-disk split contract; do not change it.
template <typename T>
void fisher_yates_shuffle(std::vector<T>& v, Pcg32& rng) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
        std::size_t j = rng.bounded(static_cast<std::uint32_t>(i + 1));
        std::swap(v[i], v[j]);
    }
}

} // namespace tmfill

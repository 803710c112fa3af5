#pragma once

#include <cstdint>

namespace univec {

// Counter-based splittable RNG. Every stream is keyed by up to three
// 64-bit indices, so parallel scene/instance generation is order-independent
// and bit-reproducible across platforms.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream_a = 0,
                 std::uint64_t stream_b = 0)
        : state_(splitmix64(splitmix64(splitmix64(seed) ^ stream_a) ^ stream_b)) {}

    std::uint64_t next_u64() {
        state_ = splitmix64(state_ ^ counter_++);
        return state_;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [lo, hi] inclusive
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(
                        next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
    }

private:
    std::uint64_t state_;
    std::uint64_t counter_ = 0;
};

} // namespace univec

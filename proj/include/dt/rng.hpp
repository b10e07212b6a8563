#pragma once

#include <cstdint>

namespace dt {

// SplitMix64 scrambler; used to derive independent sub-seeds from one master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Fixed seed-derivation scheme so every stage of the pipeline draws from a
// disjoint stream: derive_seed(master, domain, index). Domains used across
// the project:
//   0 world simulation (index = sequence)
//   1 sensor noise     (index = sequence)
//   2 parameter init
//   3 training loop (sampling + per-iteration schedules)
//   4 evaluation dropout schedules (index = sequence)
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t domain, std::uint64_t index) {
    return splitmix64(splitmix64(master ^ (0x9e3779b97f4a7c15ULL * (domain + 1))) + index);
}

// PCG32 (O'Neill, pcg-random.org). 64-bit LCG state, 32-bit xorshift-rotate
// output. Small, fast, and reproducible across platforms, which is what the
// simulator needs: a (config, seed) pair fully determines a trajectory.
struct Pcg32 {
    std::uint64_t state = 0x853c49e6748fea9bULL;
    std::uint64_t inc = 0xda3e39cb94b95bdbULL;

    Pcg32() = default;
    explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0) { reseed(seed, stream); }

    // Canonical pcg32_srandom: distinct streams give independent sequences
    // for the same seed.
    void reseed(std::uint64_t seed, std::uint64_t stream = 0) {
        state = 0u;
        inc = (stream << 1u) | 1u;
        next_u32();
        state += seed;
        next_u32();
    }

    std::uint32_t next_u32() {
        const std::uint64_t old = state;
        state = old * 6364136223846793005ULL + inc;
        const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        const auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((0u - rot) & 31u));
    }

    std::uint64_t next_u64() {
        const std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Debiased bounded draw in [0, bound), canonical rejection method.
    std::uint32_t next_below(std::uint32_t bound) {
        const std::uint32_t threshold = (0u - bound) % bound;
        for (;;) {
            const std::uint32_t r = next_u32();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform in [0, 1) with 32 bits of resolution.
    double next_double() { return next_u32() * 0x1p-32; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }
};

}  // namespace dt

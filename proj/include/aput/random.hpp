#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "aput/errors.hpp"

namespace aput {

/// SplitMix64 finalizer; used to decorrelate derived seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic per-stream seed from a master seed and a stream index.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master ^ splitmix64(index + 1));
}

/// Seeded RNG with portable draw helpers. The engine (mt19937_64) has a
/// standardized output sequence; the helpers below avoid std::*_distribution
/// so that every draw is bit-reproducible across platforms and toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double next_u01() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_u01();
    }

    /// Index sampled from an (approximately normalized) probability vector.
    int categorical(std::span<const double> probs) {
        if (probs.empty()) throw UsageError("categorical: empty distribution");
        const double u = next_u01();
        double acc = 0.0;
        int last_positive = -1;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] > 0.0) last_positive = static_cast<int>(i);
            acc += probs[i];
            if (u < acc) return static_cast<int>(i);
        }
        if (last_positive < 0) throw UsageError("categorical: all-zero distribution");
        return last_positive; // u fell into rounding slack at the top
    }

    /// Uniform integer in [0, n).
    int uniform_int(int n) {
        if (n <= 0) throw UsageError("uniform_int: n must be positive");
        int v = static_cast<int>(next_u01() * n);
        return v < n ? v : n - 1;
    }

private:
    std::mt19937_64 eng_;
};

} // namespace aput

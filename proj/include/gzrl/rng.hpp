// Deterministic random number generation. The engine (mt19937_64) is fully
// specified by the standard; the variate transforms below are hand-written
// because std::uniform_real_distribution and std::normal_distribution are
// implementation-defined and would break byte-reproducibility.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace gzrl {

// SplitMix64 finalizer. Used to derive independent child seeds, e.g.
// per-episode seed = mix_seed(global_seed, episode_index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Named sub-streams so independent consumers of one seed never collide.
namespace stream {
inline constexpr std::uint64_t kScene = 0;
inline constexpr std::uint64_t kProprio = 1;
inline constexpr std::uint64_t kBatch = 2;
inline constexpr std::uint64_t kEval = 3;
inline constexpr std::uint64_t kShuffleVariant = 4;
inline constexpr std::uint64_t kInit = 5;
inline constexpr std::uint64_t kPerturb = 6;
} // namespace stream

} // namespace gzrl

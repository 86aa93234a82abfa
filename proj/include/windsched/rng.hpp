#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace windsched {

/// Deterministic random source. Wraps mt19937_64 with hand-rolled uniform and
/// normal draws so that sequences are identical across standard libraries
/// (std distributions are implementation-defined).
class Rng {
  public:
    explicit Rng(uint64_t seed = 1) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1).
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(gen_() % span);
    }

    /// Box-Muller normal draw. Consumes exactly two uniforms per call.
    double normal(double mean, double stddev) {
        const double u1 = 1.0 - uniform01();  // (0, 1]
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

  private:
    std::mt19937_64 gen_;
};

/// splitmix64 step; used to derive independent per-item seeds from a base seed.
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for item `index` of stream `stream` under `base`. Collision-free in
/// practice for the scales used here; stable across platforms.
inline uint64_t derive_seed(uint64_t base, uint64_t stream, uint64_t index) {
    return mix_seed(mix_seed(base ^ (stream * 0xd1342543de82ef95ULL)) + index);
}

}  // namespace windsched

#ifndef TFLR_RNG_HPP
#define TFLR_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace tflr {

// splitmix64 step; used to derive independent stream seeds from a root
// seed and one or more counters, so that parallel replicates are
// reproducible regardless of scheduling.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index,
                                 std::uint64_t tag = 0) {
    std::uint64_t s = root;
    std::uint64_t a = splitmix64(s);
    s = a ^ (index * 0xD1B54A32D192ED03ULL + tag * 0x8CB92BA72F3D8DD7ULL);
    return splitmix64(s);
}

// Deterministic stream of uniforms and normals. The transforms are spelled
// out (rather than using std:: distributions) so streams are bit-identical
// across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on (0, 1); never returns 0 so log() below is safe.
    double uniform() {
        const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        return u > 0.0 ? u : 0x1.0p-53;
    }

    // Standard normal via Box-Muller. Two uniforms per draw, no cached
    // spare, so the stream position is a pure function of the draw count.
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        // rejection sampling to avoid modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<int>(x % bound);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace tflr

#endif

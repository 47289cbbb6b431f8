#ifndef BIFLAB_RNG_HPP
#define BIFLAB_RNG_HPP

#include <cstdint>

#include "biflab/core.hpp"

namespace biflab {

// Splitmix64. Fully specified arithmetic, so streams are identical across
// platforms and thread schedules; std distributions are avoided on purpose.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t x = (state += 0x9E3779B97F4A7C15ULL);
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Stable per-index key derivation for substream seeding.
inline std::uint64_t splitmix64_key(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t st = seed ^ (0x9E3779B97F4A7C15ULL * (index + 0x51ED2701));
    return splitmix64(st);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // warm up so that small seeds decorrelate quickly
        splitmix64(state_);
        splitmix64(state_);
    }

    /// Independent substream keyed by (seed, index); scheduling-invariant.
    static Rng derive(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t s = seed;
        std::uint64_t a = splitmix64(s);
        std::uint64_t t = a ^ (0xD1B54A32D192ED03ULL * (index + 1));
        return Rng(t);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform in [0,1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Index in [0, n) by rejection-free scaling (n small in this codebase).
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    cplx uniform_disk(double radius) {
        // area-uniform via sqrt radius
        double r = radius * std::sqrt(uniform());
        double theta = 2.0 * 3.14159265358979323846 * uniform();
        return {r * std::cos(theta), r * std::sin(theta)};
    }

    cplx uniform_rect(const cplx& center, double hw, double hh) {
        return {center.real() + uniform(-hw, hw), center.imag() + uniform(-hh, hh)};
    }

  private:
    std::uint64_t state_;
};

} // namespace biflab

#endif

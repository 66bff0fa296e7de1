#pragma once

#include <cmath>
#include <cstdint>

namespace sdr::core {

// SplitMix64 stream. Hand-rolled so that every draw is bit-reproducible
// across platforms and standard library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1), 53-bit mantissa.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi].
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi) {
        if (hi <= lo) return lo;
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    bool coin() { return (next_u64() & 1ull) != 0; }

    // Box-Muller, two uniforms per draw (no cached spare, keeps streams
    // position-independent).
    double normal(double sigma = 1.0) {
        const double u1 = next_double();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        return sigma * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Independent child stream identified by a tag. Forking does not advance
    // this stream, so derivation order cannot leak into results.
    Rng fork(std::uint64_t tag) const {
        Rng mix(state_ ^ (0xA0761D6478BD642Full * (tag + 1)));
        std::uint64_t s = mix.next_u64();
        (void)mix.next_u64();
        return Rng(s ^ tag);
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

} // namespace sdr::core

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>

namespace rviq {

/// xoshiro256** (Blackman & Vigna). Seeded through splitmix64 so any 64-bit
/// seed gives a well-mixed state. `jump()` advances 2^128 draws and
/// `long_jump()` 2^192 draws, which is how independent substreams are carved.
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256(std::uint64_t seed = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return next(); }
    result_type next();

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    /// Uniform on [-1, 1).
    double symmetric() { return 2.0 * uniform() - 1.0; }
    /// +1 or -1 with equal probability.
    double rademacher() { return (next() >> 63) ? 1.0 : -1.0; }
    /// Uniform integer on [0, n).
    std::size_t below(std::size_t n);

    void jump();
    void long_jump();

    bool operator==(const Xoshiro256& other) const;

private:
    std::uint64_t s_[4];
};

/// Purposes get disjoint long-jump offsets; components within a purpose get
/// jump offsets. Draws for different (purpose, component) pairs therefore
/// never interleave regardless of how many draws each consumer makes.
enum class StreamPurpose : std::uint32_t {
    schedule = 0,
    noise = 1,
    transitions = 2,
    generator = 3,
    probing = 4,
    bias_sign = 5,
};

Xoshiro256 substream(std::uint64_t seed, StreamPurpose purpose, std::size_t component = 0);

}  // namespace rviq

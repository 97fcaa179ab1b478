#pragma once

#include <cstdint>

namespace splitlora {

/// Deterministic 64-bit generator with a portable, self-contained recipe.
///
/// The core stream is splitmix64 (Vigna's public-domain mixer): the state
/// advances by the golden-ratio increment 0x9E3779B97F4A7C15 and each output
/// is the finalizer
///     z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
///     z ^= z >> 27; z *= 0x94D049BB133111EB;
///     z ^= z >> 31;
/// Derived quantities are defined exactly in terms of that stream:
///   * next_unit():     (next_u64() >> 11) * 2^-53, uniform in [0, 1)
///   * next_gaussian(): Marsaglia polar method on next_unit() pairs, with
///                      the spare deviate cached and returned next
///   * next_below(n):   modulo rejection (draws rejected below 2^64 mod n)
///   * derive(k):       child seeded with the splitmix64 finalizer applied
///                      to seed ^ (0x9E3779B97F4A7C15 * (k + 1))
/// Identical seeds therefore reproduce identical sequences on every
/// platform, up to libm rounding inside sqrt/log for the gaussian path.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();

    /// Uniform double in [0, 1) built from the top 53 bits.
    double next_unit();

    /// Standard normal deviate.
    double next_gaussian();

    /// Uniform integer in [0, n); n must be positive.
    std::uint64_t next_below(std::uint64_t n);

    /// Independent child stream for the given purpose id. Derivation uses
    /// only the original seed, so children do not depend on how far this
    /// generator has advanced.
    SeededRng derive(std::uint64_t stream) const;

private:
    std::uint64_t seed_;
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace splitlora

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace qkd {

/// Deterministic labeled random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. All derived draws (uniform reals, Bernoulli, Gaussian, Poisson)
/// are computed here rather than through <random> distributions, whose
/// algorithms are implementation-defined, so a (seed, label) pair produces
/// the same values on every platform.
class RandomStream {
  public:
    RandomStream(std::uint64_t seed, std::string_view label);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }
    std::uint8_t bit() { return static_cast<std::uint8_t>(engine_() >> 63); }

    /// Uniform integer in [0, n); n must be > 0.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller (one value per call).
    double normal();

    /// Poisson(mean) by sequential inverse transform; large means are split
    /// into independent pieces to keep exp(-mean) representable.
    std::uint64_t poisson(double mean);

    /// Independent child stream derived from this stream's (seed, label).
    RandomStream split(std::string_view child) const;

    std::uint64_t seed() const noexcept { return seed_; }
    const std::string& label() const noexcept { return label_; }

  private:
    std::uint64_t seed_;
    std::string label_;
    std::mt19937_64 engine_;
};

/// rng_stream(seed, label): identical arguments yield identical draws.
inline RandomStream rng_stream(std::uint64_t seed, std::string_view label) {
    return RandomStream(seed, label);
}

std::uint64_t fnv1a64(std::string_view data) noexcept;
std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace qkd

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace usegmix {

/// Seeded generator with platform-independent draws. std::mt19937_64 is
/// specified bit-exactly; the standard distributions are not, so uniform
/// doubles and bounded integers are derived here directly.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    /// Uniform in [0, n). n must be > 0.
    std::uint64_t index(std::uint64_t n);

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Mixes a seed with further integer / string components into a new seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t component);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view component);

/// FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace usegmix

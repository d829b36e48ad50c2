#pragma once

#include <cstdint>
#include <vector>

namespace metaopt {

// splitmix64 step; used to scramble user seeds and derive substream seeds.
std::uint64_t mix64(std::uint64_t x);

// Derive a child seed from a base seed and one or two stream indices.
// Deterministic and collision-resistant enough for experiment seeding.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

// Deterministic random source. Gaussian sampling is hand-rolled Box-Muller so
// that sequences do not depend on the standard library's distribution
// implementations; replaying a seed reproduces the exact double sequence.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform();
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller (pairs cached).
    double gaussian();

    // Integer in [0, n).
    std::size_t index(std::size_t n);

    // Fisher-Yates permutation of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n);

    std::vector<double> gaussian_vector(std::size_t n);
    std::vector<double> uniform_vector(std::size_t n, double lo, double hi);

private:
    std::uint64_t s_[4];  // xoshiro256++ state
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace metaopt

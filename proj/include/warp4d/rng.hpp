#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace warp4d {

// Deterministic splitmix64 generator. All randomness in the toolkit flows
// from one root seed through named substreams, so any stage can be re-run
// in isolation and reproduce its draws bit for bit regardless of platform
// or standard-library version.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    // Derives an independent generator keyed by (current seed, name).
    Rng stream(std::string_view name) const;
    // Derives an independent generator keyed by (current seed, index).
    Rng stream(uint64_t index) const;

    uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Standard normal via Box-Muller (two u64 draws per call).
    double normal();
    // Uniform integer in [0, n), unbiased.
    uint64_t uniform_int(uint64_t n);

    // First k entries of a seeded Fisher-Yates shuffle of 0..n-1.
    std::vector<int> sample_without_replacement(int n, int k);

private:
    uint64_t state_;
};

}  // namespace warp4d

#include "warp4d/rng.hpp"

#include <cmath>
#include <numbers>

#include "warp4d/errors.hpp"

namespace warp4d {

namespace {

uint64_t splitmix64(uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace

Rng Rng::stream(std::string_view name) const {
    uint64_t s = state_ ^ fnv1a64(name);
    // One mixing round so adjacent seeds do not produce correlated streams.
    splitmix64(s);
    return Rng(s);
}

Rng Rng::stream(uint64_t index) const {
    uint64_t s = state_ ^ (0x9E3779B97F4A7C15ull * (index + 1));
    splitmix64(s);
    return Rng(s);
}

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    // (0,1] for the log argument.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t Rng::uniform_int(uint64_t n) {
    if (n == 0) throw DomainError("uniform_int: n must be positive");
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
    if (k < 0 || k > n)
        throw DomainError("sample_without_replacement: need 0 <= k <= n");
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
        int j = i + static_cast<int>(uniform_int(static_cast<uint64_t>(n - i)));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    idx.resize(static_cast<size_t>(k));
    return idx;
}

}  // namespace warp4d

#include "ipwfront/rng.hpp"

#include <cmath>
#include <numbers>

#include "ipwfront/errors.hpp"

namespace ipwfront {

namespace {

// splitmix64: mixes a 64-bit value into a well-distributed seed.
uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t hash_label(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

Rng::Rng(uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

Rng Rng::substream(std::string_view name) const { return Rng(mix64(seed_ ^ hash_label(name))); }

Rng Rng::substream(std::string_view name, uint64_t index) const {
    return Rng(mix64(mix64(seed_ ^ hash_label(name)) + index));
}

double Rng::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

double Rng::normal() {
    // Box-Muller; consumes exactly two uniforms per call.  1 - u keeps the
    // log argument in (0, 1].
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::normal(double mean, double sd) { return mean + sd * normal(); }

uint64_t Rng::below(uint64_t n) {
    if (n == 0) fail(ErrorCode::InvalidDimension, "below(0) is undefined");
    // Rejection sampling on the top multiple of n keeps the draw unbiased.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

int Rng::categorical(std::span<const double> probs) {
    const double u = uniform01();
    double cum = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1; // guard against rounding in cum
}

std::vector<double> Rng::simplex_uniform(int k) {
    if (k <= 0) fail(ErrorCode::InvalidDimension, "simplex dimension must be positive");
    // -log(U) draws are Exponential(1); normalizing yields a flat Dirichlet.
    std::vector<double> v(k);
    double total = 0.0;
    for (double& x : v) {
        x = -std::log(1.0 - uniform01());
        total += x;
    }
    for (double& x : v) x /= total;
    return v;
}

} // namespace ipwfront

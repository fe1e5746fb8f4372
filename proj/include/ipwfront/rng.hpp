#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace ipwfront {

// Seedable random source with named substreams.  The core generator is the
// fully specified std::mt19937_64 and every distribution below is an
// explicit transform of its output (no std distribution objects, whose
// algorithms are implementation-defined), so a seed reproduces the same
// stream on any platform with the same floating-point math library.
// Substreams give each pipeline stage (type table, population, train draw,
// test draw, ...) an independent stream: reordering stages never shifts
// another stage's draws.
class Rng {
  public:
    explicit Rng(uint64_t seed);

    // Independent generator derived from this one's original seed and a label.
    Rng substream(std::string_view name) const;
    Rng substream(std::string_view name, uint64_t index) const;

    uint64_t next_u64() { return engine_(); }
    double uniform01();                         // [0, 1), 53-bit resolution
    double uniform(double lo, double hi);
    double normal();                            // standard normal (Box-Muller)
    double normal(double mean, double sd);
    uint64_t below(uint64_t n);                 // uniform integer in [0, n), unbiased
    int categorical(std::span<const double> probs);
    std::vector<double> simplex_uniform(int k); // flat Dirichlet over k arms

  private:
    uint64_t seed_;
    std::mt19937_64 engine_;
};

} // namespace ipwfront

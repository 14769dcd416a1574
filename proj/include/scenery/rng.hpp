#pragma once

#include <cstdint>
#include <vector>

#include "scenery/common.hpp"

namespace scenery {

// Deterministic generator with a fully specified output sequence, so results
// are reproducible across standard libraries and parallel schedules.
struct Rng {
  std::uint64_t state = 0x9e3779b97f4a7c15ull;

  explicit Rng(std::uint64_t seed = 0) { state = seed + 0x9e3779b97f4a7c15ull; }

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1) with 53 random bits.
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next() % n; }

  // Index sampled from nonnegative weights (need not be normalized).
  int pick(const std::vector<double>& w) {
    double tot = 0;
    for (double x : w) tot += x;
    numeric_require(tot > 0, "pick: all weights zero");
    double u = uniform() * tot;
    double acc = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      if (u < acc) return int(i);
    }
    return int(w.size()) - 1;
  }
};

// Per-sample stream derived from (master seed, sample index); streams with
// distinct indices are independent for practical purposes and their draws do
// not depend on evaluation order.
inline Rng derive_stream(std::uint64_t master, std::uint64_t index) {
  Rng mix(master ^ (0x5851f42d4c957f2dull * (index + 1)));
  mix.next();
  mix.next();
  return mix;
}

}  // namespace scenery

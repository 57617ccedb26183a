#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "spores/bytes.hpp"

namespace spores {

// xoshiro256** seeded through splitmix64. Hand-rolled so that identical
// seeds give identical streams on every platform and standard library;
// <random> distributions make no such promise.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();

  // Uniform in [0, 1), 53-bit resolution.
  double next_double();

  // Uniform in [0, bound), unbiased (rejection sampling). bound > 0.
  std::uint64_t below(std::uint64_t bound);

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(below(n)); }

  bool bernoulli(double p) { return next_double() < p; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  void fill(std::uint8_t* out, std::size_t n);
  Bytes bytes(std::size_t n);

  // Independent child stream; advances this stream by one draw.
  Rng fork();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

// Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
double sample_gamma(Rng& rng, double shape);

// Beta(a, b) as Ga/(Ga+Gb); a, b > 0.
double sample_beta(Rng& rng, double a, double b);

}  // namespace spores

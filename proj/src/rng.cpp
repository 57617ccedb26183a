#include "spores/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace spores {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

double standard_normal(Rng& rng) {
  // Marsaglia polar method.
  for (;;) {
    double s = 2 * rng.next_double() - 1;
    double t = 2 * rng.next_double() - 1;
    double r2 = s * s + t * t;
    if (r2 >= 1 || r2 == 0) continue;
    return s * std::sqrt(-2 * std::log(r2) / r2);
  }
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& s : s_) s = splitmix64(sm);
}

std::uint64_t Rng::next() {
  std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::next_double() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("Rng::below: bound must be positive");
  std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    std::uint64_t r = next();
    if (r >= threshold) return r % bound;
  }
}

void Rng::fill(std::uint8_t* out, std::size_t n) {
  std::size_t i = 0;
  while (i + 8 <= n) {
    std::uint64_t v = next();
    for (int b = 0; b < 8; ++b) out[i++] = static_cast<std::uint8_t>(v >> (8 * b));
  }
  if (i < n) {
    std::uint64_t v = next();
    while (i < n) {
      out[i++] = static_cast<std::uint8_t>(v);
      v >>= 8;
    }
  }
}

Bytes Rng::bytes(std::size_t n) {
  Bytes out(n);
  if (n) fill(out.data(), n);
  return out;
}

Rng Rng::fork() { return Rng(next()); }

double sample_gamma(Rng& rng, double shape) {
  if (!(shape > 0)) throw std::invalid_argument("sample_gamma: shape must be positive");
  if (shape < 1) {
    // Boost: Ga(a) = Ga(a+1) * U^(1/a).
    double u = rng.next_double();
    while (u == 0) u = rng.next_double();
    return sample_gamma(rng, shape + 1) * std::pow(u, 1.0 / shape);
  }
  double d = shape - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = standard_normal(rng);
    double v = 1 + c * x;
    if (v <= 0) continue;
    v = v * v * v;
    double u = rng.next_double();
    if (u < 1 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0 && std::log(u) < 0.5 * x * x + d * (1 - v + std::log(v))) return d * v;
  }
}

double sample_beta(Rng& rng, double a, double b) {
  double ga = sample_gamma(rng, a);
  double gb = sample_gamma(rng, b);
  if (ga == 0 && gb == 0) return 0.5;
  return ga / (ga + gb);
}

}  // namespace spores

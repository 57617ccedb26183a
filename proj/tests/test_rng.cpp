#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "spores/rng.hpp"

using spores::Rng;

TEST_CASE("identical seeds give identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next() == b.next());

  Rng c(42), d(43);
  bool all_equal = true;
  for (int i = 0; i < 16; ++i) all_equal = all_equal && (c.next() == d.next());
  CHECK_FALSE(all_equal);
}

TEST_CASE("next_double stays in [0,1) and looks uniform") {
  Rng rng(7);
  double sum = 0, sum_sq = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double x = rng.next_double();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
    sum += x;
    sum_sq += x * x;
  }
  double mean = sum / n;
  double var = sum_sq / n - mean * mean;
  // Uniform(0,1): mean 1/2, variance 1/12. 5 sigma of the sample mean.
  CHECK(std::abs(mean - 0.5) < 5.0 * std::sqrt(1.0 / 12 / n));
  CHECK(std::abs(var - 1.0 / 12) < 0.01);
}

TEST_CASE("below is unbiased across a non-power-of-two bound") {
  Rng rng(123);
  const std::uint64_t bound = 6;
  const int n = 120000;
  std::array<int, 6> counts{};
  for (int i = 0; i < n; ++i) {
    std::uint64_t v = rng.below(bound);
    REQUIRE(v < bound);
    counts[static_cast<std::size_t>(v)] += 1;
  }
  // chi-square against uniform, 5 dof; 99.9% quantile is about 20.5
  double expected = static_cast<double>(n) / bound;
  double chi2 = 0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 25.0);
}

TEST_CASE("bernoulli tracks its probability") {
  Rng rng(5);
  const int n = 100000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += rng.bernoulli(0.3) ? 1 : 0;
  double p_hat = static_cast<double>(hits) / n;
  CHECK(std::abs(p_hat - 0.3) < 5.0 * std::sqrt(0.3 * 0.7 / n));
  // Degenerate edges never fire the wrong way.
  for (int i = 0; i < 1000; ++i) {
    CHECK_FALSE(rng.bernoulli(0.0));
    CHECK(rng.bernoulli(1.0));
  }
}

TEST_CASE("uniform(lo,hi) respects its range") {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    double x = rng.uniform(-2.5, 4.0);
    CHECK(x >= -2.5);
    CHECK(x < 4.0);
  }
}

TEST_CASE("fill and bytes are deterministic and agree") {
  Rng a(77), b(77);
  spores::Bytes via_bytes = a.bytes(64);
  spores::Bytes via_fill(64);
  b.fill(via_fill.data(), via_fill.size());
  CHECK(via_bytes == via_fill);
  CHECK(via_bytes.size() == 64);
  // Not all zero (astronomically unlikely for a healthy generator).
  CHECK(std::any_of(via_bytes.begin(), via_bytes.end(),
                    [](std::uint8_t v) { return v != 0; }));
}

TEST_CASE("fork yields an independent but reproducible child") {
  Rng a(100), b(100);
  Rng child_a = a.fork();
  Rng child_b = b.fork();
  // Same parent state forks the same child...
  for (int i = 0; i < 100; ++i) CHECK(child_a.next() == child_b.next());
  // ...and the parent advances, so a second fork differs from the first.
  Rng child_c = a.fork();
  Rng child_d = b.fork();
  CHECK(child_c.next() == child_d.next());
  Rng fresh_a(100);
  Rng first_child = fresh_a.fork();
  std::uint64_t first_draw = first_child.next();
  CHECK(first_draw != child_c.next());
}

TEST_CASE("shuffle produces uniform permutations") {
  Rng rng(2024);
  std::map<std::vector<int>, int> counts;
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    std::vector<int> v{0, 1, 2};
    rng.shuffle(v);
    counts[v] += 1;
  }
  CHECK(counts.size() == 6);
  double expected = n / 6.0;
  double chi2 = 0;
  for (const auto& [perm, c] : counts)
    chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 25.0);  // 5 dof, well past the 99.9% quantile
}

TEST_CASE("gamma sampler matches analytic moments") {
  Rng rng(31);
  for (double shape : {0.5, 1.0, 2.5, 9.0}) {
    const int n = 200000;
    double sum = 0, sum_sq = 0;
    for (int i = 0; i < n; ++i) {
      double x = spores::sample_gamma(rng, shape);
      REQUIRE(x >= 0.0);
      sum += x;
      sum_sq += x * x;
    }
    double mean = sum / n;
    double var = sum_sq / n - mean * mean;
    // Gamma(k,1): mean k, variance k.
    CHECK(std::abs(mean - shape) < 6.0 * std::sqrt(shape / n));
    CHECK(std::abs(var - shape) / shape < 0.1);
  }
}

TEST_CASE("beta sampler matches analytic moments") {
  Rng rng(33);
  struct Case {
    double a, b;
  };
  for (Case c : {Case{0.8, 0.8}, Case{2.0, 5.0}, Case{0.2, 0.2}}) {
    const int n = 200000;
    double sum = 0, sum_sq = 0;
    for (int i = 0; i < n; ++i) {
      double x = spores::sample_beta(rng, c.a, c.b);
      REQUIRE(x >= 0.0);
      REQUIRE(x <= 1.0);
      sum += x;
      sum_sq += x * x;
    }
    double mean = sum / n;
    double var = sum_sq / n - mean * mean;
    double m = c.a / (c.a + c.b);
    double v = c.a * c.b / ((c.a + c.b) * (c.a + c.b) * (c.a + c.b + 1));
    CHECK(std::abs(mean - m) < 6.0 * std::sqrt(v / n));
    CHECK(std::abs(var - v) / v < 0.05);
  }
}

#include "doctest.h"

#include <cmath>
#include <vector>

#include "optx/rng.hpp"

using namespace optx;

TEST_CASE("rng streams are deterministic and independent") {
  RngStream a(42, 0);
  RngStream b(42, 0);
  RngStream c(42, 1);
  bool diverged = false;
  for (int i = 0; i < 100; ++i) {
    auto va = a.next_u64();
    CHECK(va == b.next_u64());
    if (va != c.next_u64()) diverged = true;
  }
  CHECK(diverged);
}

TEST_CASE("uniform doubles stay in [0,1) with sane mean") {
  RngStream rng(7);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    double u = rng.next_double();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / 20000 - 0.5) < 0.02);
}

TEST_CASE("gaussian moments") {
  RngStream rng(3);
  double sum = 0.0, sq = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    double g = rng.next_gaussian();
    sum += g;
    sq += g * g;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("categorical sampling matches probabilities") {
  RngStream rng(11);
  std::vector<double> probs = {0.2, 0.5, 0.3};
  std::vector<int> counts(3, 0);
  const int n = 30000;
  for (int i = 0; i < n; ++i) ++counts[rng.sample_categorical(probs)];
  for (int k = 0; k < 3; ++k) {
    double freq = static_cast<double>(counts[k]) / n;
    double sigma = std::sqrt(probs[k] * (1 - probs[k]) / n);
    CHECK(std::abs(freq - probs[k]) < 4 * sigma);
  }
}

TEST_CASE("shuffle is a permutation") {
  RngStream rng(5);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  rng.shuffle(v);
  std::vector<bool> seen(50, false);
  for (int x : v) {
    REQUIRE(!seen[x]);
    seen[x] = true;
  }
}

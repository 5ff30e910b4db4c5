#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cnmix/rng.hpp"

using namespace cnmix;

TEST_CASE("same seed reproduces the stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform stays in the half-open unit interval") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("uniform_int respects the bound and rejects zero") {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) CHECK(rng.uniform_int(7) < 7);
  CHECK_THROWS_AS(rng.uniform_int(0), std::invalid_argument);
}

TEST_CASE("permutation is a bijection") {
  Rng rng(5);
  for (int n : {0, 1, 2, 17, 128}) {
    std::vector<int> p = rng.permutation(n);
    REQUIRE(static_cast<int>(p.size()) == n);
    std::sort(p.begin(), p.end());
    for (int i = 0; i < n; ++i) CHECK(p[static_cast<std::size_t>(i)] == i);
  }
}

TEST_CASE("normal moments are roughly standard") {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  constexpr int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("beta rejects non-positive shapes") {
  Rng rng(1);
  CHECK_THROWS_AS(rng.beta(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(rng.beta(1.0, -2.0), std::invalid_argument);
}

TEST_CASE("beta with general shapes stays in range with sane mean") {
  Rng rng(9);
  double sum = 0.0;
  constexpr int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.beta(2.0, 5.0);
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
    sum += x;
  }
  CHECK(std::abs(sum / n - 2.0 / 7.0) < 0.01);
}

TEST_CASE("seed tree streams are independent and reproducible") {
  const SeedTree tree(99);
  Rng a = tree.stream(seed_tag::distort, 0, 3, 1);
  Rng b = tree.stream(seed_tag::distort, 0, 3, 1);
  Rng c = tree.stream(seed_tag::distort, 1, 3, 1);
  CHECK(a.next_u64() == b.next_u64());
  Rng a2 = tree.stream(seed_tag::distort, 0, 3, 1);
  CHECK(a2.next_u64() != c.next_u64());
}

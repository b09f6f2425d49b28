#include <set>

#include "abcfit/random.hpp"
#include "catch_amalgamated.hpp"

using abcfit::Rng;

TEST_CASE("same seed and stream reproduce the sequence") {
  Rng a(123, 4), b(123, 4);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("streams of one seed diverge") {
  Rng a(123, 0), b(123, 1);
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += a.next_u64() == b.next_u64();
  CHECK(equal == 0);
}

TEST_CASE("uniform stays in [0,1) with mean near 1/2") {
  Rng r(9);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / 100000.0 == Catch::Approx(0.5).margin(0.01));
}

TEST_CASE("normal has zero mean and unit variance") {
  Rng r(11);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(s / n == Catch::Approx(0.0).margin(0.01));
  CHECK(s2 / n == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("index covers its range without bias toward any value") {
  Rng r(5);
  std::array<int, 7> counts{};
  for (int i = 0; i < 70000; ++i) ++counts[r.index(7)];
  for (int c : counts) CHECK(c == Catch::Approx(10000).margin(500));
}

TEST_CASE("derive_seed separates streams and is stable") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 1000; ++s) seen.insert(abcfit::derive_seed(42, s));
  CHECK(seen.size() == 1000);
  CHECK(abcfit::derive_seed(42, 3) == abcfit::derive_seed(42, 3));
  CHECK(abcfit::derive_seed(42, 3) != abcfit::derive_seed(43, 3));
}

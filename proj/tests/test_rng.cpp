#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "mmsa/rng.hpp"

using namespace mmsa;

TEST_CASE("same seed reproduces the exact stream") {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(123), d(124);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += c.next_u64() == d.next_u64();
  CHECK(same == 0);
}

TEST_CASE("split streams are reproducible and distinct") {
  Rng root(7);
  Rng s1 = root.split(1), s2 = root.split(2), s1b = Rng(7).split(1);
  for (int i = 0; i < 100; ++i) CHECK(s1.next_u64() == s1b.next_u64());
  Rng s1c = Rng(7).split(1);
  Rng s2c = Rng(7).split(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += s1c.next_u64() == s2c.next_u64();
  CHECK(same == 0);
}

TEST_CASE("uniform doubles live in [0,1) with the right first two moments") {
  Rng r(99);
  const int n = 200000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
    sumsq += u * u;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  // mean 1/2 (sd of the mean = 1/sqrt(12n)), var 1/12; allow 4 sigma
  CHECK(std::fabs(mean - 0.5) < 4.0 / std::sqrt(12.0 * n));
  CHECK(std::fabs(var - 1.0 / 12.0) < 0.002);
}

TEST_CASE("uniform_int covers all buckets evenly") {
  Rng r(2024);
  const int k = 7, n = 70000;
  std::vector<int> counts(k, 0);
  for (int i = 0; i < n; ++i) {
    const int v = r.uniform_int(k);
    REQUIRE(v >= 0);
    REQUIRE(v < k);
    ++counts[v];
  }
  // each bucket ~ Binomial(n, 1/k); 4.5 sigma band
  const double expect = double(n) / k;
  const double sigma = std::sqrt(expect * (1.0 - 1.0 / k));
  for (int c : counts) CHECK(std::fabs(c - expect) < 4.5 * sigma);
}

TEST_CASE("normal() has standard moments and no fixed-point artifacts") {
  Rng r(55);
  const int n = 200000;
  double sum = 0, sumsq = 0, sumcube = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sumsq += x * x;
    sumcube += x * x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  const double skew = sumcube / n;
  CHECK(std::fabs(mean) < 4.0 / std::sqrt(double(n)));
  CHECK(std::fabs(var - 1.0) < 0.02);
  CHECK(std::fabs(skew) < 0.05);
}

TEST_CASE("uniform(lo,hi) respects bounds") {
  Rng r(8);
  for (int i = 0; i < 1000; ++i) {
    const double v = r.uniform(-3.0, -1.0);
    CHECK(v >= -3.0);
    CHECK(v < -1.0);
  }
}

TEST_CASE("sample_without_replacement yields distinct in-range indices") {
  Rng r(31);
  for (int rep = 0; rep < 50; ++rep) {
    auto idx = r.sample_without_replacement(20, 8);
    REQUIRE(idx.size() == 8);
    std::set<int> seen(idx.begin(), idx.end());
    CHECK(seen.size() == 8);
    for (int v : idx) {
      CHECK(v >= 0);
      CHECK(v < 20);
    }
  }
  // k == n is a permutation
  auto all = r.sample_without_replacement(6, 6);
  std::sort(all.begin(), all.end());
  CHECK(all == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("vector helpers match scalar draws in count and range") {
  Rng r(12);
  auto u = r.uniform_vector(100, 2.0, 3.0);
  REQUIRE(u.size() == 100);
  for (double v : u) {
    CHECK(v >= 2.0);
    CHECK(v < 3.0);
  }
  auto nvec = r.normal_vector(101);
  REQUIRE(nvec.size() == 101);
}

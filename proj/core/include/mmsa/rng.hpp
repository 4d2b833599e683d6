#pragma once

#include <cstdint>
#include <vector>

namespace mmsa {

// Deterministic xoshiro256++ generator. All randomness in the library flows
// through this type so runs are bit-reproducible from (seed, stream) alone;
// distribution draws are implemented here rather than via <random> because
// the standard leaves distribution algorithms unspecified across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n), n >= 1.
  int uniform_int(int n);
  // Standard normal via Box-Muller (caches the spare draw).
  double normal();
  double normal(double mean, double stddev);

  std::vector<double> normal_vector(int n);
  std::vector<double> uniform_vector(int n, double lo, double hi);

  // k distinct indices drawn uniformly from [0, n) without replacement.
  std::vector<int> sample_without_replacement(int n, int k);

  // Derived generator with an independent stream, e.g. for per-episode seeds.
  Rng split(std::uint64_t stream) const;

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
  std::uint64_t seed_;
  std::uint64_t stream_;
};

}  // namespace mmsa

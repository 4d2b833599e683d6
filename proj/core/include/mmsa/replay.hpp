#pragma once

#include <cstdint>
#include <vector>

#include "mmsa/rng.hpp"

namespace mmsa {

// One stored episode. Configurations (observations, global state,
// availability) are kept for T+1 time points — the final entry is the
// bootstrap configuration after the last transition — while actions,
// rewards and terminal flags cover the T transitions.
struct EpisodeBatch {
  std::vector<std::vector<std::vector<double>>> obs;          // [T+1][n_agents][obs_dim]
  std::vector<std::vector<double>> state;                     // [T+1][state_dim]
  std::vector<std::vector<std::vector<std::uint8_t>>> avail;  // [T+1][n_agents][n_actions]
  std::vector<std::vector<int>> actions;                      // [T][n_agents]
  std::vector<double> rewards;                                // [T]
  std::vector<std::uint8_t> terminated;                       // [T]; truncation stays 0

  int length() const { return static_cast<int>(rewards.size()); }
  // sum_t gamma^t * r_t
  double discounted_return(double gamma) const;
};

// Fixed-capacity FIFO ring of episodes. Sampling is uniform without
// replacement within one call, from a generator owned by the buffer.
class ReplayBuffer {
 public:
  ReplayBuffer(int capacity, const Rng& sample_rng);

  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(ring_.size()); }
  bool can_sample(int n) const { return n >= 1 && n <= size(); }
  std::uint64_t total_added() const { return total_; }

  // Inserts one episode, evicting the oldest at capacity.
  void add(EpisodeBatch ep);

  // Retained episodes in age order: index 0 is the oldest.
  const EpisodeBatch& episode(int i) const;

  // n distinct episodes, uniform without replacement. Throws when
  // can_sample(n) is false.
  std::vector<const EpisodeBatch*> sample(int n);

 private:
  int capacity_;
  std::uint64_t total_ = 0;  // episodes ever added
  int next_ = 0;             // ring write position once full
  std::vector<EpisodeBatch> ring_;
  Rng rng_;
};

}  // namespace mmsa

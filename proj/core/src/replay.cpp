#include "mmsa/replay.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace mmsa {

double EpisodeBatch::discounted_return(double gamma) const {
  double g = 0.0;
  double w = 1.0;
  for (double r : rewards) {
    g += w * r;
    w *= gamma;
  }
  return g;
}

ReplayBuffer::ReplayBuffer(int capacity, const Rng& sample_rng)
    : capacity_(capacity), rng_(sample_rng) {
  if (capacity < 1) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  ring_.reserve(static_cast<std::size_t>(capacity));
}

void ReplayBuffer::add(EpisodeBatch ep) {
  if (size() < capacity_) {
    ring_.push_back(std::move(ep));
  } else {
    ring_[static_cast<std::size_t>(next_)] = std::move(ep);
    next_ = (next_ + 1) % capacity_;
  }
  ++total_;
}

const EpisodeBatch& ReplayBuffer::episode(int i) const {
  if (i < 0 || i >= size()) throw std::out_of_range("ReplayBuffer::episode: bad index");
  // before wrap-around, insertion order; after, next_ points at the oldest
  const int idx = size() < capacity_ ? i : (next_ + i) % capacity_;
  return ring_[static_cast<std::size_t>(idx)];
}

std::vector<const EpisodeBatch*> ReplayBuffer::sample(int n) {
  if (!can_sample(n))
    throw std::invalid_argument("ReplayBuffer::sample: need " + std::to_string(n) +
                                " episodes, have " + std::to_string(size()));
  std::vector<const EpisodeBatch*> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int idx : rng_.sample_without_replacement(size(), n))
    out.push_back(&ring_[static_cast<std::size_t>(idx)]);
  return out;
}

}  // namespace mmsa

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "hac/env/observation.hpp"

namespace hac::agents {

using data::ItemId;
using env::Observation;

struct Transition {
  Observation observation;
  std::vector<ItemId> action;  // effect-action, k items
  std::vector<std::uint8_t> feedback;
  double reward = 0.0;
  Observation next;
  bool done = false;
  std::vector<double> hyper_action;  // the Z sample that produced the action
};

class BufferUnderfilledError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Fixed-capacity FIFO ring with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000, std::size_t threshold = 2000);

  void push(Transition t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t threshold() const { return threshold_; }
  bool ready() const { return size_ >= threshold_ && size_ > 0; }
  std::size_t total_pushed() const { return pushed_; }

  // Logical index 0 is the oldest retained transition.
  const Transition& at(std::size_t i) const;
  // Logical indices drawn uniformly; throws BufferUnderfilledError below threshold.
  std::vector<std::size_t> sample_indices(std::size_t batch_size, std::mt19937_64& rng) const;
  std::vector<Transition> sample(std::size_t batch_size, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t threshold_;
  std::vector<Transition> storage_;
  std::size_t head_ = 0;  // physical slot of the oldest item once full
  std::size_t size_ = 0;
  std::size_t pushed_ = 0;
};

}  // namespace hac::agents

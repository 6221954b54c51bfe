#include "hac/agents/replay.hpp"

#include <string>

namespace hac::agents {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t threshold) : capacity_(capacity), threshold_(threshold) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  if (threshold > capacity) throw std::invalid_argument("replay threshold exceeds capacity");
  storage_.reserve(std::min<std::size_t>(capacity, 4096));
}

void ReplayBuffer::push(Transition t) {
  ++pushed_;
  if (size_ < capacity_) {
    storage_.push_back(std::move(t));
    ++size_;
    return;
  }
  storage_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("replay index " + std::to_string(i) + " out of range");
  return storage_[(head_ + i) % capacity_];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch_size, std::mt19937_64& rng) const {
  if (!ready()) {
    throw BufferUnderfilledError("replay buffer holds " + std::to_string(size_) + " transitions, needs " +
                                 std::to_string(threshold_));
  }
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> out(batch_size);
  for (auto& i : out) i = pick(rng);
  return out;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch_size, std::mt19937_64& rng) const {
  std::vector<Transition> out;
  out.reserve(batch_size);
  for (auto i : sample_indices(batch_size, rng)) out.push_back(at(i));
  return out;
}

}  // namespace hac::agents

#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <span>
#include <vector>

#include "hac/data/log.hpp"
#include "hac/nn/module.hpp"

namespace hac::env {

using data::ItemId;

struct Observation {
  std::vector<std::int64_t> user_features;
  std::vector<ItemId> history;  // positives, oldest first

  bool operator==(const Observation&) const = default;
};

// Histories laid out right-aligned in `length` slots followed by one user slot.
struct PackedHistory {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::int64_t> item_ids;  // batch * length; padding slots hold 0
  nn::KeyMask mask;                    // batch * (length + 1); user slot always 1
  std::vector<std::int64_t> positions;  // batch * (length + 1): 0..length repeated
};

// Keeps the most recent `max_history` items. Throws std::out_of_range on ids
// outside [0, catalog_size).
PackedHistory pack_histories(std::span<const Observation> observations, std::size_t max_history,
                             std::size_t catalog_size);

std::vector<Observation> observations_from_log(const data::SessionLog& log);

// Per-feature embeddings concatenated and mapped through an MLP to a `dim`-wide
// user token. Without features the token is a single learned vector.
class UserFeatureEncoder {
 public:
  UserFeatureEncoder(const std::vector<std::size_t>& cardinalities, std::size_t dim,
                     const std::vector<std::size_t>& hidden, double init_std, std::mt19937_64& rng);
  // [batch, dim]
  nn::Tensor operator()(std::span<const Observation> observations) const;
  void collect(const std::string& prefix, nn::ParameterList& out) const;

 private:
  std::vector<std::unique_ptr<nn::Embedding>> features_;
  std::unique_ptr<nn::Mlp> mlp_;
  nn::Tensor constant_;
};

}  // namespace hac::env

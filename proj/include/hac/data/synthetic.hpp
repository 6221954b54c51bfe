#pragma once

#include <cstdint>
#include <vector>

#include "hac/data/log.hpp"

namespace hac::data {

struct SynthConfig {
  std::size_t n_users = 100;
  std::size_t n_items = 200;
  std::size_t k = 5;
  std::size_t n_records = 4000;
  std::size_t latent_dim = 8;
  // Scale of the logistic label noise; 1 gives Bernoulli(sigmoid(affinity)), 0 the sign rule.
  double noise_scale = 1.0;
  std::uint64_t seed = 0;

  // Std of the Gaussian perturbation added to affinities before the top-k exposure.
  double exposure_noise = 4.0;
  // Added to the planted dot product; negative values make positives rarer.
  double label_offset = -2.0;
  std::size_t max_history = 50;

  void validate() const;
};

struct SyntheticWorld {
  SynthConfig config;
  SessionLog log;
  std::vector<double> user_factors;  // n_users x latent_dim
  std::vector<double> item_factors;  // n_items x latent_dim

  // Planted dot product plus the label offset.
  double affinity(std::size_t user, ItemId item) const;
};

SyntheticWorld generate_synthetic_world(const SynthConfig& config);
SessionLog generate_synthetic(const SynthConfig& config);

}  // namespace hac::data

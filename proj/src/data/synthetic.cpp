#include "hac/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace hac::data {

void SynthConfig::validate() const {
  if (n_users == 0 || n_items == 0 || k == 0 || n_records == 0 || latent_dim == 0) {
    throw std::invalid_argument("synthetic config counts must be positive");
  }
  if (n_items < k) throw std::invalid_argument("synthetic config needs n_items >= k");
  if (!(noise_scale >= 0.0) || !(exposure_noise >= 0.0)) {
    throw std::invalid_argument("synthetic noise scales must be non-negative");
  }
}

double SyntheticWorld::affinity(std::size_t user, ItemId item) const {
  const auto d = config.latent_dim;
  double dot = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    dot += user_factors[user * d + j] * item_factors[static_cast<std::size_t>(item) * d + j];
  }
  return dot + config.label_offset;
}

SyntheticWorld generate_synthetic_world(const SynthConfig& config) {
  config.validate();
  SyntheticWorld world;
  world.config = config;
  std::mt19937_64 rng(config.seed);
  const auto d = config.latent_dim;
  // Factor scale chosen so the planted dot product has standard deviation ~2.
  std::normal_distribution<double> factor(0.0, std::sqrt(2.0 / std::sqrt(static_cast<double>(d))));
  world.user_factors.resize(config.n_users * d);
  world.item_factors.resize(config.n_items * d);
  for (auto& v : world.user_factors) v = factor(rng);
  for (auto& v : world.item_factors) v = factor(rng);

  auto& log = world.log;
  log.catalog_size = config.n_items;
  log.list_size = config.k;
  log.feature_cardinalities = {config.n_users};

  std::uniform_int_distribution<std::size_t> pick_user(0, config.n_users - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<ItemId>> positives(config.n_users);
  std::vector<double> score(config.n_items);
  std::vector<ItemId> order(config.n_items);

  for (std::size_t r = 0; r < config.n_records; ++r) {
    const auto user = pick_user(rng);
    for (std::size_t i = 0; i < config.n_items; ++i) {
      score[i] = world.affinity(user, static_cast<ItemId>(i)) + config.exposure_noise * gauss(rng);
    }
    std::iota(order.begin(), order.end(), ItemId{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(config.k), order.end(),
                      [&](ItemId a, ItemId b) {
                        const auto sa = score[static_cast<std::size_t>(a)];
                        const auto sb = score[static_cast<std::size_t>(b)];
                        return sa != sb ? sa > sb : a < b;
                      });

    InteractionRecord rec;
    rec.session_id = "u" + std::to_string(user);
    rec.user_id = rec.session_id;
    rec.user_features = {static_cast<std::int64_t>(user)};
    rec.timestamp = static_cast<std::int64_t>(r);
    auto& hist = positives[user];
    const auto keep = std::min(hist.size(), config.max_history);
    rec.history.assign(hist.end() - static_cast<std::ptrdiff_t>(keep), hist.end());
    for (std::size_t j = 0; j < config.k; ++j) {
      const auto item = order[j];
      // Logistic noise: P(affinity + s * eps > 0) = sigmoid(affinity / s).
      double u = unit(rng);
      u = std::clamp(u, 1e-12, 1.0 - 1e-12);
      const double eps = std::log(u / (1.0 - u));
      const auto label = static_cast<std::uint8_t>(world.affinity(user, item) + config.noise_scale * eps > 0.0);
      rec.exposed.push_back(item);
      rec.feedback.push_back(label);
    }
    for (std::size_t j = 0; j < config.k; ++j) {
      if (rec.feedback[j]) hist.push_back(rec.exposed[j]);
    }
    log.records.push_back(std::move(rec));
  }
  return world;
}

SessionLog generate_synthetic(const SynthConfig& config) { return generate_synthetic_world(config).log; }

}  // namespace hac::data

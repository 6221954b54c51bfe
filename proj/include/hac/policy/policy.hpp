#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hac/data/log.hpp"
#include "hac/env/observation.hpp"
#include "hac/nn/module.hpp"

namespace hac::policy {

using data::ItemId;
using env::Observation;

enum class SelectionMode { kTopK, kCategorical };
enum class SamplingMode { kDeterministic, kGaussian };

std::string to_string(SelectionMode mode);
SelectionMode selection_mode_from_string(const std::string& name);

struct PolicyConfig {
  std::size_t catalog_size = 0;
  std::size_t list_size = 0;
  std::vector<std::size_t> feature_cardinalities;
  std::size_t dim = 32;
  std::size_t max_history = 50;
  std::size_t layers = 2;
  std::size_t heads = 4;
  double dropout = 0.1;
  std::vector<std::size_t> user_hidden = {128};
  double init_std = 0.01;
  double sigma = 0.1;
  SelectionMode selection = SelectionMode::kTopK;
  std::uint64_t seed = 0;

  static PolicyConfig for_log(const data::SessionLog& log);
  void validate() const;
  nlohmann::json to_json() const;
  static PolicyConfig from_json(const nlohmann::json& j);
  bool operator==(const PolicyConfig&) const = default;
};

struct HyperAction {
  nn::Tensor mean;    // [batch, dim]
  nn::Tensor sample;  // mean + sigma * noise; gradients pass through to the mean
  std::vector<double> noise;  // [batch * dim], empty in deterministic mode
  double sigma = 0.0;
  SamplingMode mode = SamplingMode::kDeterministic;
};

struct EffectAction {
  std::vector<ItemId> items;
  std::vector<double> probabilities;  // softmax over the full candidate set, per chosen item
  SelectionMode mode = SelectionMode::kTopK;
  double log_prob = 0.0;  // sum of log item probabilities
};

// Picks k distinct candidates from one row of scores. Top-k breaks ties toward
// the lower index; categorical draws without replacement, renormalizing the
// softmax over the remaining candidates after each draw. `candidates` maps
// positions to item ids (empty = identity).
EffectAction select_effect_action(std::span<const double> scores, std::size_t k, SelectionMode mode,
                                  std::mt19937_64* rng, std::span<const ItemId> candidates = {});

// Sequence-model policy: item kernel table, user-feature token, transformer
// state encoder, linear hyper-action head, dot-product scorer.
class Policy {
 public:
  explicit Policy(PolicyConfig config);

  const PolicyConfig& config() const { return config_; }
  const nn::ParameterList& parameters() const { return params_; }
  const nn::Tensor& item_kernel() const { return items_->table(); }
  std::size_t dim() const { return config_.dim; }

  // [batch, dim]: output of the encoder at the user-token position.
  nn::Tensor encode_state(std::span<const Observation> observations, const nn::Context& ctx = {}) const;
  HyperAction propose_hyper_action(const nn::Tensor& state, double sigma, SamplingMode mode,
                                   std::mt19937_64* rng = nullptr) const;
  // Z [batch, dim] -> [batch, candidates]; empty candidates scores the whole catalog.
  nn::Tensor score_items(const nn::Tensor& z, std::span<const ItemId> candidates = {}) const;
  // Rows of the item kernel for the given ids: [ids.size(), dim].
  nn::Tensor kernel_rows(std::span<const ItemId> ids) const;

  void save(const std::filesystem::path& directory) const;
  void load(const std::filesystem::path& directory);

 private:
  void check_items(std::span<const ItemId> ids) const;

  PolicyConfig config_;
  std::unique_ptr<nn::Embedding> items_;
  std::unique_ptr<nn::Embedding> positions_;
  std::unique_ptr<env::UserFeatureEncoder> user_;
  std::unique_ptr<nn::TransformerEncoder> encoder_;
  std::unique_ptr<nn::Linear> head_;
  nn::ParameterList params_;
};

}  // namespace hac::policy

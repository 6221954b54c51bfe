#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "hac/data/log.hpp"
#include "hac/env/observation.hpp"
#include "hac/nn/module.hpp"

namespace hac::env {

struct ResponseModelConfig {
  std::size_t catalog_size = 0;
  std::size_t list_size = 0;
  std::vector<std::size_t> feature_cardinalities;
  std::size_t embed_dim = 32;
  std::size_t max_history = 50;
  std::size_t heads = 1;
  double dropout = 0.0;
  double init_std = 0.1;
  std::uint64_t seed = 0;

  static ResponseModelConfig for_log(const data::SessionLog& log);
  nlohmann::json to_json() const;
  static ResponseModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ResponseModelConfig&) const = default;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// User-response model: item embeddings plus two attention stages (a transformer
// layer over history and user token, then attention pooling queried by the user
// token) yield a user embedding u; P(click i) = sigmoid(u . e_i).
class ResponseModel {
 public:
  explicit ResponseModel(ResponseModelConfig config);

  const ResponseModelConfig& config() const { return config_; }
  const nn::ParameterList& parameters() const { return params_; }
  const nn::Tensor& item_embeddings() const { return items_->table(); }

  // [batch, embed_dim]
  nn::Tensor user_embeddings(std::span<const Observation> observations, const nn::Context& ctx = {}) const;
  // items holds `per_row` ids per observation, row-major; returns [batch, per_row].
  nn::Tensor logits(std::span<const Observation> observations, std::span<const ItemId> items, std::size_t per_row,
                    const nn::Context& ctx = {}) const;

  std::vector<double> probabilities(const Observation& observation, std::span<const ItemId> items) const;
  // Batched form: row b scores items[b * per_row, (b + 1) * per_row).
  std::vector<double> probabilities(std::span<const Observation> observations, std::span<const ItemId> items,
                                    std::size_t per_row) const;
  std::vector<double> probabilities_for_embedding(std::span<const double> user_embedding,
                                                  std::span<const ItemId> items) const;

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  void check_items(std::span<const ItemId> items) const;

  ResponseModelConfig config_;
  std::unique_ptr<nn::Embedding> items_;
  std::unique_ptr<nn::Embedding> positions_;
  std::unique_ptr<UserFeatureEncoder> user_;
  std::unique_ptr<nn::TransformerEncoder> encoder_;
  std::unique_ptr<nn::AttentionPool> pool_;
  nn::ParameterList params_;
};

struct ResponseFitOptions {
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  // Trailing (latest) share of records held out for the AUC estimate; 0 disables it.
  double heldout_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct ResponseFitReport {
  double initial_loss = 0.0;  // mean BCE over the training records before any update
  std::vector<double> epoch_losses;  // running mean BCE per epoch
  double final_loss = 0.0;  // mean BCE over the training records after training
  double heldout_auc = 0.5;
  std::size_t train_records = 0;
  std::size_t heldout_records = 0;
};

ResponseFitReport fit_response_model(ResponseModel& model, const data::SessionLog& log,
                                     const ResponseFitOptions& options = {});

// Mean BCE of the model over every exposed item in `records`.
double mean_bce(const ResponseModel& model, std::span<const data::InteractionRecord> records);

// Probability that a random positive outscores a random negative; ties count half.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

}  // namespace hac::env

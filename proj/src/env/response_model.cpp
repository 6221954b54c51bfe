#include "hac/env/response_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hac/nn/ops.hpp"
#include "hac/nn/optim.hpp"
#include "hac/nn/serialize.hpp"

namespace hac::env {

using nn::Tensor;

ResponseModelConfig ResponseModelConfig::for_log(const data::SessionLog& log) {
  ResponseModelConfig c;
  c.catalog_size = log.catalog_size;
  c.list_size = log.list_size;
  c.feature_cardinalities = log.feature_cardinalities;
  return c;
}

nlohmann::json ResponseModelConfig::to_json() const {
  return {{"catalog_size", catalog_size}, {"list_size", list_size}, {"feature_cardinalities", feature_cardinalities},
          {"embed_dim", embed_dim},       {"max_history", max_history}, {"heads", heads},
          {"dropout", dropout},           {"init_std", init_std},       {"seed", seed}};
}

ResponseModelConfig ResponseModelConfig::from_json(const nlohmann::json& j) {
  ResponseModelConfig c;
  c.catalog_size = j.at("catalog_size").get<std::size_t>();
  c.list_size = j.at("list_size").get<std::size_t>();
  c.feature_cardinalities = j.at("feature_cardinalities").get<std::vector<std::size_t>>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.max_history = j.at("max_history").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.init_std = j.at("init_std").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

ResponseModel::ResponseModel(ResponseModelConfig config) : config_(std::move(config)) {
  if (config_.catalog_size == 0 || config_.list_size == 0) {
    throw std::invalid_argument("response model needs a catalog and list size");
  }
  const auto d = config_.embed_dim;
  std::mt19937_64 rng(config_.seed);
  items_ = std::make_unique<nn::Embedding>(nn::ModuleSpec::embedding(config_.catalog_size, d, config_.init_std), rng);
  positions_ =
      std::make_unique<nn::Embedding>(nn::ModuleSpec::embedding(config_.max_history + 1, d, config_.init_std), rng);
  user_ = std::make_unique<UserFeatureEncoder>(config_.feature_cardinalities, d, std::vector<std::size_t>{},
                                               config_.init_std, rng);
  encoder_ = std::make_unique<nn::TransformerEncoder>(
      nn::ModuleSpec::transformer_encoder(d, d, 1, config_.heads, config_.dropout), rng);
  pool_ = std::make_unique<nn::AttentionPool>(nn::ModuleSpec::attention_pool(d, config_.heads), rng);

  nn::append_parameters(params_, "items.", *items_);
  nn::append_parameters(params_, "positions.", *positions_);
  user_->collect("user.", params_);
  nn::append_parameters(params_, "encoder.", *encoder_);
  nn::append_parameters(params_, "pool.", *pool_);
}

Tensor ResponseModel::user_embeddings(std::span<const Observation> observations, const nn::Context& ctx) const {
  const auto batch = observations.size();
  const auto d = config_.embed_dim;
  const auto packed = pack_histories(observations, config_.max_history, config_.catalog_size);
  const auto slots = packed.length + 1;

  auto token = (*user_)(observations);  // [b, d]
  auto history = nn::reshape(items_->lookup(packed.item_ids), {batch, packed.length, d});
  auto seq = nn::concat({history, nn::reshape(token, {batch, 1, d})}, 1);
  seq = nn::add(seq, nn::reshape(positions_->lookup(packed.positions), {batch, slots, d}));
  auto encoded = encoder_->encode(seq, packed.mask, ctx);
  return pool_->pool(token, encoded, packed.mask);
}

void ResponseModel::check_items(std::span<const ItemId> items) const {
  for (auto id : items) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.catalog_size) {
      throw std::out_of_range("item " + std::to_string(id) + " outside catalog of size " +
                              std::to_string(config_.catalog_size));
    }
  }
}

Tensor ResponseModel::logits(std::span<const Observation> observations, std::span<const ItemId> items,
                             std::size_t per_row, const nn::Context& ctx) const {
  const auto batch = observations.size();
  if (items.size() != batch * per_row) throw nn::ShapeError("logits: item count does not match batch * per_row");
  check_items(items);
  const auto d = config_.embed_dim;
  auto u = nn::reshape(user_embeddings(observations, ctx), {batch, 1, d});
  auto e = nn::reshape(items_->lookup(items), {batch, per_row, d});
  return nn::reshape(nn::bmm(u, e, true), {batch, per_row});
}

std::vector<double> ResponseModel::probabilities(std::span<const Observation> observations,
                                                 std::span<const ItemId> items, std::size_t per_row) const {
  nn::NoGradGuard guard;
  auto p = nn::sigmoid(logits(observations, items, per_row));
  return {p.values().begin(), p.values().end()};
}

std::vector<double> ResponseModel::probabilities(const Observation& observation, std::span<const ItemId> items) const {
  return probabilities(std::span<const Observation>(&observation, 1), items, items.size());
}

std::vector<double> ResponseModel::probabilities_for_embedding(std::span<const double> user_embedding,
                                                               std::span<const ItemId> items) const {
  const auto d = config_.embed_dim;
  if (user_embedding.size() != d) throw nn::ShapeError("user embedding has the wrong width");
  check_items(items);
  const auto table = items_->table().values();
  std::vector<double> out;
  out.reserve(items.size());
  for (auto id : items) {
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += user_embedding[j] * table[static_cast<std::size_t>(id) * d + j];
    out.push_back(1.0 / (1.0 + std::exp(-dot)));
  }
  return out;
}

void ResponseModel::save(const std::filesystem::path& path) const {
  nn::write_parameter_file(path, config_.to_json().dump(), params_);
}

void ResponseModel::load(const std::filesystem::path& path) {
  nn::read_parameter_file(path, config_.to_json().dump(), params_);
}

namespace {

struct Batch {
  std::vector<Observation> observations;
  std::vector<ItemId> items;
  std::vector<double> labels;
};

Batch make_batch(std::span<const data::InteractionRecord> records, std::span<const std::size_t> index) {
  Batch b;
  for (auto i : index) {
    const auto& rec = records[i];
    b.observations.push_back({rec.user_features, rec.history});
    b.items.insert(b.items.end(), rec.exposed.begin(), rec.exposed.end());
    for (auto y : rec.feedback) b.labels.push_back(y);
  }
  return b;
}

}  // namespace

double mean_bce(const ResponseModel& model, std::span<const data::InteractionRecord> records) {
  if (records.empty()) return 0.0;
  nn::NoGradGuard guard;
  const auto k = model.config().list_size;
  double total = 0.0;
  std::vector<std::size_t> index;
  for (std::size_t start = 0; start < records.size(); start += 256) {
    index.clear();
    for (std::size_t i = start; i < std::min(records.size(), start + 256); ++i) index.push_back(i);
    auto b = make_batch(records, index);
    auto logits = model.logits(b.observations, b.items, k);
    auto loss = nn::bce_with_logits(logits, Tensor::from(logits.shape(), b.labels));
    total += loss.item() * static_cast<double>(index.size());
  }
  return total / static_cast<double>(records.size());
}

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with midranks for ties.
  double rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const auto negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) return 0.5;
  const double p = static_cast<double>(positives);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

ResponseFitReport fit_response_model(ResponseModel& model, const data::SessionLog& log,
                                     const ResponseFitOptions& options) {
  if (log.records.empty()) throw std::invalid_argument("cannot fit a response model on an empty log");
  if (log.list_size != model.config().list_size) throw std::invalid_argument("log list size differs from model");
  if (options.batch_size == 0) throw std::invalid_argument("batch size must be positive");

  const auto n = log.records.size();
  auto heldout = static_cast<std::size_t>(std::floor(options.heldout_fraction * static_cast<double>(n)));
  if (heldout >= n) heldout = n - 1;
  const std::span<const data::InteractionRecord> all(log.records);
  const auto train = all.first(n - heldout);
  const auto test = all.last(heldout);

  ResponseFitReport report;
  report.train_records = train.size();
  report.heldout_records = test.size();
  try {
    report.initial_loss = mean_bce(model, train);
  } catch (const nn::NumericError& e) {
    throw DivergenceError(std::string("response model produced a non-finite loss before training: ") + e.what());
  }

  nn::Adam adam(model.parameters(), {.learning_rate = options.learning_rate, .weight_decay = options.weight_decay});
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto k = model.config().list_size;
  const nn::Context ctx{true, &rng};

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const auto count = std::min(options.batch_size, order.size() - start);
      auto b = make_batch(train, std::span<const std::size_t>(order).subspan(start, count));
      double value = 0.0;
      try {
        auto logits = model.logits(b.observations, b.items, k, ctx);
        auto loss = nn::bce_with_logits(logits, Tensor::from(logits.shape(), b.labels));
        value = loss.item();
        if (!std::isfinite(value)) throw nn::NumericError("loss is not finite");
        loss.backward();
        adam.step();
      } catch (const nn::NumericError& e) {
        throw DivergenceError("response model diverged in epoch " + std::to_string(epoch + 1) + " at batch offset " +
                              std::to_string(start) + ": " + e.what());
      }
      total += value * static_cast<double>(count);
    }
    report.epoch_losses.push_back(total / static_cast<double>(order.size()));
  }
  report.final_loss = mean_bce(model, train);

  if (!test.empty()) {
    nn::NoGradGuard guard;
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    for (std::size_t start = 0; start < test.size(); start += 256) {
      std::vector<std::size_t> index;
      for (std::size_t i = start; i < std::min(test.size(), start + 256); ++i) index.push_back(i);
      auto b = make_batch(test, index);
      auto logits = model.logits(b.observations, b.items, k);
      scores.insert(scores.end(), logits.values().begin(), logits.values().end());
      for (double y : b.labels) labels.push_back(static_cast<std::uint8_t>(y));
    }
    report.heldout_auc = roc_auc(scores, labels);
  }
  return report;
}

}  // namespace hac::env

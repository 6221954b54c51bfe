#include "hac/policy/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "hac/nn/ops.hpp"
#include "hac/nn/serialize.hpp"

namespace hac::policy {

using nn::Tensor;

std::string to_string(SelectionMode mode) { return mode == SelectionMode::kTopK ? "topk" : "categorical"; }

SelectionMode selection_mode_from_string(const std::string& name) {
  if (name == "topk") return SelectionMode::kTopK;
  if (name == "categorical") return SelectionMode::kCategorical;
  throw std::invalid_argument("unknown selection mode '" + name + "'");
}

PolicyConfig PolicyConfig::for_log(const data::SessionLog& log) {
  PolicyConfig c;
  c.catalog_size = log.catalog_size;
  c.list_size = log.list_size;
  c.feature_cardinalities = log.feature_cardinalities;
  return c;
}

void PolicyConfig::validate() const {
  if (catalog_size == 0 || list_size == 0) throw std::invalid_argument("policy needs a catalog and list size");
  if (list_size > catalog_size) throw std::invalid_argument("list size exceeds catalog size");
  if (dim == 0 || max_history == 0 || layers == 0 || heads == 0) {
    throw std::invalid_argument("policy dimensions must be positive");
  }
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
}

nlohmann::json PolicyConfig::to_json() const {
  return {{"catalog_size", catalog_size}, {"list_size", list_size},     {"feature_cardinalities", feature_cardinalities},
          {"dim", dim},                   {"max_history", max_history}, {"layers", layers},
          {"heads", heads},               {"dropout", dropout},         {"user_hidden", user_hidden},
          {"init_std", init_std},         {"sigma", sigma},             {"selection", to_string(selection)},
          {"seed", seed}};
}

PolicyConfig PolicyConfig::from_json(const nlohmann::json& j) {
  PolicyConfig c;
  c.catalog_size = j.at("catalog_size").get<std::size_t>();
  c.list_size = j.at("list_size").get<std::size_t>();
  c.feature_cardinalities = j.at("feature_cardinalities").get<std::vector<std::size_t>>();
  c.dim = j.value("dim", c.dim);
  c.max_history = j.value("max_history", c.max_history);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.dropout = j.value("dropout", c.dropout);
  c.user_hidden = j.value("user_hidden", c.user_hidden);
  c.init_std = j.value("init_std", c.init_std);
  c.sigma = j.value("sigma", c.sigma);
  c.selection = selection_mode_from_string(j.value("selection", std::string("topk")));
  c.seed = j.value("seed", c.seed);
  return c;
}

EffectAction select_effect_action(std::span<const double> scores, std::size_t k, SelectionMode mode,
                                  std::mt19937_64* rng, std::span<const ItemId> candidates) {
  const auto n = scores.size();
  if (!candidates.empty() && candidates.size() != n) throw std::invalid_argument("candidate ids do not match scores");
  if (k == 0 || k > n) {
    throw std::invalid_argument("cannot select " + std::to_string(k) + " items from " + std::to_string(n));
  }
  // Softmax over the full candidate set.
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> prob(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += prob[i] = std::exp(scores[i] - top);
  for (auto& p : prob) p /= total;

  std::vector<std::size_t> chosen;
  chosen.reserve(k);
  if (mode == SelectionMode::kTopK) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; });
    chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    if (rng == nullptr) throw std::invalid_argument("categorical selection needs a random generator");
    std::vector<double> remaining = prob;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t draw = 0; draw < k; ++draw) {
      double mass = 0.0;
      for (double w : remaining) mass += w;
      double u = unit(*rng) * mass;
      std::size_t pick = n;
      std::size_t last_positive = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (remaining[i] <= 0.0) continue;
        last_positive = i;
        if (u < remaining[i]) {
          pick = i;
          break;
        }
        u -= remaining[i];
      }
      if (pick == n) pick = last_positive;
      if (pick == n) {
        // All remaining mass underflowed: fall back to the lowest unused index.
        for (std::size_t i = 0; i < n; ++i) {
          if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) {
            pick = i;
            break;
          }
        }
      }
      chosen.push_back(pick);
      remaining[pick] = 0.0;
    }
  }

  EffectAction a;
  a.mode = mode;
  for (auto i : chosen) {
    a.items.push_back(candidates.empty() ? static_cast<ItemId>(i) : candidates[i]);
    a.probabilities.push_back(prob[i]);
    // log softmax computed directly to avoid log(0) for tiny probabilities
    a.log_prob += scores[i] - top - std::log(total);
  }
  return a;
}

Policy::Policy(PolicyConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto d = config_.dim;
  std::mt19937_64 rng(config_.seed);
  items_ = std::make_unique<nn::Embedding>(nn::ModuleSpec::embedding(config_.catalog_size, d, config_.init_std), rng);
  positions_ =
      std::make_unique<nn::Embedding>(nn::ModuleSpec::embedding(config_.max_history + 1, d, config_.init_std), rng);
  user_ = std::make_unique<env::UserFeatureEncoder>(config_.feature_cardinalities, d, config_.user_hidden,
                                                    config_.init_std, rng);
  encoder_ = std::make_unique<nn::TransformerEncoder>(
      nn::ModuleSpec::transformer_encoder(d, d, config_.layers, config_.heads, config_.dropout), rng);
  head_ = std::make_unique<nn::Linear>(nn::ModuleSpec::linear(d, d), rng);

  nn::append_parameters(params_, "items.", *items_);
  nn::append_parameters(params_, "positions.", *positions_);
  user_->collect("user.", params_);
  nn::append_parameters(params_, "encoder.", *encoder_);
  nn::append_parameters(params_, "head.", *head_);
}

Tensor Policy::encode_state(std::span<const Observation> observations, const nn::Context& ctx) const {
  const auto batch = observations.size();
  if (batch == 0) throw std::invalid_argument("encode_state needs at least one observation");
  const auto d = config_.dim;
  const auto packed = env::pack_histories(observations, config_.max_history, config_.catalog_size);
  const auto slots = packed.length + 1;
  auto token = (*user_)(observations);
  auto history = nn::reshape(items_->lookup(packed.item_ids), {batch, packed.length, d});
  auto seq = nn::concat({history, nn::reshape(token, {batch, 1, d})}, 1);
  seq = nn::add(seq, nn::reshape(positions_->lookup(packed.positions), {batch, slots, d}));
  auto encoded = encoder_->encode(seq, packed.mask, ctx);
  return nn::reshape(nn::slice(encoded, 1, packed.length, 1), {batch, d});
}

HyperAction Policy::propose_hyper_action(const Tensor& state, double sigma, SamplingMode mode,
                                         std::mt19937_64* rng) const {
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
  HyperAction h;
  h.mean = (*head_)(state);
  h.sigma = sigma;
  h.mode = mode;
  if (mode == SamplingMode::kDeterministic || sigma == 0.0) {
    h.sample = h.mean;
    return h;
  }
  if (rng == nullptr) throw std::invalid_argument("gaussian hyper-actions need a random generator");
  std::normal_distribution<double> gauss(0.0, 1.0);
  h.noise.resize(h.mean.numel());
  std::vector<double> offset(h.noise.size());
  for (std::size_t i = 0; i < h.noise.size(); ++i) {
    h.noise[i] = gauss(*rng);
    offset[i] = sigma * h.noise[i];
  }
  h.sample = nn::add(h.mean, Tensor::from(h.mean.shape(), std::move(offset)));
  return h;
}

void Policy::check_items(std::span<const ItemId> ids) const {
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.catalog_size) {
      throw std::out_of_range("item " + std::to_string(id) + " outside catalog");
    }
  }
}

Tensor Policy::kernel_rows(std::span<const ItemId> ids) const {
  check_items(ids);
  return items_->lookup(ids);
}

Tensor Policy::score_items(const Tensor& z, std::span<const ItemId> candidates) const {
  if (z.rank() != 2 || z.shape()[1] != config_.dim) throw nn::ShapeError("score_items expects Z of shape [batch, dim]");
  if (candidates.empty()) return nn::matmul_nt(z, items_->table());
  return nn::matmul_nt(z, kernel_rows(candidates));
}

void Policy::save(const std::filesystem::path& directory) const {
  std::filesystem::create_directories(directory);
  nn::write_parameter_file(directory / "policy.bin", config_.to_json().dump(), params_);
  nlohmann::json sidecar = {{"catalog_size", config_.catalog_size},
                            {"dim", config_.dim},
                            {"list_size", config_.list_size},
                            {"sigma", config_.sigma},
                            {"selection", to_string(config_.selection)},
                            {"config", config_.to_json()}};
  std::ofstream out(directory / "policy.json");
  out << sidecar.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write policy sidecar in " + directory.string());
}

void Policy::load(const std::filesystem::path& directory) {
  std::ifstream in(directory / "policy.json");
  if (!in) throw std::runtime_error("missing policy sidecar in " + directory.string());
  const auto sidecar = nlohmann::json::parse(in);
  if (PolicyConfig::from_json(sidecar.at("config")) != config_) {
    throw std::runtime_error("policy checkpoint in " + directory.string() + " was written for a different config");
  }
  nn::read_parameter_file(directory / "policy.bin", config_.to_json().dump(), params_);
}

}  // namespace hac::policy

#include "hac/env/observation.hpp"

#include "hac/nn/ops.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace hac::env {

PackedHistory pack_histories(std::span<const Observation> observations, std::size_t max_history,
                             std::size_t catalog_size) {
  if (max_history == 0) throw std::invalid_argument("max_history must be positive");
  PackedHistory out;
  out.batch = observations.size();
  out.length = max_history;
  const auto slots = max_history + 1;
  out.item_ids.assign(out.batch * max_history, 0);
  out.mask.assign(out.batch * slots, 0);
  out.positions.resize(out.batch * slots);
  for (std::size_t b = 0; b < out.batch; ++b) {
    const auto& hist = observations[b].history;
    const auto keep = std::min(hist.size(), max_history);
    const auto offset = max_history - keep;
    for (std::size_t j = 0; j < keep; ++j) {
      const auto id = hist[hist.size() - keep + j];
      if (id < 0 || static_cast<std::size_t>(id) >= catalog_size) {
        throw std::out_of_range("history item " + std::to_string(id) + " outside catalog");
      }
      out.item_ids[b * max_history + offset + j] = id;
      out.mask[b * slots + offset + j] = 1;
    }
    out.mask[b * slots + max_history] = 1;
    for (std::size_t j = 0; j < slots; ++j) out.positions[b * slots + j] = static_cast<std::int64_t>(j);
  }
  return out;
}

std::vector<Observation> observations_from_log(const data::SessionLog& log) {
  std::vector<Observation> out;
  out.reserve(log.records.size());
  for (const auto& rec : log.records) out.push_back({rec.user_features, rec.history});
  return out;
}

UserFeatureEncoder::UserFeatureEncoder(const std::vector<std::size_t>& cardinalities, std::size_t dim,
                                       const std::vector<std::size_t>& hidden, double init_std,
                                       std::mt19937_64& rng) {
  if (cardinalities.empty()) {
    std::normal_distribution<double> dist(0.0, init_std);
    std::vector<double> v(dim);
    for (auto& x : v) x = dist(rng);
    constant_ = nn::Tensor::from({1, dim}, std::move(v), true);
    return;
  }
  for (auto card : cardinalities) {
    features_.push_back(std::make_unique<nn::Embedding>(nn::ModuleSpec::embedding(card, dim, init_std), rng));
  }
  std::vector<std::size_t> dims = {cardinalities.size() * dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(dim);
  mlp_ = std::make_unique<nn::Mlp>(nn::ModuleSpec::mlp(dims), rng);
}

nn::Tensor UserFeatureEncoder::operator()(std::span<const Observation> observations) const {
  const auto batch = observations.size();
  if (constant_.defined()) {
    const std::vector<std::int64_t> zeros(batch, 0);
    return nn::index_select(constant_, zeros);
  }
  std::vector<nn::Tensor> parts;
  std::vector<std::int64_t> codes(batch);
  for (std::size_t f = 0; f < features_.size(); ++f) {
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& feats = observations[b].user_features;
      if (feats.size() != features_.size()) {
        throw std::invalid_argument("observation has " + std::to_string(feats.size()) + " user features, expected " +
                                    std::to_string(features_.size()));
      }
      codes[b] = feats[f];
    }
    parts.push_back(features_[f]->lookup(codes));
  }
  return (*mlp_)(parts.size() == 1 ? parts[0] : nn::concat(parts, 1));
}

void UserFeatureEncoder::collect(const std::string& prefix, nn::ParameterList& out) const {
  if (constant_.defined()) {
    out.push_back({prefix + "constant", constant_});
    return;
  }
  for (std::size_t f = 0; f < features_.size(); ++f) {
    nn::append_parameters(out, prefix + "feature" + std::to_string(f) + ".", *features_[f]);
  }
  nn::append_parameters(out, prefix + "mlp.", *mlp_);
}

}  // namespace hac::env

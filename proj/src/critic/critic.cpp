#include "hac/critic/critic.hpp"

#include <random>
#include <stdexcept>
#include <string>

#include "hac/nn/ops.hpp"

namespace hac::critic {

using nn::Tensor;

namespace {

std::unique_ptr<nn::Mlp> make_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::uint64_t seed) {
  std::vector<std::size_t> dims = {in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  std::mt19937_64 rng(seed);
  return std::make_unique<nn::Mlp>(nn::ModuleSpec::mlp(dims), rng);
}

void require_rows(const Tensor& t, std::size_t dim, const char* what) {
  if (t.rank() != 2 || t.shape()[1] != dim) {
    throw nn::ShapeError(std::string(what) + " must be [batch, " + std::to_string(dim) + "], got " +
                         nn::shape_string(t.shape()));
  }
}

}  // namespace

QNetwork::QNetwork(std::size_t dim, std::vector<std::size_t> hidden, std::uint64_t seed)
    : dim_(dim), mlp_(make_mlp(2 * dim, hidden, seed)) {}

Tensor QNetwork::operator()(const Tensor& state, const Tensor& z) const {
  require_rows(state, dim_, "critic state");
  require_rows(z, dim_, "critic action");
  if (state.shape()[0] != z.shape()[0]) throw nn::ShapeError("critic state and action batch sizes differ");
  const auto batch = state.shape()[0];
  return nn::reshape((*mlp_)(nn::concat({state, z}, 1)), {batch});
}

VNetwork::VNetwork(std::size_t dim, std::vector<std::size_t> hidden, std::uint64_t seed)
    : dim_(dim), mlp_(make_mlp(dim, hidden, seed)) {}

Tensor VNetwork::operator()(const Tensor& state) const {
  require_rows(state, dim_, "value state");
  return nn::reshape((*mlp_)(state), {state.shape()[0]});
}

Tensor inverse_pool(const Tensor& kernel, std::span<const ItemId> items, std::size_t per_row) {
  if (per_row == 0 || items.empty()) throw std::invalid_argument("inverse pooling needs a non-empty action");
  if (items.size() % per_row != 0) throw std::invalid_argument("item count is not a multiple of the slate size");
  if (kernel.rank() != 2) throw nn::ShapeError("item kernel must be a matrix");
  const auto batch = items.size() / per_row;
  const auto dim = kernel.shape()[1];
  auto rows = nn::index_select(kernel, items);
  return nn::mean_axis(nn::reshape(rows, {batch, per_row, dim}), 1);
}

Tensor q_effect(const QNetwork& q, const Tensor& state, const Tensor& kernel, std::span<const ItemId> items,
                std::size_t per_row) {
  return q(state, inverse_pool(kernel, items, per_row));
}

void soft_update(const nn::ParameterList& target, const nn::ParameterList& live, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0, 1]");
  if (target.size() != live.size()) throw std::invalid_argument("soft update: parameter lists differ in length");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i].name != live[i].name || target[i].tensor.shape() != live[i].tensor.shape()) {
      throw std::invalid_argument("soft update: parameter " + target[i].name + " does not match " + live[i].name);
    }
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto handle = target[i].tensor;
    auto dst = handle.mutable_values();
    const auto src = live[i].tensor.values();
    for (std::size_t j = 0; j < dst.size(); ++j) {
      if (src[j] != dst[j]) dst[j] = tau * src[j] + (1.0 - tau) * dst[j];
    }
  }
}

}  // namespace hac::critic

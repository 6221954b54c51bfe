#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "hac/data/log.hpp"
#include "hac/nn/module.hpp"

namespace hac::critic {

using data::ItemId;

// g(s, Z): MLP over [s, Z] with ReLU hidden layers and a scalar output.
class QNetwork {
 public:
  QNetwork(std::size_t dim, std::vector<std::size_t> hidden = {256, 64}, std::uint64_t seed = 0);
  // state, z: [batch, dim] -> [batch]
  nn::Tensor operator()(const nn::Tensor& state, const nn::Tensor& z) const;
  const nn::ParameterList& parameters() const { return mlp_->parameters(); }
  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_;
  std::unique_ptr<nn::Mlp> mlp_;
};

// V(s): same hidden sizes, state only.
class VNetwork {
 public:
  VNetwork(std::size_t dim, std::vector<std::size_t> hidden = {256, 64}, std::uint64_t seed = 0);
  nn::Tensor operator()(const nn::Tensor& state) const;
  const nn::ParameterList& parameters() const { return mlp_->parameters(); }

 private:
  std::size_t dim_;
  std::unique_ptr<nn::Mlp> mlp_;
};

// h(a): mean of the kernel rows of each slate. items holds `per_row` ids per
// slate, row-major; returns [items.size() / per_row, dim].
nn::Tensor inverse_pool(const nn::Tensor& kernel, std::span<const ItemId> items, std::size_t per_row);

// Q(s, a) = g(s, h(a)) through the same network.
nn::Tensor q_effect(const QNetwork& q, const nn::Tensor& state, const nn::Tensor& kernel,
                    std::span<const ItemId> items, std::size_t per_row);

// target <- tau * live + (1 - tau) * target, matched by name and shape.
void soft_update(const nn::ParameterList& target, const nn::ParameterList& live, double tau);

}  // namespace hac::critic

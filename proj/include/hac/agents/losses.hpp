#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hac/data/log.hpp"
#include "hac/nn/tensor.hpp"

namespace hac::agents {

using data::ItemId;

// r + gamma * (1 - d) * next_value, per sample.
std::vector<double> td_targets(std::span<const double> rewards, std::span<const double> next_values,
                               std::span<const std::uint8_t> done, double gamma);

// mean over the batch of (q - target)^2; targets carry no gradient.
nn::Tensor td_loss(const nn::Tensor& q, std::span<const double> targets);

// -mean Q: minimizing it maximizes the critic's value of the actor's output.
nn::Tensor qmax_loss(const nn::Tensor& q);

// mean over the batch of ||z - z_hat||^2.
nn::Tensor hyper_loss(const nn::Tensor& z, const nn::Tensor& z_hat);

// Item-level supervision. scores [B, N]; items holds k ids per row; feedback
// the matching 0/1 labels. P = softmax(scores); log arguments are floored at
// kProbabilityClamp.
// Returns -mean_b sum_i [y log P + (1 - y) log (1 - P)].
nn::Tensor bce_supervision_loss(const nn::Tensor& scores, std::span<const ItemId> items, std::size_t k,
                                std::span<const std::uint8_t> feedback);

// [B]: sum of log softmax(scores) over each row's k items.
nn::Tensor list_log_prob(const nn::Tensor& scores, std::span<const ItemId> items, std::size_t k);

// -mean(advantage * log_prob); advantages are constants.
nn::Tensor pg_loss(const nn::Tensor& log_prob, std::span<const double> advantages);

// -mean log-likelihood of each row's taken items under catalog logits.
nn::Tensor ra_align_loss(const nn::Tensor& logits, std::span<const ItemId> items, std::size_t k);

inline constexpr double kProbabilityClamp = 1e-7;

}  // namespace hac::agents

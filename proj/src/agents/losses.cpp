#include "hac/agents/losses.hpp"

#include <stdexcept>
#include <string>

#include "hac/nn/ops.hpp"

namespace hac::agents {

using nn::Tensor;

namespace {

void require_batch(const Tensor& t, std::size_t n, const char* what) {
  if (t.rank() != 1 || t.shape()[0] != n) {
    throw nn::ShapeError(std::string(what) + ": expected [" + std::to_string(n) + "], got " +
                         nn::shape_string(t.shape()));
  }
}

void require_rows(const Tensor& scores, std::span<const ItemId> items, std::size_t k) {
  if (scores.rank() != 2) throw nn::ShapeError("scores must be [batch, catalog]");
  if (k == 0 || items.size() != scores.shape()[0] * k) {
    throw std::invalid_argument("expected " + std::to_string(k) + " items per row for " +
                                std::to_string(scores.shape()[0]) + " rows, got " + std::to_string(items.size()));
  }
}

}  // namespace

std::vector<double> td_targets(std::span<const double> rewards, std::span<const double> next_values,
                               std::span<const std::uint8_t> done, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (next_values.size() != rewards.size() || done.size() != rewards.size()) {
    throw std::invalid_argument("td_targets: rewards, next values and done flags differ in length");
  }
  std::vector<double> out(rewards.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = done[i] ? rewards[i] : rewards[i] + gamma * next_values[i];
  return out;
}

Tensor td_loss(const Tensor& q, std::span<const double> targets) {
  require_batch(q, targets.size(), "td_loss");
  auto target = Tensor::from({targets.size()}, std::vector<double>(targets.begin(), targets.end()));
  return nn::mean(nn::square(nn::sub(q, target)));
}

Tensor qmax_loss(const Tensor& q) {
  if (q.rank() != 1) throw nn::ShapeError("qmax_loss expects [batch]");
  return nn::neg(nn::mean(q));
}

Tensor hyper_loss(const Tensor& z, const Tensor& z_hat) {
  if (z.rank() != 2 || z.shape() != z_hat.shape()) throw nn::ShapeError("hyper_loss expects matching [batch, dim]");
  return nn::mean(nn::sum_last(nn::square(nn::sub(z, z_hat))));
}

Tensor bce_supervision_loss(const Tensor& scores, std::span<const ItemId> items, std::size_t k,
                            std::span<const std::uint8_t> feedback) {
  require_rows(scores, items, k);
  if (feedback.size() != items.size()) throw std::invalid_argument("bce: one label per item required");
  auto p = nn::gather_cols(nn::softmax(scores), items, k);
  std::vector<double> y(feedback.begin(), feedback.end());
  std::vector<double> not_y(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) not_y[i] = 1.0 - y[i];
  const nn::Shape shape = {scores.shape()[0], k};
  auto pos = nn::mul(Tensor::from(shape, std::move(y)), nn::log(nn::clamp(p, kProbabilityClamp, 1.0)));
  auto not_p = nn::clamp(nn::add_scalar(nn::neg(p), 1.0), kProbabilityClamp, 1.0);
  auto neg = nn::mul(Tensor::from(shape, std::move(not_y)), nn::log(not_p));
  return nn::neg(nn::mean(nn::sum_last(nn::add(pos, neg))));
}

Tensor list_log_prob(const Tensor& scores, std::span<const ItemId> items, std::size_t k) {
  require_rows(scores, items, k);
  return nn::sum_last(nn::gather_cols(nn::log_softmax(scores), items, k));
}

Tensor pg_loss(const Tensor& log_prob, std::span<const double> advantages) {
  require_batch(log_prob, advantages.size(), "pg_loss");
  auto adv = Tensor::from({advantages.size()}, std::vector<double>(advantages.begin(), advantages.end()));
  return nn::neg(nn::mean(nn::mul(adv, log_prob)));
}

Tensor ra_align_loss(const Tensor& logits, std::span<const ItemId> items, std::size_t k) {
  return nn::neg(nn::mean(list_log_prob(logits, items, k)));
}

}  // namespace hac::agents

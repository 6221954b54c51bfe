#include "hac/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hac/nn/ops.hpp"

namespace hac::nn {

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& b : blocks) worst = std::max(worst, b.max_rel_error);
  return worst;
}

GradCheckReport check_gradients(const ParameterList& wrt, const std::function<Tensor()>& loss,
                                const GradCheckOptions& options) {
  zero_grads(wrt);
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& p : wrt) {
    if (p.tensor.has_grad()) {
      analytic.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
    } else {
      analytic.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  zero_grads(wrt);

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  NoGradGuard no_grad;
  for (std::size_t b = 0; b < wrt.size(); ++b) {
    auto tensor = wrt[b].tensor;
    auto values = tensor.mutable_values();
    std::vector<std::size_t> probe(values.size());
    std::iota(probe.begin(), probe.end(), 0);
    if (options.max_entries_per_block > 0 && probe.size() > options.max_entries_per_block) {
      std::shuffle(probe.begin(), probe.end(), rng);
      probe.resize(options.max_entries_per_block);
      std::sort(probe.begin(), probe.end());
    }
    GradCheckBlock block{wrt[b].name, probe.size(), 0.0, 0.0};
    for (auto i : probe) {
      const double original = values[i];
      values[i] = original + options.step;
      const double plus = loss().item();
      values[i] = original - options.step;
      const double minus = loss().item();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double exact = analytic[b][i];
      const double abs_err = std::abs(exact - numeric);
      const double denom = std::max({std::abs(exact), std::abs(numeric), options.floor});
      block.max_abs_error = std::max(block.max_abs_error, abs_err);
      block.max_rel_error = std::max(block.max_rel_error, abs_err / denom);
    }
    report.blocks.push_back(block);
  }
  return report;
}

GradCheckReport gradient_check(const Module& module, const std::function<std::vector<Tensor>()>& input_sampler,
                               const GradCheckOptions& options) {
  if (options.training && module.spec().dropout_rate > 0.0) {
    GradCheckReport report;
    report.skipped = true;
    report.note = "non-deterministic: dropout active in training mode";
    return report;
  }
  const auto inputs = input_sampler();
  const Context ctx{};  // evaluation mode: dropout disabled
  Tensor projection;
  {
    NoGradGuard no_grad;
    const auto out = module.forward(inputs, ctx);
    std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> w(out.numel());
    for (auto& x : w) x = dist(rng);
    projection = Tensor::from(out.shape(), std::move(w));
  }
  return check_gradients(
      module.parameters(), [&] { return sum(mul(module.forward(inputs, ctx), projection)); }, options);
}

}  // namespace hac::nn

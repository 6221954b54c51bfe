#pragma once

#include <cstdint>
#include <vector>

#include "hac/nn/tensor.hpp"

namespace hac::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // L2 penalty folded into the gradient.
  double weight_decay = 0.0;
};

// Adam with bias-corrected moments. Parameters without a gradient are skipped
// (their moments are left untouched); gradients are cleared after each step.
class Adam {
 public:
  Adam(ParameterList params, AdamOptions options);

  // Throws std::logic_error when no parameter carries a gradient.
  void step();
  void zero_grad() const { zero_grads(params_); }

  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  std::uint64_t step_count() const { return step_count_; }
  const ParameterList& parameters() const { return params_; }
  const std::vector<double>& first_moment(std::size_t index) const { return m_[index]; }
  const std::vector<double>& second_moment(std::size_t index) const { return v_[index]; }

 private:
  ParameterList params_;
  AdamOptions options_;
  std::uint64_t step_count_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace hac::nn

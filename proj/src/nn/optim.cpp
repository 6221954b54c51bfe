#include "hac/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace hac::nn {

Adam::Adam(ParameterList params, AdamOptions options) : params_(std::move(params)), options_(options) {
  if (options_.learning_rate < 0.0) throw std::invalid_argument("learning rate must be non-negative");
  if (!(options_.beta1 >= 0.0 && options_.beta1 < 1.0) || !(options_.beta2 >= 0.0 && options_.beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  bool any = false;
  for (const auto& p : params_) any = any || p.tensor.has_grad();
  if (!any) throw std::logic_error("Adam::step called without any populated gradient");

  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double correction1 = 1.0 - std::pow(options_.beta1, t);
  const double correction2 = 1.0 - std::pow(options_.beta2, t);
  const double lr = options_.learning_rate;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto param = params_[i].tensor;
    if (!param.has_grad()) continue;
    auto values = param.mutable_values();
    auto grad = param.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad[j] + options_.weight_decay * values[j];
      m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g;
      v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
    param.zero_grad();
  }
}

}  // namespace hac::nn

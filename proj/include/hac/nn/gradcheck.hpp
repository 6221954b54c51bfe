#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hac/nn/module.hpp"
#include "hac/nn/tensor.hpp"

namespace hac::nn {

struct GradCheckOptions {
  double step = 1e-5;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor); the floor
  // keeps exactly-zero gradients (finite-difference noise ~1e-10) from dominating.
  double floor = 1e-4;
  // Caps the number of probed entries per block (sampled deterministically); 0 = all.
  std::size_t max_entries_per_block = 0;
  std::uint64_t seed = 0;
  // For module checks: whether the module would run in training mode.
  bool training = false;
};

struct GradCheckBlock {
  std::string name;
  std::size_t probed = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  // Set when the check could not run deterministically (e.g. active dropout).
  bool skipped = false;
  std::string note;

  double max_rel_error() const;
  bool passed(double tolerance) const { return !skipped && max_rel_error() <= tolerance; }
};

// Compares reverse-mode gradients of `loss` with respect to `wrt` against
// central finite differences. `loss` must rebuild its graph on every call.
GradCheckReport check_gradients(const ParameterList& wrt, const std::function<Tensor()>& loss,
                                const GradCheckOptions& options = {});

// Module-level check: loss = sum(forward(inputs) * fixed random weights).
GradCheckReport gradient_check(const Module& module, const std::function<std::vector<Tensor>()>& input_sampler,
                               const GradCheckOptions& options = {});

}  // namespace hac::nn

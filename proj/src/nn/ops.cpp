#include "hac/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>

namespace hac::nn {

namespace {

using Impl = detail::TensorImpl;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void require_finite(const std::vector<double>& values, const char* op) {
  if (!check_finite_enabled()) return;
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<const Tensor*> inputs,
                   std::function<void(Impl&)> backward_fn, const char* op) {
  require_finite(data, op);
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  if (grad_enabled()) {
    bool any = false;
    for (const auto* t : inputs) any = any || t->requires_grad();
    if (any) {
      impl->requires_grad = true;
      for (const auto* t : inputs) impl->parents.push_back(t->impl());
      impl->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(impl));
}

Impl* raw(const Tensor& t) { return t.impl().get(); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                     " differ");
  }
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

std::size_t last_dim(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw ShapeError(std::string(op) + ": scalar input");
  return x.shape().back();
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
  require_defined(x, op);
  const auto& xv = x.impl()->data;
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  Impl* px = raw(x);
  return make_result(
      x.shape(), std::move(out), {&x},
      [px, deriv](Impl& self) {
        if (!px->requires_grad) return;
        auto& gx = px->ensure_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * deriv(px->data[i], self.data[i]);
      },
      op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  Impl* pa = raw(a);
  Impl* pb = raw(b);
  return make_result(
      a.shape(), std::move(out), {&a, &b},
      [pa, pb](Impl& self) {
        for (Impl* p : {pa, pb}) {
          if (!p->requires_grad) continue;
          auto& g = p->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  Impl* pa = raw(a);
  Impl* pb = raw(b);
  return make_result(
      a.shape(), std::move(out), {&a, &b},
      [pa, pb](Impl& self) {
        if (pa->requires_grad) {
          auto& g = pa->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
          auto& g = pb->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  Impl* pa = raw(a);
  Impl* pb = raw(b);
  return make_result(
      a.shape(), std::move(out), {&a, &b},
      [pa, pb](Impl& self) {
        if (pa->requires_grad) {
          auto& g = pa->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->data[i];
        }
        if (pb->requires_grad) {
          auto& g = pb->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->data[i];
        }
      },
      "mul");
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "minimum");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.at(i), b.at(i));
  Impl* pa = raw(a);
  Impl* pb = raw(b);
  return make_result(
      a.shape(), std::move(out), {&a, &b},
      [pa, pb](Impl& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          // Ties route to the first argument.
          Impl* winner = pa->data[i] <= pb->data[i] ? pa : pb;
          if (winner->requires_grad) winner->ensure_grad()[i] += self.grad[i];
        }
      },
      "minimum");
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const auto n = last_dim(x, "add_bias");
  if (bias.rank() != 1 || bias.dim(0) != n) {
    throw ShapeError("add_bias: bias " + shape_string(bias.shape()) + " vs input " + shape_string(x.shape()));
  }
  std::vector<double> out(x.numel());
  const auto& xv = x.impl()->data;
  const auto& bv = bias.impl()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + bv[i % n];
  Impl* px = raw(x);
  Impl* pb = raw(bias);
  return make_result(
      x.shape(), std::move(out), {&x, &bias},
      [px, pb, n](Impl& self) {
        if (px->requires_grad) {
          auto& g = px->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
          auto& g = pb->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
        }
      },
      "add_bias");
}

Tensor scale_rows(const Tensor& x, const Tensor& row_weights) {
  if (x.rank() == 0 || row_weights.rank() != 1 || row_weights.dim(0) != x.dim(0)) {
    throw ShapeError("scale_rows: " + shape_string(x.shape()) + " by " + shape_string(row_weights.shape()));
  }
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.numel() / std::max<std::size_t>(rows, 1);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x.at(r * cols + c) * row_weights.at(r);
  Impl* px = raw(x);
  Impl* pw = raw(row_weights);
  return make_result(
      x.shape(), std::move(out), {&x, &row_weights},
      [px, pw, rows, cols](Impl& self) {
        if (px->requires_grad) {
          auto& g = px->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r * cols + c] * pw->data[r];
        }
        if (pw->requires_grad) {
          auto& g = pw->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) g[r] += self.grad[r * cols + c] * px->data[r * cols + c];
        }
      },
      "scale_rows");
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, "add_scalar", [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, "softplus",
      [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "bce_with_logits");
  return mean(sub(softplus(logits), mul(targets, logits)));
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto k = last_dim(a, "matmul");
  if (b.rank() != 2 || b.dim(0) != k) {
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const auto n = b.dim(1);
  const auto m = a.numel() / k;
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
  Shape shape = a.shape();
  shape.back() = n;
  Impl* pa = raw(a);
  Impl* pb = raw(b);
  return make_result(
      std::move(shape), std::move(out), {&a, &b},
      [pa, pb, m, k, n](Impl& self) {
        ConstMap g(self.grad.data(), m, n);
        if (pa->requires_grad) {
          MutMap(pa->ensure_grad().data(), m, k).noalias() += g * ConstMap(pb->data.data(), k, n).transpose();
        }
        if (pb->requires_grad) {
          MutMap(pb->ensure_grad().data(), k, n).noalias() += ConstMap(pa->data.data(), m, k).transpose() * g;
        }
      },
      "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const auto k = last_dim(a, "matmul_nt");
  if (b.rank() != 2 || b.dim(1) != k) {
    throw ShapeError("matmul_nt: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
  }
  const auto n = b.dim(0);
  const auto m = a.numel() / k;
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), n, k).transpose();
  Shape shape = a.shape();
  shape.back() = n;
  Impl* pa = raw(a);
  Impl* pb = raw(b);
  return make_result(
      std::move(shape), std::move(out), {&a, &b},
      [pa, pb, m, k, n](Impl& self) {
        ConstMap g(self.grad.data(), m, n);
        if (pa->requires_grad) {
          MutMap(pa->ensure_grad().data(), m, k).noalias() += g * ConstMap(pb->data.data(), n, k);
        }
        if (pb->requires_grad) {
          MutMap(pb->ensure_grad().data(), n, k).noalias() += g.transpose() * ConstMap(pa->data.data(), m, k);
        }
      },
      "matmul_nt");
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
    throw ShapeError("bmm: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const auto groups = a.dim(0);
  const auto m = a.dim(1);
  const auto k = a.dim(2);
  const auto n = transpose_b ? b.dim(1) : b.dim(2);
  if ((transpose_b ? b.dim(2) : b.dim(1)) != k) {
    throw ShapeError("bmm: inner dimensions of " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  std::vector<double> out(groups * m * n);
  for (std::size_t g = 0; g < groups; ++g) {
    ConstMap ag(a.values().data() + g * m * k, m, k);
    MutMap og(out.data() + g * m * n, m, n);
    if (transpose_b) {
      og.noalias() = ag * ConstMap(b.values().data() + g * n * k, n, k).transpose();
    } else {
      og.noalias() = ag * ConstMap(b.values().data() + g * k * n, k, n);
    }
  }
  Impl* pa = raw(a);
  Impl* pb = raw(b);
  return make_result(
      {groups, m, n}, std::move(out), {&a, &b},
      [pa, pb, groups, m, k, n, transpose_b](Impl& self) {
        for (std::size_t g = 0; g < groups; ++g) {
          ConstMap dg(self.grad.data() + g * m * n, m, n);
          if (transpose_b) {
            ConstMap bg(pb->data.data() + g * n * k, n, k);
            if (pa->requires_grad) MutMap(pa->ensure_grad().data() + g * m * k, m, k).noalias() += dg * bg;
            if (pb->requires_grad) {
              MutMap(pb->ensure_grad().data() + g * n * k, n, k).noalias() +=
                  dg.transpose() * ConstMap(pa->data.data() + g * m * k, m, k);
            }
          } else {
            ConstMap bg(pb->data.data() + g * k * n, k, n);
            if (pa->requires_grad) {
              MutMap(pa->ensure_grad().data() + g * m * k, m, k).noalias() += dg * bg.transpose();
            }
            if (pb->requires_grad) {
              MutMap(pb->ensure_grad().data() + g * k * n, k, n).noalias() +=
                  ConstMap(pa->data.data() + g * m * k, m, k).transpose() * dg;
            }
          }
        }
      },
      "bmm");
}

namespace {

// dx = y * (dy - sum(dy * y)) per row.
void softmax_backward(const Impl& self, Impl* px, std::size_t n) {
  if (!px->requires_grad) return;
  auto& gx = px->ensure_grad();
  const std::size_t rows = self.data.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* y = self.data.data() + r * n;
    const double* dy = self.grad.data() + r * n;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
    for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += y[j] * (dy[j] - dot);
  }
}

}  // namespace

Tensor softmax(const Tensor& x) {
  const auto n = last_dim(x, "softmax");
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += out[r * n + j] = std::exp(row[j] - mx);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] /= total;
  }
  Impl* px = raw(x);
  return make_result(
      x.shape(), std::move(out), {&x}, [px, n](Impl& self) { softmax_backward(self, px, n); }, "softmax");
}

Tensor log_softmax(const Tensor& x) {
  const auto n = last_dim(x, "log_softmax");
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(row[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = row[j] - lse;
  }
  Impl* px = raw(x);
  return make_result(
      x.shape(), std::move(out), {&x},
      [px, n, rows](Impl& self) {
        if (!px->requires_grad) return;
        auto& gx = px->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          double total = 0.0;
          for (std::size_t j = 0; j < n; ++j) total += self.grad[r * n + j];
          for (std::size_t j = 0; j < n; ++j) {
            gx[r * n + j] += self.grad[r * n + j] - std::exp(self.data[r * n + j]) * total;
          }
        }
      },
      "log_softmax");
}

Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> key_mask, std::size_t heads) {
  if (x.rank() != 3) throw ShapeError("masked_softmax expects [groups, queries, keys], got " + shape_string(x.shape()));
  const auto groups = x.dim(0);
  const auto queries = x.dim(1);
  const auto keys = x.dim(2);
  if (heads == 0 || groups % heads != 0 || key_mask.size() != (groups / heads) * keys) {
    throw ShapeError("masked_softmax: mask of " + std::to_string(key_mask.size()) + " entries for " +
                     shape_string(x.shape()) + " with " + std::to_string(heads) + " heads");
  }
  std::vector<double> out(x.numel(), 0.0);
  const auto xv = x.values();
  for (std::size_t g = 0; g < groups; ++g) {
    const std::uint8_t* mask = key_mask.data() + (g / heads) * keys;
    for (std::size_t q = 0; q < queries; ++q) {
      const std::size_t base = (g * queries + q) * keys;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < keys; ++j)
        if (mask[j]) mx = std::max(mx, xv[base + j]);
      if (!std::isfinite(mx)) continue;
      double total = 0.0;
      for (std::size_t j = 0; j < keys; ++j)
        if (mask[j]) total += out[base + j] = std::exp(xv[base + j] - mx);
      for (std::size_t j = 0; j < keys; ++j) out[base + j] /= total;
    }
  }
  Impl* px = raw(x);
  return make_result(
      x.shape(), std::move(out), {&x}, [px, keys](Impl& self) { softmax_backward(self, px, keys); },
      "masked_softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const auto n = last_dim(x, "layer_norm");
  const bool affine = gamma.defined();
  if (affine && (gamma.shape() != Shape{n} || !beta.defined() || beta.shape() != Shape{n})) {
    throw ShapeError("layer_norm: affine parameters must have shape [" + std::to_string(n) + "]");
  }
  const std::size_t rows = x.numel() / n;
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) xhat[r * n + j] = (row[j] - mu) * inv_std[r];
  }
  std::vector<double> out = xhat;
  if (affine) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xhat[i] * gamma.at(i % n) + beta.at(i % n);
  }
  Impl* px = raw(x);
  Impl* pg = affine ? raw(gamma) : nullptr;
  Impl* pb = affine ? raw(beta) : nullptr;
  return make_result(
      x.shape(), std::move(out), affine ? std::initializer_list<const Tensor*>{&x, &gamma, &beta}
                                        : std::initializer_list<const Tensor*>{&x},
      [px, pg, pb, n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Impl& self) {
        std::vector<double> dxhat(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* dy = self.grad.data() + r * n;
          const double* xh = xhat.data() + r * n;
          if (pg && pg->requires_grad) {
            auto& g = pg->ensure_grad();
            for (std::size_t j = 0; j < n; ++j) g[j] += dy[j] * xh[j];
          }
          if (pb && pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (std::size_t j = 0; j < n; ++j) g[j] += dy[j];
          }
          if (!px->requires_grad) continue;
          double mean_d = 0.0;
          double mean_dx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            dxhat[j] = pg ? dy[j] * pg->data[j] : dy[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xh[j];
          }
          mean_d /= static_cast<double>(n);
          mean_dx /= static_cast<double>(n);
          auto& gx = px->ensure_grad();
          for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += inv_std[r] * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
      },
      "layer_norm");
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> mask(x.numel());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = unif(rng) >= rate ? keep_scale : 0.0;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) * mask[i];
  Impl* px = raw(x);
  return make_result(
      x.shape(), std::move(out), {&x},
      [px, mask = std::move(mask)](Impl& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
      },
      "dropout");
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  Impl* px = raw(x);
  return make_result(
      {}, {total}, {&x},
      [px](Impl& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (auto& v : g) v += self.grad[0];
      },
      "sum");
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_last(const Tensor& x) {
  const auto n = last_dim(x, "sum_last");
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r] += x.at(r * n + j);
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  Impl* px = raw(x);
  return make_result(
      std::move(shape), std::move(out), {&x},
      [px, n](Impl& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i / n];
      },
      "sum_last");
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  const auto len = x.dim(axis);
  if (len == 0) throw ShapeError("mean_axis over empty axis");
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  std::vector<double> out(outer * inner, 0.0);
  const double w = 1.0 / static_cast<double>(len);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t a = 0; a < len; ++a)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += x.at((o * len + a) * inner + i);
  for (auto& v : out) v *= w;
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Impl* px = raw(x);
  return make_result(
      std::move(shape), std::move(out), {&x},
      [px, outer, len, inner, w](Impl& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t a = 0; a < len; ++a)
            for (std::size_t i = 0; i < inner; ++i) g[(o * len + a) * inner + i] += self.grad[o * inner + i] * w;
      },
      "mean_axis");
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  Impl* px = raw(x);
  return make_result(
      std::move(shape), std::move(out), {&x},
      [px](Impl& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      },
      "reshape");
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of no tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range");
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::size_t total = 0;
  std::vector<std::size_t> lengths;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw ShapeError("concat: " + shape_string(s) + " vs " + shape_string(first) + " on axis " +
                         std::to_string(axis));
      }
    }
    lengths.push_back(s[axis]);
    total += s[axis];
  }
  std::vector<double> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto src = parts[p].values();
    const std::size_t chunk = lengths[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.data() + o * chunk, chunk, out.data() + (o * total + offset) * inner);
    }
    offset += lengths[p];
  }
  Shape shape = first;
  shape[axis] = total;
  std::vector<Impl*> impls;
  for (const auto& p : parts) impls.push_back(raw(p));

  require_finite(out, "concat");
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(out);
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (grad_enabled() && any) {
    impl->requires_grad = true;
    for (const auto& p : parts) impl->parents.push_back(p.impl());
    impl->backward_fn = [impls, lengths, outer, inner, total](Impl& self) {
      std::size_t off = 0;
      for (std::size_t p = 0; p < impls.size(); ++p) {
        const std::size_t chunk = lengths[p] * inner;
        if (impls[p]->requires_grad) {
          auto& g = impls[p]->ensure_grad();
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = self.grad.data() + (o * total + off) * inner;
            for (std::size_t i = 0; i < chunk; ++i) g[o * chunk + i] += src[i];
          }
        }
        off += lengths[p];
      }
    };
  }
  return Tensor(std::move(impl));
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const auto len = x.dim(axis);
  if (start + length > len) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) + ") of axis length " +
                     std::to_string(len));
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  std::vector<double> out(outer * length * inner);
  const auto src = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(src.data() + (o * len + start) * inner, length * inner, out.data() + o * length * inner);
  }
  Shape shape = x.shape();
  shape[axis] = length;
  Impl* px = raw(x);
  return make_result(
      std::move(shape), std::move(out), {&x},
      [px, outer, len, start, length, inner](Impl& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = self.grad.data() + o * length * inner;
          double* dst = g.data() + (o * len + start) * inner;
          for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src[i];
        }
      },
      "slice");
}

Tensor index_select(const Tensor& table, std::span<const std::int64_t> ids) {
  if (table.rank() != 2) throw ShapeError("index_select expects a 2-D table, got " + shape_string(table.shape()));
  const auto rows = table.dim(0);
  const auto d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  const auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw std::out_of_range("index " + std::to_string(ids[i]) + " outside table of " + std::to_string(rows) +
                              " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  Impl* pt = raw(table);
  std::vector<std::int64_t> idx(ids.begin(), ids.end());
  return make_result(
      {ids.size(), d}, std::move(out), {&table},
      [pt, d, idx = std::move(idx)](Impl& self) {
        if (!pt->requires_grad) return;
        auto& g = pt->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i) {
          double* dst = g.data() + static_cast<std::size_t>(idx[i]) * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += self.grad[i * d + j];
        }
      },
      "index_select");
}

Tensor gather_cols(const Tensor& x, std::span<const std::int64_t> index, std::size_t k) {
  if (x.rank() != 2 || index.size() != x.dim(0) * k) {
    throw ShapeError("gather_cols: " + std::to_string(index.size()) + " indices for " + shape_string(x.shape()) +
                     " with k=" + std::to_string(k));
  }
  const auto b = x.dim(0);
  const auto n = x.dim(1);
  std::vector<double> out(b * k);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      const auto col = index[r * k + j];
      if (col < 0 || static_cast<std::size_t>(col) >= n) {
        throw std::out_of_range("gather_cols index " + std::to_string(col) + " outside " + std::to_string(n));
      }
      out[r * k + j] = x.at(r * n + static_cast<std::size_t>(col));
    }
  }
  Impl* px = raw(x);
  std::vector<std::int64_t> idx(index.begin(), index.end());
  return make_result(
      {b, k}, std::move(out), {&x},
      [px, b, n, k, idx = std::move(idx)](Impl& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t r = 0; r < b; ++r)
          for (std::size_t j = 0; j < k; ++j) g[r * n + static_cast<std::size_t>(idx[r * k + j])] += self.grad[r * k + j];
      },
      "gather_cols");
}

namespace {

// Moves between [b, l, h, dh] and [b, h, l, dh] layouts.
void permute_heads(const double* src, double* dst, std::size_t b, std::size_t l, std::size_t h, std::size_t dh,
                   bool to_heads, bool accumulate) {
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t li = 0; li < l; ++li)
      for (std::size_t hi = 0; hi < h; ++hi) {
        const std::size_t seq_off = ((bi * l + li) * h + hi) * dh;
        const std::size_t head_off = ((bi * h + hi) * l + li) * dh;
        const double* s = src + (to_heads ? seq_off : head_off);
        double* d = dst + (to_heads ? head_off : seq_off);
        for (std::size_t j = 0; j < dh; ++j) d[j] = accumulate ? d[j] + s[j] : s[j];
      }
}

}  // namespace

Tensor split_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(2) % heads != 0) {
    throw ShapeError("split_heads: " + shape_string(x.shape()) + " into " + std::to_string(heads) + " heads");
  }
  const auto b = x.dim(0);
  const auto l = x.dim(1);
  const auto dh = x.dim(2) / heads;
  std::vector<double> out(x.numel());
  permute_heads(x.values().data(), out.data(), b, l, heads, dh, true, false);
  Impl* px = raw(x);
  return make_result(
      {b * heads, l, dh}, std::move(out), {&x},
      [px, b, l, heads, dh](Impl& self) {
        if (!px->requires_grad) return;
        permute_heads(self.grad.data(), px->ensure_grad().data(), b, l, heads, dh, false, true);
      },
      "split_heads");
}

Tensor merge_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(0) % heads != 0) {
    throw ShapeError("merge_heads: " + shape_string(x.shape()) + " from " + std::to_string(heads) + " heads");
  }
  const auto b = x.dim(0) / heads;
  const auto l = x.dim(1);
  const auto dh = x.dim(2);
  std::vector<double> out(x.numel());
  permute_heads(x.values().data(), out.data(), b, l, heads, dh, false, false);
  Impl* px = raw(x);
  return make_result(
      {b, l, heads * dh}, std::move(out), {&x},
      [px, b, l, heads, dh](Impl& self) {
        if (!px->requires_grad) return;
        permute_heads(self.grad.data(), px->ensure_grad().data(), b, l, heads, dh, true, true);
      },
      "merge_heads");
}

}  // namespace hac::nn

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hac/nn/tensor.hpp"

// Differentiable operations. Every op records a backward closure when grad
// mode is on and at least one input requires a gradient.
namespace hac::nn {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);

// x[..., n] + bias[n]
Tensor add_bias(const Tensor& x, const Tensor& bias);
// x[r, c] * w[r] for every column c.
Tensor scale_rows(const Tensor& x, const Tensor& row_weights);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor neg(const Tensor& x);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
// log(1 + exp(x)), evaluated without overflow.
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
// Gradient passes only where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi);

// Mean of softplus(x) - y * x, the cross-entropy of sigmoid(x) against labels y.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

// a[..., k] x b[k, n] -> [..., n]
Tensor matmul(const Tensor& a, const Tensor& b);
// a[..., k] x b[n, k]^T -> [..., n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// Batched: a[g, m, k] x b[g, k, n] -> [g, m, n]; with transpose_b, b is [g, n, k].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

// Along the last axis; max-subtracted.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
// x[g, q, k] softmax over k, where key j of group g is kept iff
// key_mask[(g / heads) * k + j] != 0. Fully masked rows give all zeros.
Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> key_mask, std::size_t heads);

// Normalizes the last axis; gamma/beta may be undefined (no affine).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Reduces the last axis.
Tensor sum_last(const Tensor& x);
// Mean over `axis`, which is removed from the shape.
Tensor mean_axis(const Tensor& x, std::size_t axis);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);

// Rows of table[n, d] -> [ids.size(), d].
Tensor index_select(const Tensor& table, std::span<const std::int64_t> ids);
// x[b, n] -> [b, k] picking x[b, index[b * k + j]].
Tensor gather_cols(const Tensor& x, std::span<const std::int64_t> index, std::size_t k);

// [b, l, h*dh] <-> [b*h, l, dh]
Tensor split_heads(const Tensor& x, std::size_t heads);
Tensor merge_heads(const Tensor& x, std::size_t heads);

}  // namespace hac::nn

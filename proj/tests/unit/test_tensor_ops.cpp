#include <cmath>
#include <random>

#include "doctest.h"
#include "hac/nn/gradcheck.hpp"
#include "hac/nn/ops.hpp"
#include "test_support.hpp"

using namespace hac::nn;
using hac::testing::random_tensor;

TEST_CASE("softmax of equal logits is uniform") {
  auto y = softmax(Tensor::from({2}, {0.0, 0.0}));
  CHECK(y.at(0) == 0.5);
  CHECK(y.at(1) == 0.5);
}

TEST_CASE("softmax rows are non-negative and sum to one") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto x = random_tensor({7, 13}, seed, 10.0);
    auto y = softmax(x);
    for (std::size_t r = 0; r < 7; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < 13; ++j) {
        CHECK(y.at(r * 13 + j) >= 0.0);
        total += y.at(r * 13 + j);
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("softmax survives very large logits") {
  auto y = softmax(Tensor::from({3}, {1000.0, 1000.0, -1000.0}));
  CHECK(y.at(0) == doctest::Approx(0.5));
  CHECK(y.at(2) == 0.0);
}

TEST_CASE("layer norm of a constant row is zero before the affine map") {
  auto y = layer_norm(Tensor::full({2, 4}, 3.25), Tensor(), Tensor());
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("masked softmax ignores masked keys and zeroes fully masked rows") {
  auto x = Tensor::from({2, 1, 3}, {1.0, 2.0, 3.0, 1.0, 2.0, 3.0});
  KeyMask mask = {1, 0, 1, 0, 0, 0};
  auto y = masked_softmax(x, mask, 1);
  CHECK(y.at(1) == 0.0);
  CHECK(y.at(0) + y.at(2) == doctest::Approx(1.0));
  for (std::size_t i = 3; i < 6; ++i) CHECK(y.at(i) == 0.0);
}

TEST_CASE("x*x has derivative 2x") {
  auto x = Tensor::scalar(3.0, true);
  mul(x, x).backward();
  CHECK(x.grad()[0] == 6.0);
}

TEST_CASE("binary cross-entropy through a sigmoid at logit 0, label 1") {
  auto logit = Tensor::scalar(0.0, true);
  auto p = sigmoid(logit);
  // -[y log p + (1 - y) log(1 - p)] with y = 1
  neg(log(p)).backward();
  CHECK(logit.grad()[0] == doctest::Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("cross-entropy with logits matches the sigmoid form and stays finite") {
  auto x = Tensor::from({4}, {-3.0, 0.0, 2.0, 800.0});
  auto y = Tensor::from({4}, {0.0, 1.0, 1.0, 0.0});
  // Closed form per entry: -[y log s + (1 - y) log(1 - s)], s = sigmoid(x).
  double expected = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-x.at(i)));
    expected += -(y.at(i) * std::log(s) + (1.0 - y.at(i)) * std::log(1.0 - s));
  }
  expected += 800.0;  // softplus(800) - 0
  CHECK(bce_with_logits(x, y).item() == doctest::Approx(expected / 4.0).epsilon(1e-14));
}

TEST_CASE("leaf gradients accumulate across backward calls") {
  auto x = Tensor::scalar(2.0, true);
  auto y = mul(x, x);
  y.backward();
  y.backward();
  CHECK(x.grad()[0] == 8.0);
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("backward rejects non-scalar outputs") {
  auto x = Tensor::from({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(square(x).backward(), ShapeError);
}

TEST_CASE("no-grad guard suppresses graph recording") {
  auto x = Tensor::scalar(1.0, true);
  NoGradGuard guard;
  CHECK_FALSE(square(x).requires_grad());
}

TEST_CASE("non-finite results are reported") {
  CHECK_THROWS_AS(log(Tensor::scalar(-1.0)), NumericError);
  CHECK_THROWS_AS(log(Tensor::scalar(0.0)), NumericError);
}

TEST_CASE("shape errors are raised on mismatched operands") {
  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  const std::vector<std::int64_t> bad = {5};
  CHECK_THROWS_AS(index_select(Tensor::zeros({3, 2}), bad), std::out_of_range);
}

TEST_CASE("split and merge heads are inverse permutations") {
  auto x = random_tensor({2, 3, 8}, 1);
  auto back = merge_heads(split_heads(x, 4), 4);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back.at(i) == x.at(i));
}

TEST_CASE("op gradients agree with central differences") {
  auto a = random_tensor({3, 4}, 11, 1.0, true);
  auto b = random_tensor({4, 5}, 12, 1.0, true);
  auto c = random_tensor({3, 5}, 13, 1.0, true);
  auto bias = random_tensor({5}, 14, 1.0, true);
  auto g = random_tensor({5}, 15, 1.0, true);
  auto w = random_tensor({3}, 16, 1.0, true);
  ParameterList wrt = {{"a", a}, {"b", b}, {"c", c}, {"bias", bias}, {"g", g}, {"w", w}};

  SUBCASE("linear algebra and pointwise") {
    auto report = check_gradients(wrt, [&] {
      auto h = add_bias(matmul(a, b), bias);
      auto t = add(mul(tanh(h), sigmoid(c)), scale(exp(scale(c, 0.1)), 0.5));
      return sum(scale_rows(minimum(t, square(c)), w));
    });
    CHECK(report.max_rel_error() <= 1e-6);
  }
  SUBCASE("normalization and softmax") {
    auto report = check_gradients(wrt, [&] {
      auto h = layer_norm(matmul(a, b), g, bias);
      auto p = softmax(h);
      auto lp = log_softmax(add(h, c));
      return add(add(sum(mul(p, c)), mean(mul(lp, p))), add(sum(softplus(h)), bce_with_logits(h, sigmoid(c))));
    });
    CHECK(report.max_rel_error() <= 1e-6);
  }
  SUBCASE("indexing and reshaping") {
    const std::vector<std::int64_t> ids = {2, 0, 2, 1};
    const std::vector<std::int64_t> cols = {4, 0, 1, 1, 3, 2};
    auto report = check_gradients(wrt, [&] {
      auto rows = index_select(a, ids);                        // [4, 4]
      auto joined = concat({rows, slice(reshape(b, {4, 5}), 1, 1, 3)}, 1);  // [4, 7]
      auto picked = gather_cols(c, cols, 2);                   // [3, 2]
      auto heads = merge_heads(split_heads(reshape(joined, {1, 4, 7 * 1}), 1), 1);
      return add(sum(square(mean_axis(heads, 1))), sum(mul(sum_last(picked), w)));
    });
    CHECK(report.max_rel_error() <= 1e-6);
  }
  SUBCASE("batched matmul with masking") {
    auto k = random_tensor({1, 5, 4}, 17, 1.0, true);
    ParameterList more = wrt;
    more.push_back({"k", k});
    KeyMask mask = {1, 1, 0, 1, 1};
    auto report = check_gradients(more, [&] {
      auto scores = bmm(reshape(a, {1, 3, 4}), k, true);
      auto att = masked_softmax(scores, mask, 1);
      return sum(mul(bmm(att, reshape(c, {1, 5, 3}), false), reshape(square(slice(a, 1, 0, 3)), {1, 3, 3})));
    });
    CHECK(report.max_rel_error() <= 1e-6);
  }
}

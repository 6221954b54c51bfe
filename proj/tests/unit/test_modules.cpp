#include "doctest.h"
#include "hac/nn/gradcheck.hpp"
#include "hac/nn/module.hpp"
#include "test_support.hpp"

using namespace hac::nn;
using hac::testing::find_param;
using hac::testing::random_tensor;
using hac::testing::set_values;
using hac::testing::snapshot;

TEST_CASE("parameter counts are a function of the spec") {
  CHECK(build_module(ModuleSpec::linear(4, 2), 0)->parameter_count() == 10);
  // 283-item catalog with 32-dim item kernels.
  CHECK(build_module(ModuleSpec::embedding(283, 32), 0)->parameter_count() == 9056);
  CHECK(build_module(ModuleSpec::mlp({3, 5, 1}), 0)->parameter_count() == 3 * 5 + 5 + 5 + 1);
  auto t1 = build_module(ModuleSpec::transformer_encoder(8, 8, 2, 4, 0.1), 1);
  auto t2 = build_module(ModuleSpec::transformer_encoder(8, 8, 2, 4, 0.1), 2);
  CHECK(t1->parameter_count() == t2->parameter_count());
}

TEST_CASE("same spec and seed give bit-identical parameters") {
  const auto spec = ModuleSpec::transformer_encoder(8, 16, 2, 2, 0.1);
  auto a = build_module(spec, 42);
  auto b = build_module(spec, 42);
  auto c = build_module(spec, 43);
  CHECK(snapshot(a->parameters()) == snapshot(b->parameters()));
  CHECK(snapshot(a->parameters()) != snapshot(c->parameters()));
}

TEST_CASE("malformed specs are rejected") {
  CHECK_THROWS_AS(build_module(ModuleSpec::transformer_encoder(10, 8, 2, 4, 0.1), 0), std::invalid_argument);
  CHECK_THROWS_AS(build_module(ModuleSpec::transformer_encoder(8, 8, 2, 4, 1.0), 0), std::invalid_argument);
  CHECK_THROWS_AS(build_module(ModuleSpec::attention_pool(6, 4), 0), std::invalid_argument);
  CHECK_THROWS_AS(build_module(ModuleSpec::mlp({4}), 0), std::invalid_argument);
  CHECK_THROWS_AS(build_module(ModuleSpec::linear(0, 3), 0), std::invalid_argument);
}

TEST_CASE("spec JSON round trip") {
  const auto spec = ModuleSpec::transformer_encoder(32, 32, 2, 4, 0.1);
  CHECK(ModuleSpec::from_json(spec.to_json()) == spec);
}

TEST_CASE("forward output shapes follow the spec") {
  auto enc = build_module(ModuleSpec::transformer_encoder(8, 8, 2, 2, 0.0), 3);
  const std::vector<Tensor> in = {random_tensor({3, 5, 8}, 1)};
  CHECK(enc->forward(in, {}).shape() == Shape{3, 5, 8});
  auto emb = build_module(ModuleSpec::embedding(10, 4), 3);
  const std::vector<Tensor> ids = {Tensor::from({2, 3}, {0, 1, 2, 3, 4, 9})};
  CHECK(emb->forward(ids, {}).shape() == Shape{2, 3, 4});
  const std::vector<Tensor> wrong = {random_tensor({3, 5, 7}, 1)};
  CHECK_THROWS_AS(enc->forward(wrong, {}), ShapeError);
}

TEST_CASE("single-token attention reduces to the value path followed by the output projection") {
  // Hand instance, d = 2, one head, x = [1, 2]:
  //   x Wv + bv = [1*1 + 2*3, 1*2 + 2*4] + [0.5, -0.5] = [7.5, 9.5]
  //   (.) Wo + bo = [9.5, 7.5] + [1, 1] = [10.5, 8.5]
  auto pool = build_module(ModuleSpec::attention_pool(2, 1), 0);
  const auto& params = pool->parameters();
  set_values(find_param(params, "attn.v.weight"), {1, 2, 3, 4});
  set_values(find_param(params, "attn.v.bias"), {0.5, -0.5});
  set_values(find_param(params, "attn.o.weight"), {0, 1, 1, 0});
  set_values(find_param(params, "attn.o.bias"), {1, 1});
  auto x = Tensor::from({1, 2}, {1.0, 2.0});
  const std::vector<Tensor> in = {x, reshape(x, {1, 1, 2})};
  auto y = pool->forward(in, {});
  CHECK(y.at(0) == doctest::Approx(10.5).epsilon(1e-14));
  CHECK(y.at(1) == doctest::Approx(8.5).epsilon(1e-14));
}

TEST_CASE("padding keys do not influence attention") {
  auto enc = build_module(ModuleSpec::transformer_encoder(4, 4, 1, 2, 0.0), 5);
  auto x = random_tensor({1, 3, 4}, 8);
  auto x2 = Tensor::from({1, 3, 4}, std::vector<double>(x.values().begin(), x.values().end()));
  x2.mutable_values()[0] = 100.0;  // position 0 is padding
  const std::vector<Tensor> a = {x, Tensor::from({1, 3}, {0, 1, 1})};
  const std::vector<Tensor> b = {x2, Tensor::from({1, 3}, {0, 1, 1})};
  auto ya = enc->forward(a, {});
  auto yb = enc->forward(b, {});
  for (std::size_t i = 4; i < 12; ++i) CHECK(ya.at(i) == doctest::Approx(yb.at(i)).epsilon(1e-12));
}

TEST_CASE("dropout is inverted at train time and off at evaluation") {
  auto enc = build_module(ModuleSpec::transformer_encoder(4, 4, 1, 1, 0.5), 5);
  const std::vector<Tensor> in = {random_tensor({2, 3, 4}, 9)};
  std::mt19937_64 rng(1);
  auto eval1 = enc->forward(in, {});
  auto eval2 = enc->forward(in, {});
  CHECK(snapshot({{"", eval1}}) == snapshot({{"", eval2}}));
  auto train = enc->forward(in, {true, &rng});
  CHECK(snapshot({{"", train}}) != snapshot({{"", eval1}}));
  CHECK_THROWS_AS(enc->forward(in, {true, nullptr}), std::invalid_argument);
}

TEST_CASE("gradient check: linear layer") {
  auto lin = build_module(ModuleSpec::linear(5, 3), 7);
  auto report = gradient_check(*lin, [] { return std::vector<Tensor>{random_tensor({4, 5}, 3)}; });
  CHECK(report.blocks.size() == 2);
  CHECK(report.max_rel_error() <= 1e-6);
}

TEST_CASE("gradient check: two-layer MLP") {
  auto mlp = build_module(ModuleSpec::mlp({6, 8, 3}, Activation::kTanh), 7);
  auto report = gradient_check(*mlp, [] { return std::vector<Tensor>{random_tensor({5, 6}, 4)}; });
  CHECK(report.max_rel_error() <= 1e-4);
  auto relu_mlp = build_module(ModuleSpec::mlp({6, 8, 3}), 8);
  auto relu_report = gradient_check(*relu_mlp, [] { return std::vector<Tensor>{random_tensor({5, 6}, 4)}; });
  CHECK(relu_report.max_rel_error() <= 1e-4);
}

TEST_CASE("gradient check: transformer block with dropout disabled") {
  auto enc = build_module(ModuleSpec::transformer_encoder(8, 8, 2, 4, 0.1), 11);
  auto report = gradient_check(*enc, [] {
    return std::vector<Tensor>{random_tensor({2, 4, 8}, 5), Tensor::from({2, 4}, {1, 1, 1, 1, 0, 1, 1, 1})};
  });
  CHECK_FALSE(report.skipped);
  CHECK(report.max_rel_error() <= 1e-4);
}

TEST_CASE("gradient check: attention pool") {
  auto pool = build_module(ModuleSpec::attention_pool(4, 2), 12);
  auto report = gradient_check(
      *pool, [] { return std::vector<Tensor>{random_tensor({3, 4}, 6), random_tensor({3, 5, 4}, 7)}; });
  CHECK(report.max_rel_error() <= 1e-4);
}

TEST_CASE("gradient check is skipped with dropout active") {
  auto enc = build_module(ModuleSpec::transformer_encoder(4, 4, 1, 1, 0.1), 1);
  GradCheckOptions opts;
  opts.training = true;
  auto report = gradient_check(*enc, [] { return std::vector<Tensor>{random_tensor({1, 2, 4}, 5)}; }, opts);
  CHECK(report.skipped);
  CHECK_FALSE(report.passed(1.0));
  CHECK(report.note.find("non-deterministic") != std::string::npos);
}

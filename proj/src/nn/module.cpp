#include "hac/nn/module.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hac::nn {

namespace {

Tensor xavier_uniform(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(in * out);
  for (auto& x : v) x = dist(rng);
  return Tensor::from({in, out}, std::move(v), true);
}

Tensor normal_table(std::size_t rows, std::size_t dim, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(rows * dim);
  for (auto& x : v) x = dist(rng);
  return Tensor::from({rows, dim}, std::move(v), true);
}

void require_inputs(std::span<const Tensor> inputs, std::size_t min, std::size_t max, const char* who) {
  if (inputs.size() < min || inputs.size() > max) {
    throw std::invalid_argument(std::string(who) + ": unexpected number of inputs (" +
                                std::to_string(inputs.size()) + ")");
  }
}

}  // namespace

std::string to_string(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::kEmbedding: return "embedding";
    case ModuleKind::kLinear: return "linear";
    case ModuleKind::kMlp: return "mlp";
    case ModuleKind::kTransformerEncoder: return "transformer-encoder";
    case ModuleKind::kAttentionPool: return "attention-pool";
  }
  return "unknown";
}

std::string to_string(Activation activation) {
  switch (activation) {
    case Activation::kNone: return "none";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "unknown";
}

ModuleKind module_kind_from_string(const std::string& name) {
  for (auto k : {ModuleKind::kEmbedding, ModuleKind::kLinear, ModuleKind::kMlp, ModuleKind::kTransformerEncoder,
                 ModuleKind::kAttentionPool}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown module kind: " + name);
}

Activation activation_from_string(const std::string& name) {
  for (auto a : {Activation::kNone, Activation::kRelu, Activation::kTanh, Activation::kSigmoid}) {
    if (to_string(a) == name) return a;
  }
  throw std::invalid_argument("unknown activation: " + name);
}

ModuleSpec ModuleSpec::linear(std::size_t in, std::size_t out, bool bias) {
  ModuleSpec s;
  s.kind = ModuleKind::kLinear;
  s.dims = {in, out};
  s.activation = Activation::kNone;
  s.bias = bias;
  return s;
}

ModuleSpec ModuleSpec::embedding(std::size_t rows, std::size_t dim, double init_std) {
  ModuleSpec s;
  s.kind = ModuleKind::kEmbedding;
  s.dims = {rows, dim};
  s.activation = Activation::kNone;
  s.bias = false;
  s.init_std = init_std;
  return s;
}

ModuleSpec ModuleSpec::mlp(std::vector<std::size_t> dims, Activation activation) {
  ModuleSpec s;
  s.kind = ModuleKind::kMlp;
  s.dims = std::move(dims);
  s.activation = activation;
  return s;
}

ModuleSpec ModuleSpec::transformer_encoder(std::size_t model_dim, std::size_t ffn_dim, std::size_t layers,
                                           std::size_t heads, double dropout) {
  ModuleSpec s;
  s.kind = ModuleKind::kTransformerEncoder;
  s.dims = {model_dim, ffn_dim};
  s.activation = Activation::kRelu;
  s.layer_count = layers;
  s.head_count = heads;
  s.dropout_rate = dropout;
  return s;
}

ModuleSpec ModuleSpec::attention_pool(std::size_t model_dim, std::size_t heads) {
  ModuleSpec s;
  s.kind = ModuleKind::kAttentionPool;
  s.dims = {model_dim};
  s.activation = Activation::kNone;
  s.head_count = heads;
  return s;
}

void ModuleSpec::validate() const {
  auto fail = [this](const std::string& why) {
    throw std::invalid_argument("invalid " + to_string(kind) + " spec: " + why);
  };
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
  for (auto d : dims)
    if (d == 0) fail("zero dimension");
  switch (kind) {
    case ModuleKind::kEmbedding:
    case ModuleKind::kLinear:
      if (dims.size() != 2) fail("expects exactly two dims");
      break;
    case ModuleKind::kMlp:
      if (dims.size() < 2) fail("expects at least input and output dims");
      break;
    case ModuleKind::kTransformerEncoder:
      if (dims.size() != 2) fail("expects {model_dim, ffn_dim}");
      if (layer_count == 0) fail("needs at least one layer");
      if (head_count == 0 || dims[0] % head_count != 0) fail("head_count must divide model_dim");
      break;
    case ModuleKind::kAttentionPool:
      if (dims.size() != 1) fail("expects {model_dim}");
      if (head_count == 0 || dims[0] % head_count != 0) fail("head_count must divide model_dim");
      break;
  }
  if (kind == ModuleKind::kEmbedding && !(init_std > 0.0)) fail("init_std must be positive");
}

std::string ModuleSpec::fingerprint() const { return to_json().dump(); }

nlohmann::json ModuleSpec::to_json() const {
  return {{"kind", to_string(kind)},       {"dims", dims},
          {"activation", to_string(activation)}, {"dropout_rate", dropout_rate},
          {"layer_count", layer_count},    {"head_count", head_count},
          {"bias", bias},                  {"init_std", init_std}};
}

ModuleSpec ModuleSpec::from_json(const nlohmann::json& j) {
  ModuleSpec s;
  s.kind = module_kind_from_string(j.at("kind").get<std::string>());
  s.dims = j.at("dims").get<std::vector<std::size_t>>();
  s.activation = activation_from_string(j.value("activation", std::string("relu")));
  s.dropout_rate = j.value("dropout_rate", 0.0);
  s.layer_count = j.value("layer_count", std::size_t{1});
  s.head_count = j.value("head_count", std::size_t{1});
  s.bias = j.value("bias", true);
  s.init_std = j.value("init_std", 0.01);
  return s;
}

Tensor Module::add_parameter(const std::string& name, Tensor value) {
  value.set_requires_grad(true);
  params_.push_back({name, value});
  return value;
}

void Module::add_child(const std::string& prefix, const Module& child) {
  for (const auto& p : child.parameters()) params_.push_back({prefix + "." + p.name, p.tensor});
}

Tensor apply_activation(const Tensor& x, Activation activation) {
  switch (activation) {
    case Activation::kNone: return x;
    case Activation::kRelu: return relu(x);
    case Activation::kTanh: return tanh(x);
    case Activation::kSigmoid: return sigmoid(x);
  }
  return x;
}

KeyMask mask_from_tensor(const Tensor& mask) {
  KeyMask out(mask.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask.at(i) != 0.0 ? 1 : 0;
  return out;
}

Linear::Linear(const ModuleSpec& spec, std::mt19937_64& rng) : Module(spec) {
  spec.validate();
  weight_ = add_parameter("weight", xavier_uniform(spec.dims[0], spec.dims[1], rng));
  if (spec.bias) bias_ = add_parameter("bias", Tensor::zeros({spec.dims[1]}));
}

Tensor Linear::operator()(const Tensor& x) const {
  if (x.rank() == 0 || x.shape().back() != spec().dims[0]) {
    throw ShapeError("linear expects last dim " + std::to_string(spec().dims[0]) + ", got " +
                     shape_string(x.shape()));
  }
  auto y = matmul(x, weight_);
  return bias_.defined() ? add_bias(y, bias_) : y;
}

Tensor Linear::forward(std::span<const Tensor> inputs, const Context&) const {
  require_inputs(inputs, 1, 1, "linear");
  return (*this)(inputs[0]);
}

Embedding::Embedding(const ModuleSpec& spec, std::mt19937_64& rng) : Module(spec) {
  spec.validate();
  table_ = add_parameter("table", normal_table(spec.dims[0], spec.dims[1], spec.init_std, rng));
}

Tensor Embedding::lookup(std::span<const std::int64_t> ids) const { return index_select(table_, ids); }

Tensor Embedding::forward(std::span<const Tensor> inputs, const Context&) const {
  require_inputs(inputs, 1, 1, "embedding");
  std::vector<std::int64_t> ids(inputs[0].numel());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(std::llround(inputs[0].at(i)));
  Shape shape = inputs[0].shape();
  shape.push_back(dim());
  return reshape(lookup(ids), shape);
}

Mlp::Mlp(const ModuleSpec& spec, std::mt19937_64& rng) : Module(spec) {
  spec.validate();
  for (std::size_t i = 0; i + 1 < spec.dims.size(); ++i) {
    layers_.push_back(std::make_unique<Linear>(ModuleSpec::linear(spec.dims[i], spec.dims[i + 1], spec.bias), rng));
    add_child("layer" + std::to_string(i), *layers_.back());
  }
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = (*layers_[i])(h);
    if (i + 1 < layers_.size()) h = apply_activation(h, spec().activation);
  }
  return h;
}

Tensor Mlp::forward(std::span<const Tensor> inputs, const Context&) const {
  require_inputs(inputs, 1, 1, "mlp");
  return (*this)(inputs[0]);
}

LayerNorm::LayerNorm(std::size_t dim)
    : gamma_(Tensor::full({dim}, 1.0, true)), beta_(Tensor::zeros({dim}, true)) {}

MultiHeadAttention::MultiHeadAttention(std::size_t model_dim, std::size_t heads, std::mt19937_64& rng)
    : heads_(heads) {
  if (heads == 0 || model_dim % heads != 0) throw std::invalid_argument("head_count must divide model_dim");
  const auto spec = ModuleSpec::linear(model_dim, model_dim);
  wq_ = std::make_unique<Linear>(spec, rng);
  wk_ = std::make_unique<Linear>(spec, rng);
  wv_ = std::make_unique<Linear>(spec, rng);
  wo_ = std::make_unique<Linear>(spec, rng);
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& memory, const KeyMask& mask) const {
  if (query.rank() != 3 || memory.rank() != 3 || query.dim(0) != memory.dim(0)) {
    throw ShapeError("attention expects [b, l, d] inputs, got " + shape_string(query.shape()) + " and " +
                     shape_string(memory.shape()));
  }
  const auto batch = query.dim(0);
  const auto keys = memory.dim(1);
  const auto head_dim = query.dim(2) / heads_;
  auto q = split_heads((*wq_)(query), heads_);
  auto k = split_heads((*wk_)(memory), heads_);
  auto v = split_heads((*wv_)(memory), heads_);
  auto scores = scale(bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  Tensor weights;
  if (mask.empty()) {
    weights = softmax(scores);
  } else {
    if (mask.size() != batch * keys) throw ShapeError("attention mask size does not match [batch, keys]");
    weights = masked_softmax(scores, mask, heads_);
  }
  return (*wo_)(merge_heads(bmm(weights, v), heads_));
}

void MultiHeadAttention::collect(const std::string& prefix, ParameterList& out) const {
  const std::pair<const char*, const Linear*> parts[] = {{"q", wq_.get()}, {"k", wk_.get()}, {"v", wv_.get()},
                                                          {"o", wo_.get()}};
  for (const auto& [name, lin] : parts)
    for (const auto& p : lin->parameters()) out.push_back({prefix + "." + name + "." + p.name, p.tensor});
}

TransformerEncoder::TransformerEncoder(const ModuleSpec& spec, std::mt19937_64& rng)
    : Module(spec), final_norm_(spec.dims[0]) {
  spec.validate();
  const auto d = spec.dims[0];
  const auto ffn = spec.dims[1];
  ParameterList params;
  for (std::size_t i = 0; i < spec.layer_count; ++i) {
    layers_.push_back(Layer{LayerNorm(d), MultiHeadAttention(d, spec.head_count, rng), LayerNorm(d),
                            std::make_unique<Linear>(ModuleSpec::linear(d, ffn), rng),
                            std::make_unique<Linear>(ModuleSpec::linear(ffn, d), rng)});
    const auto& layer = layers_.back();
    const auto prefix = "layer" + std::to_string(i);
    add_parameter(prefix + ".norm1.gamma", layer.norm1.gamma());
    add_parameter(prefix + ".norm1.beta", layer.norm1.beta());
    ParameterList attn;
    layer.attention.collect(prefix + ".attn", attn);
    for (auto& p : attn) add_parameter(p.name, p.tensor);
    add_parameter(prefix + ".norm2.gamma", layer.norm2.gamma());
    add_parameter(prefix + ".norm2.beta", layer.norm2.beta());
    add_child(prefix + ".ffn_in", *layer.ffn_in);
    add_child(prefix + ".ffn_out", *layer.ffn_out);
  }
  add_parameter("final_norm.gamma", final_norm_.gamma());
  add_parameter("final_norm.beta", final_norm_.beta());
}

Tensor TransformerEncoder::encode(const Tensor& x, const KeyMask& mask, const Context& ctx) const {
  if (x.rank() != 3 || x.dim(2) != spec().dims[0]) {
    throw ShapeError("transformer expects [b, l, " + std::to_string(spec().dims[0]) + "], got " +
                     shape_string(x.shape()));
  }
  const double rate = ctx.training ? spec().dropout_rate : 0.0;
  if (rate > 0.0 && ctx.rng == nullptr) throw std::invalid_argument("training with dropout requires an rng");
  auto drop = [&](const Tensor& t) { return rate > 0.0 ? dropout(t, rate, *ctx.rng) : t; };
  Tensor h = x;
  for (const auto& layer : layers_) {
    auto normed = layer.norm1(h);
    h = add(h, drop(layer.attention(normed, normed, mask)));
    auto ff = (*layer.ffn_out)(relu((*layer.ffn_in)(layer.norm2(h))));
    h = add(h, drop(ff));
  }
  return final_norm_(h);
}

Tensor TransformerEncoder::forward(std::span<const Tensor> inputs, const Context& ctx) const {
  require_inputs(inputs, 1, 2, "transformer-encoder");
  return encode(inputs[0], inputs.size() > 1 ? mask_from_tensor(inputs[1]) : KeyMask{}, ctx);
}

AttentionPool::AttentionPool(const ModuleSpec& spec, std::mt19937_64& rng)
    : Module(spec), attention_(spec.dims[0], spec.head_count, rng) {
  spec.validate();
  ParameterList attn;
  attention_.collect("attn", attn);
  for (auto& p : attn) add_parameter(p.name, p.tensor);
}

Tensor AttentionPool::pool(const Tensor& query, const Tensor& sequence, const KeyMask& mask) const {
  if (query.rank() != 2) throw ShapeError("attention pool query must be [b, d], got " + shape_string(query.shape()));
  const auto b = query.dim(0);
  const auto d = query.dim(1);
  auto out = attention_(reshape(query, {b, 1, d}), sequence, mask);
  return reshape(out, {b, d});
}

Tensor AttentionPool::forward(std::span<const Tensor> inputs, const Context&) const {
  require_inputs(inputs, 2, 3, "attention-pool");
  return pool(inputs[0], inputs[1], inputs.size() > 2 ? mask_from_tensor(inputs[2]) : KeyMask{});
}

std::unique_ptr<Module> build_module(const ModuleSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  switch (spec.kind) {
    case ModuleKind::kEmbedding: return std::make_unique<Embedding>(spec, rng);
    case ModuleKind::kLinear: return std::make_unique<Linear>(spec, rng);
    case ModuleKind::kMlp: return std::make_unique<Mlp>(spec, rng);
    case ModuleKind::kTransformerEncoder: return std::make_unique<TransformerEncoder>(spec, rng);
    case ModuleKind::kAttentionPool: return std::make_unique<AttentionPool>(spec, rng);
  }
  throw std::invalid_argument("unsupported module kind");
}

void append_parameters(ParameterList& out, const std::string& prefix, const Module& module) {
  for (const auto& p : module.parameters()) out.push_back({prefix + p.name, p.tensor});
}

}  // namespace hac::nn

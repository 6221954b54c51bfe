#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hac/nn/ops.hpp"
#include "hac/nn/tensor.hpp"

namespace hac::nn {

enum class ModuleKind { kEmbedding, kLinear, kMlp, kTransformerEncoder, kAttentionPool };
enum class Activation { kNone, kRelu, kTanh, kSigmoid };

std::string to_string(ModuleKind kind);
std::string to_string(Activation activation);
ModuleKind module_kind_from_string(const std::string& name);
Activation activation_from_string(const std::string& name);

// Per-kind meaning of `dims`:
//   embedding           {rows, dim}
//   linear              {in, out}
//   mlp                 {in, hidden..., out}
//   transformer-encoder {model_dim, ffn_dim}
//   attention-pool      {model_dim}
struct ModuleSpec {
  ModuleKind kind = ModuleKind::kLinear;
  std::vector<std::size_t> dims;
  Activation activation = Activation::kRelu;
  double dropout_rate = 0.0;
  std::size_t layer_count = 1;
  std::size_t head_count = 1;
  bool bias = true;
  // Embedding init scale; ignored by other kinds.
  double init_std = 0.01;

  static ModuleSpec linear(std::size_t in, std::size_t out, bool bias = true);
  static ModuleSpec embedding(std::size_t rows, std::size_t dim, double init_std = 0.01);
  static ModuleSpec mlp(std::vector<std::size_t> dims, Activation activation = Activation::kRelu);
  static ModuleSpec transformer_encoder(std::size_t model_dim, std::size_t ffn_dim, std::size_t layers,
                                        std::size_t heads, double dropout);
  static ModuleSpec attention_pool(std::size_t model_dim, std::size_t heads);

  // Throws std::invalid_argument on malformed specs.
  void validate() const;
  std::string fingerprint() const;
  nlohmann::json to_json() const;
  static ModuleSpec from_json(const nlohmann::json& j);
  bool operator==(const ModuleSpec&) const = default;
};

struct Context {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training with dropout
};

class Module {
 public:
  explicit Module(ModuleSpec spec) : spec_(std::move(spec)) {}
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  const ModuleSpec& spec() const { return spec_; }
  const ParameterList& parameters() const { return params_; }
  std::size_t parameter_count() const { return count_values(params_); }

  // Generic entry point used by tooling; concrete classes expose typed calls.
  virtual Tensor forward(std::span<const Tensor> inputs, const Context& ctx) const = 0;

 protected:
  Tensor add_parameter(const std::string& name, Tensor value);
  void add_child(const std::string& prefix, const Module& child);

 private:
  ModuleSpec spec_;
  ParameterList params_;
};

class Linear final : public Module {
 public:
  Linear(const ModuleSpec& spec, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;
  Tensor forward(std::span<const Tensor> inputs, const Context& ctx) const override;
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_;  // [in, out]
  Tensor bias_;
};

class Embedding final : public Module {
 public:
  Embedding(const ModuleSpec& spec, std::mt19937_64& rng);
  // [ids.size(), dim]
  Tensor lookup(std::span<const std::int64_t> ids) const;
  // Input: tensor of integral ids of any shape; output appends `dim`.
  Tensor forward(std::span<const Tensor> inputs, const Context& ctx) const override;
  const Tensor& table() const { return table_; }
  std::size_t rows() const { return spec().dims[0]; }
  std::size_t dim() const { return spec().dims[1]; }

 private:
  Tensor table_;
};

class Mlp final : public Module {
 public:
  Mlp(const ModuleSpec& spec, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;
  Tensor forward(std::span<const Tensor> inputs, const Context& ctx) const override;

 private:
  std::vector<std::unique_ptr<Linear>> layers_;
};

class LayerNorm {
 public:
  explicit LayerNorm(std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma_, beta_, 1e-5); }
  const Tensor& gamma() const { return gamma_; }
  const Tensor& beta() const { return beta_; }

 private:
  Tensor gamma_;
  Tensor beta_;
};

// Key padding mask: one byte per (batch, key) position, nonzero = attend.
using KeyMask = std::vector<std::uint8_t>;

class MultiHeadAttention {
 public:
  MultiHeadAttention(std::size_t model_dim, std::size_t heads, std::mt19937_64& rng);
  // query [b, lq, d], memory [b, lk, d]; empty mask attends everywhere.
  Tensor operator()(const Tensor& query, const Tensor& memory, const KeyMask& mask) const;
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  std::size_t heads_;
  std::unique_ptr<Linear> wq_, wk_, wv_, wo_;
};

// Pre-norm encoder stack with a final layer norm.
class TransformerEncoder final : public Module {
 public:
  TransformerEncoder(const ModuleSpec& spec, std::mt19937_64& rng);
  // x [b, l, d] -> [b, l, d]
  Tensor encode(const Tensor& x, const KeyMask& mask, const Context& ctx) const;
  // Inputs: x and optionally a [b, l] 0/1 mask tensor.
  Tensor forward(std::span<const Tensor> inputs, const Context& ctx) const override;

 private:
  struct Layer {
    LayerNorm norm1;
    MultiHeadAttention attention;
    LayerNorm norm2;
    std::unique_ptr<Linear> ffn_in;
    std::unique_ptr<Linear> ffn_out;
  };
  std::vector<Layer> layers_;
  LayerNorm final_norm_;
};

// A caller-supplied query vector attends over a sequence: [b, d] x [b, l, d] -> [b, d].
class AttentionPool final : public Module {
 public:
  AttentionPool(const ModuleSpec& spec, std::mt19937_64& rng);
  Tensor pool(const Tensor& query, const Tensor& sequence, const KeyMask& mask) const;
  // Inputs: query, sequence and optionally a [b, l] 0/1 mask tensor.
  Tensor forward(std::span<const Tensor> inputs, const Context& ctx) const override;

 private:
  MultiHeadAttention attention_;
};

// Deterministic in (spec, seed): parameters are drawn in registration order.
std::unique_ptr<Module> build_module(const ModuleSpec& spec, std::uint64_t seed);

// Appends the module's parameters to `out` with names prefixed by `prefix`.
void append_parameters(ParameterList& out, const std::string& prefix, const Module& module);

Tensor apply_activation(const Tensor& x, Activation activation);
KeyMask mask_from_tensor(const Tensor& mask);

}  // namespace hac::nn

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hac/agents/replay.hpp"
#include "hac/critic/critic.hpp"
#include "hac/data/log.hpp"
#include "hac/env/environment.hpp"
#include "hac/nn/optim.hpp"
#include "hac/policy/policy.hpp"

namespace hac::agents {

enum class Algorithm { kHAC, kDDPG, kTD3, kA2C, kOnlineSL, kOfflineSL, kDDPGRA };

std::string to_string(Algorithm algorithm);
// Accepts the canonical tags: HAC, DDPG, TD3, A2C, OnlineSL, OfflineSL, DDPG-RA.
Algorithm algorithm_from_string(const std::string& tag);
bool uses_replay(Algorithm algorithm);

// What the critic sees as its action input during TD learning.
enum class CriticInput {
  kEffect,  // h(a): mean kernel vector of the shown slate
  kHyper,   // the stored Z sample
};

struct TrainConfig {
  Algorithm algorithm = Algorithm::kHAC;
  double gamma = 0.9;
  double sigma = 0.1;
  double tau = 0.01;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double supervision_lr = 1e-4;
  // Learning rate of the alignment losses (hyper-action and inverse dynamics).
  double alignment_lr = 1e-4;
  double hyper_weight = 0.1;
  std::size_t batch_size = 64;
  std::size_t episodes = 32;
  std::size_t buffer_capacity = 100000;
  std::size_t buffer_threshold = 2000;
  CriticInput critic_input = CriticInput::kEffect;
  std::vector<std::size_t> critic_hidden = {256, 64};
  double q_warning = 15.0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Loss values of one update; absent entries were not computed by the algorithm.
struct LossReport {
  std::uint64_t iteration = 0;
  bool trained = false;
  std::optional<double> td;
  std::optional<double> qmax;
  std::optional<double> hyper;
  std::optional<double> bce;
  std::optional<double> aux;
  double max_q = 0.0;
  bool q_warning = false;
};

enum class ActMode {
  kExplore,  // configured sigma and selection mode
  kGreedy,   // sigma 0, top-k
};

struct ActionBatch {
  std::vector<std::vector<ItemId>> slates;
  std::vector<std::vector<double>> hyper_actions;  // Z sample per row
};

// Critic inputs recorded during the last update when tracing is on.
struct StepTrace {
  nn::Tensor td_state;
  nn::Tensor td_action;
  nn::Tensor qmax_state;
  nn::Tensor qmax_action;
  std::vector<double> td_targets;
  std::vector<double> twin_targets;  // TD3: per-critic targets before the min
};

class Agent {
 public:
  Agent(policy::PolicyConfig policy_config, TrainConfig config);

  const TrainConfig& config() const { return config_; }
  const policy::Policy& policy() const { return *policy_; }
  const policy::Policy& target_policy() const { return *target_policy_; }
  const critic::QNetwork& critic(std::size_t i = 0) const { return *critics_.at(i); }
  const critic::QNetwork& target_critic(std::size_t i = 0) const { return *target_critics_.at(i); }
  std::size_t critic_count() const { return critics_.size(); }
  const critic::VNetwork* value_network() const { return value_.get(); }
  // Every trainable or tracked tensor (live, target and auxiliary), prefixed.
  nn::ParameterList all_parameters() const;

  ActionBatch act(std::span<const Observation> observations, ActMode mode, std::mt19937_64& rng) const;

  // One update of the configured algorithm. Off-policy algorithms expect a
  // replay sample; A2C and OnlineSL expect the latest rollout.
  LossReport update(std::span<const Transition> batch);
  // OfflineSL update on logged records.
  LossReport update_offline(std::span<const data::InteractionRecord> records);

  void set_trace(StepTrace* trace) { trace_ = trace; }

  void save(const std::filesystem::path& directory) const;
  void load(const std::filesystem::path& directory);

 private:
  LossReport step_hac(std::span<const Transition> batch);
  LossReport step_ddpg(std::span<const Transition> batch, bool twin);
  LossReport step_a2c(std::span<const Transition> batch);
  LossReport step_supervised(std::span<const Observation> obs, std::span<const ItemId> items,
                             std::span<const std::uint8_t> feedback);
  double step_hyper(std::span<const Observation> obs);
  double step_bce(std::span<const Observation> obs, std::span<const ItemId> items,
                  std::span<const std::uint8_t> feedback);
  double step_ra(std::span<const Observation> obs, std::span<const Observation> next, std::span<const ItemId> items);
  void soft_update_targets();
  void note_q(LossReport& report, const nn::Tensor& q) const;
  nn::Context train_context() { return {true, &rng_}; }

  TrainConfig config_;
  std::unique_ptr<policy::Policy> policy_;
  std::unique_ptr<policy::Policy> target_policy_;
  std::vector<std::unique_ptr<critic::QNetwork>> critics_;
  std::vector<std::unique_ptr<critic::QNetwork>> target_critics_;
  std::unique_ptr<critic::VNetwork> value_;
  std::unique_ptr<nn::Mlp> ra_head_;
  std::unique_ptr<nn::Adam> actor_opt_;
  std::unique_ptr<nn::Adam> critic_opt_;
  std::unique_ptr<nn::Adam> hyper_opt_;
  std::unique_ptr<nn::Adam> supervision_opt_;
  std::unique_ptr<nn::Adam> ra_opt_;
  nn::ParameterList critic_params_;
  std::mt19937_64 rng_;
  StepTrace* trace_ = nullptr;
  mutable bool warned_ = false;
};

// Alternates environment interaction and updates for one agent.
class Trainer {
 public:
  // offline_log is required for OfflineSL and ignored otherwise.
  Trainer(Agent& agent, env::Environment& environment, std::uint64_t seed,
          const data::SessionLog* offline_log = nullptr);

  // One environment step over every running session (skipped for OfflineSL)
  // followed by an update when enough data is available.
  LossReport iterate();

  std::uint64_t iteration() const { return iteration_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  std::size_t finished_sessions() const { return finished_; }

 private:
  std::vector<Transition> collect();

  Agent& agent_;
  env::Environment& env_;
  const data::SessionLog* offline_;
  ReplayBuffer buffer_;
  std::mt19937_64 rng_;
  std::uint64_t iteration_ = 0;
  std::size_t finished_ = 0;
  bool started_ = false;
};

}  // namespace hac::agents

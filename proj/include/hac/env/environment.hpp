#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hac/env/observation.hpp"
#include "hac/env/response_model.hpp"

namespace hac::env {

struct EnvConfig {
  double initial_temper = 10.0;
  double temper_alpha = 2.0;
  std::size_t max_depth = 20;
  double positive_reward = 1.0;
  double negative_reward = -0.2;
  // Running histories keep at most this many recent positives.
  std::size_t history_cap = 50;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static EnvConfig from_json(const nlohmann::json& j);
};

struct SessionState {
  Observation observation;
  double temper = 0.0;
  std::size_t depth = 0;
  bool done = false;
};

struct StepResult {
  std::vector<std::uint8_t> feedback;
  double reward = 0.0;
  bool done = false;
  Observation next;
};

// Mean item-wise reward over the slate, evaluated in extended precision and
// rounded once.
double slate_reward(std::span<const std::uint8_t> feedback, double positive_reward = 1.0,
                    double negative_reward = -0.2);

// Returns the new temper and whether the user leaves (new temper <= 0).
std::pair<double, bool> temper_update(double temper, std::span<const std::uint8_t> feedback, double alpha = 2.0);

class Environment {
 public:
  Environment(std::shared_ptr<const ResponseModel> model, std::vector<Observation> user_pool, EnvConfig config = {});

  const EnvConfig& config() const { return config_; }
  const ResponseModel& model() const { return *model_; }
  std::shared_ptr<const ResponseModel> shared_model() const { return model_; }
  std::size_t catalog_size() const { return model_->config().catalog_size; }
  std::size_t list_size() const { return model_->config().list_size; }
  std::size_t batch_size() const { return sessions_.size(); }
  const SessionState& session(std::size_t i) const { return sessions_.at(i); }
  std::size_t live_sessions() const;

  std::vector<Observation> reset(std::size_t batch_size);
  // Replaces session i with a fresh user drawn from the pool.
  Observation reset_session(std::size_t i);

  // One slate per listed session; every listed session must be live.
  std::vector<StepResult> step(std::span<const std::size_t> sessions, std::span<const std::vector<ItemId>> slates);
  // One slate per session of the current batch.
  std::vector<StepResult> step(std::span<const std::vector<ItemId>> slates);

  std::vector<double> response_probabilities(const SessionState& state, std::span<const ItemId> items) const;

  // Parameter file plus JSON sidecar in `directory`.
  void save(const std::filesystem::path& directory) const;
  static Environment load(const std::filesystem::path& directory, std::vector<Observation> user_pool);

 private:
  SessionState fresh_session();

  std::shared_ptr<const ResponseModel> model_;
  std::vector<Observation> pool_;
  EnvConfig config_;
  std::mt19937_64 rng_;
  std::vector<SessionState> sessions_;
};

}  // namespace hac::env

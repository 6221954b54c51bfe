#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hac/agents/agent.hpp"
#include "hac/data/synthetic.hpp"
#include "hac/env/environment.hpp"
#include "hac/env/response_model.hpp"
#include "hac/harness/metrics.hpp"
#include "hac/policy/policy.hpp"

namespace hac::harness {

struct ExperimentConfig {
  // Session-log TSV; empty means generate from `synth`.
  std::string dataset;
  data::SynthConfig synth;
  double train_fraction = 0.8;

  env::EnvConfig environment;
  std::size_t response_dim = 32;
  std::size_t response_max_history = 50;
  env::ResponseFitOptions fit;

  // Architecture fields only; catalog, list size and features come from the data.
  policy::PolicyConfig policy;
  agents::TrainConfig train;

  std::size_t iterations = 5000;
  std::size_t eval_every = 500;
  std::size_t eval_sessions = 100;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  bool write_checkpoints = true;

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

// Data, fitted simulators and user pools shared by every run on one dataset.
struct Worlds {
  data::SessionLog log;
  data::SessionLog train;
  data::SessionLog test;
  std::shared_ptr<env::ResponseModel> train_model;
  std::shared_ptr<env::ResponseModel> full_model;
  env::ResponseFitReport train_fit;
  env::ResponseFitReport full_fit;
  std::vector<Observation> train_pool;
  std::vector<Observation> eval_pool;
};

data::SessionLog load_dataset(const ExperimentConfig& config);
// Splits the data, fits the train-split simulator and the full-data simulator.
Worlds prepare_worlds(const ExperimentConfig& config);

struct ExperimentResult {
  std::vector<MetricsRow> metrics;
  std::vector<agents::LossReport> losses;
  std::vector<SessionRow> sessions;
  AggregateMetrics initial;
  AggregateMetrics final;
  double seconds = 0.0;
};

policy::PolicyConfig policy_config_for(const ExperimentConfig& config, const data::SessionLog& log);
std::uint64_t evaluation_seed(std::uint64_t seed);

using ProgressCallback = std::function<void(std::uint64_t iteration, const AggregateMetrics& metrics)>;

// Trains against the train-split simulator, evaluates against the full-data
// simulator at iteration 0, every eval_every iterations and at the end.
// Writes artifacts only when `write` is set.
ExperimentResult train_and_evaluate(const ExperimentConfig& config, const Worlds& worlds, bool write = true,
                                    const ProgressCallback& progress = {});

// prepare_worlds + train_and_evaluate with artifacts in config.output_dir:
// config.json, metadata.json, metrics.csv, losses.csv, sessions.csv,
// env/{train,full}/ and checkpoints/final/.
ExperimentResult run_experiment(const ExperimentConfig& config, const ProgressCallback& progress = {});

}  // namespace hac::harness

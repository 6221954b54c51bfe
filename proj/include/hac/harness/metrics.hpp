#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hac/agents/agent.hpp"
#include "hac/env/environment.hpp"

namespace hac::harness {

using data::ItemId;
using env::Observation;

struct SessionMetrics {
  double total_reward = 0.0;
  std::size_t depth = 0;
};

struct AggregateMetrics {
  std::size_t sessions = 0;
  double mean_total_reward = 0.0;
  double mean_depth = 0.0;
  // Population variance of total_reward across sessions.
  double reward_variance = 0.0;
};

AggregateMetrics aggregate(std::span<const SessionMetrics> sessions);

// Slates for a batch of live sessions; must return one slate per observation.
using SlateFunction = std::function<std::vector<std::vector<ItemId>>(std::span<const Observation>)>;

// Runs n_sessions fresh users (drawn from a private environment seeded with
// `seed`) to termination. The model is only read.
std::vector<SessionMetrics> run_sessions(const SlateFunction& slates, std::shared_ptr<const env::ResponseModel> model,
                                         std::vector<Observation> user_pool, env::EnvConfig config,
                                         std::size_t n_sessions, std::uint64_t seed);

// Greedy (sigma 0, top-k) inference unless mode says otherwise.
std::vector<SessionMetrics> evaluate_sessions(const agents::Agent& agent, std::shared_ptr<const env::ResponseModel> model,
                                              std::vector<Observation> user_pool, env::EnvConfig config,
                                              std::size_t n_sessions, std::uint64_t seed,
                                              agents::ActMode mode = agents::ActMode::kGreedy);

AggregateMetrics evaluate(const agents::Agent& agent, std::shared_ptr<const env::ResponseModel> model,
                          std::vector<Observation> user_pool, env::EnvConfig config, std::size_t n_sessions,
                          std::uint64_t seed);

struct MetricsRow {
  std::uint64_t iteration = 0;
  std::string algo;
  std::uint64_t seed = 0;
  double mean_total_reward = 0.0;
  double mean_depth = 0.0;
  double reward_variance = 0.0;
  bool operator==(const MetricsRow&) const = default;
};

struct SessionRow {
  std::uint64_t iteration = 0;
  std::size_t session = 0;
  double total_reward = 0.0;
  std::size_t depth = 0;
  bool operator==(const SessionRow&) const = default;
};

inline constexpr const char* kMetricsHeader = "iteration,algo,seed,mean_total_reward,mean_depth,reward_variance";
inline constexpr const char* kLossHeader = "iteration,L_TD,L_QMax,L_Hyper,L_BCE,aux";
inline constexpr const char* kSessionHeader = "iteration,session,total_reward,depth";

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Doubles are written with 17 significant digits so they round-trip exactly.
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);
// Losses an algorithm does not compute are left empty.
void write_loss_csv(const std::filesystem::path& path, std::span<const agents::LossReport> rows);
std::vector<agents::LossReport> read_loss_csv(const std::filesystem::path& path);
void write_session_csv(const std::filesystem::path& path, std::span<const SessionRow> rows);
std::vector<SessionRow> read_session_csv(const std::filesystem::path& path);

std::string format_double(double value);

}  // namespace hac::harness

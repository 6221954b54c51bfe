#include "hac/env/environment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace hac::env {

void EnvConfig::validate() const {
  if (!(initial_temper > 0.0)) throw std::invalid_argument("initial temper must be positive");
  if (!(temper_alpha >= 0.0)) throw std::invalid_argument("temper alpha must be non-negative");
  if (max_depth == 0) throw std::invalid_argument("max depth must be positive");
  if (history_cap == 0) throw std::invalid_argument("history cap must be positive");
}

nlohmann::json EnvConfig::to_json() const {
  return {{"initial_temper", initial_temper},   {"temper_alpha", temper_alpha},
          {"max_depth", max_depth},             {"positive_reward", positive_reward},
          {"negative_reward", negative_reward}, {"history_cap", history_cap},
          {"seed", seed}};
}

EnvConfig EnvConfig::from_json(const nlohmann::json& j) {
  EnvConfig c;
  c.initial_temper = j.value("initial_temper", c.initial_temper);
  c.temper_alpha = j.value("temper_alpha", c.temper_alpha);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.positive_reward = j.value("positive_reward", c.positive_reward);
  c.negative_reward = j.value("negative_reward", c.negative_reward);
  c.history_cap = j.value("history_cap", c.history_cap);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

double slate_reward(std::span<const std::uint8_t> feedback, double positive_reward, double negative_reward) {
  if (feedback.empty()) throw std::invalid_argument("empty feedback");
  long double positives = 0;
  for (auto y : feedback) positives += y ? 1 : 0;
  const long double k = static_cast<long double>(feedback.size());
  // Constants are snapped to 1e-6 and scaled by 10, so 1 and -0.2 become the
  // integers 10 and -2; the final division is then a single correctly rounded op.
  const long double pos10 = std::round(static_cast<long double>(positive_reward) * 1e6L) / 1e5L;
  const long double neg10 = std::round(static_cast<long double>(negative_reward) * 1e6L) / 1e5L;
  const long double total10 = positives * pos10 + (k - positives) * neg10;
  return static_cast<double>(total10) / static_cast<double>(10.0L * k);
}

std::pair<double, bool> temper_update(double temper, std::span<const std::uint8_t> feedback, double alpha) {
  if (temper < 0.0) throw std::invalid_argument("temper must be non-negative");
  if (feedback.empty()) throw std::invalid_argument("empty feedback");
  std::size_t positives = 0;
  for (auto y : feedback) positives += y ? 1 : 0;
  const double fraction = static_cast<double>(positives) / static_cast<double>(feedback.size());
  const double next = temper - (1.0 + alpha * (1.0 - fraction));
  return {next, next <= 0.0};
}

Environment::Environment(std::shared_ptr<const ResponseModel> model, std::vector<Observation> user_pool,
                         EnvConfig config)
    : model_(std::move(model)), pool_(std::move(user_pool)), config_(config), rng_(config.seed) {
  if (!model_) throw std::invalid_argument("environment needs a response model");
  if (pool_.empty()) throw std::invalid_argument("environment user pool is empty");
  config_.validate();
}

std::size_t Environment::live_sessions() const {
  return static_cast<std::size_t>(
      std::count_if(sessions_.begin(), sessions_.end(), [](const SessionState& s) { return !s.done; }));
}

SessionState Environment::fresh_session() {
  std::uniform_int_distribution<std::size_t> pick(0, pool_.size() - 1);
  SessionState s;
  s.observation = pool_[pick(rng_)];
  if (s.observation.history.size() > config_.history_cap) {
    auto& h = s.observation.history;
    h.erase(h.begin(), h.end() - static_cast<std::ptrdiff_t>(config_.history_cap));
  }
  s.temper = config_.initial_temper;
  return s;
}

std::vector<Observation> Environment::reset(std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  sessions_.clear();
  std::vector<Observation> out;
  for (std::size_t i = 0; i < batch_size; ++i) {
    sessions_.push_back(fresh_session());
    out.push_back(sessions_.back().observation);
  }
  return out;
}

Observation Environment::reset_session(std::size_t i) {
  if (i >= sessions_.size()) throw std::out_of_range("session index out of range");
  sessions_[i] = fresh_session();
  return sessions_[i].observation;
}

std::vector<double> Environment::response_probabilities(const SessionState& state,
                                                        std::span<const ItemId> items) const {
  return model_->probabilities(state.observation, items);
}

std::vector<StepResult> Environment::step(std::span<const std::size_t> sessions,
                                          std::span<const std::vector<ItemId>> slates) {
  if (sessions.size() != slates.size()) throw std::invalid_argument("one slate per session is required");
  const auto k = list_size();
  std::set<std::size_t> seen;
  std::vector<Observation> observations;
  std::vector<ItemId> items;
  for (std::size_t j = 0; j < sessions.size(); ++j) {
    const auto i = sessions[j];
    if (i >= sessions_.size()) throw std::out_of_range("session index out of range");
    if (!seen.insert(i).second) throw std::invalid_argument("session listed twice in one step");
    if (sessions_[i].done) throw std::logic_error("action on a done session " + std::to_string(i));
    if (slates[j].size() != k) {
      throw std::invalid_argument("slate has " + std::to_string(slates[j].size()) + " items, expected " +
                                  std::to_string(k));
    }
    for (auto id : slates[j]) {
      if (id < 0 || static_cast<std::size_t>(id) >= catalog_size()) {
        throw std::out_of_range("item " + std::to_string(id) + " outside catalog");
      }
    }
    observations.push_back(sessions_[i].observation);
    items.insert(items.end(), slates[j].begin(), slates[j].end());
  }
  if (sessions.empty()) return {};

  const auto probs = model_->probabilities(observations, items, k);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<StepResult> results;
  results.reserve(sessions.size());
  for (std::size_t j = 0; j < sessions.size(); ++j) {
    auto& s = sessions_[sessions[j]];
    StepResult r;
    r.feedback.resize(k);
    for (std::size_t t = 0; t < k; ++t) r.feedback[t] = unit(rng_) < probs[j * k + t] ? 1 : 0;
    r.reward = slate_reward(r.feedback, config_.positive_reward, config_.negative_reward);
    auto [temper, left] = temper_update(s.temper, r.feedback, config_.temper_alpha);
    s.temper = std::max(temper, 0.0);
    ++s.depth;
    for (std::size_t t = 0; t < k; ++t) {
      if (r.feedback[t]) s.observation.history.push_back(slates[j][t]);
    }
    auto& h = s.observation.history;
    if (h.size() > config_.history_cap) h.erase(h.begin(), h.end() - static_cast<std::ptrdiff_t>(config_.history_cap));
    s.done = left || s.depth >= config_.max_depth;
    r.done = s.done;
    r.next = s.observation;
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<StepResult> Environment::step(std::span<const std::vector<ItemId>> slates) {
  std::vector<std::size_t> all(sessions_.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return step(all, slates);
}

void Environment::save(const std::filesystem::path& directory) const {
  std::filesystem::create_directories(directory);
  model_->save(directory / "response_model.bin");
  nlohmann::json sidecar = {{"catalog_size", catalog_size()},
                            {"list_size", list_size()},
                            {"environment", config_.to_json()},
                            {"response_model", model_->config().to_json()}};
  std::ofstream out(directory / "environment.json");
  out << sidecar.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write environment sidecar in " + directory.string());
}

Environment Environment::load(const std::filesystem::path& directory, std::vector<Observation> user_pool) {
  std::ifstream in(directory / "environment.json");
  if (!in) throw std::runtime_error("missing environment sidecar in " + directory.string());
  const auto sidecar = nlohmann::json::parse(in);
  auto model = std::make_shared<ResponseModel>(ResponseModelConfig::from_json(sidecar.at("response_model")));
  model->load(directory / "response_model.bin");
  return Environment(std::move(model), std::move(user_pool), EnvConfig::from_json(sidecar.at("environment")));
}

}  // namespace hac::env

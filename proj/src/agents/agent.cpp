#include "hac/agents/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "hac/agents/losses.hpp"
#include "hac/nn/ops.hpp"
#include "hac/nn/serialize.hpp"

namespace hac::agents {

using nn::Tensor;
using policy::SamplingMode;
using policy::SelectionMode;

namespace {

struct Columns {
  std::vector<Observation> obs;
  std::vector<Observation> next;
  std::vector<ItemId> items;
  std::vector<std::uint8_t> feedback;
  std::vector<std::uint8_t> done;
  std::vector<double> rewards;
  std::vector<double> z;
};

Columns unpack(std::span<const Transition> batch, std::size_t k, std::size_t dim, bool need_z) {
  if (batch.empty()) throw std::invalid_argument("update needs a non-empty batch");
  Columns c;
  c.obs.reserve(batch.size());
  c.next.reserve(batch.size());
  for (const auto& t : batch) {
    if (t.action.size() != k || t.feedback.size() != k) {
      throw std::invalid_argument("transition carries " + std::to_string(t.action.size()) + " items, expected " +
                                  std::to_string(k));
    }
    c.obs.push_back(t.observation);
    c.next.push_back(t.next);
    c.items.insert(c.items.end(), t.action.begin(), t.action.end());
    c.feedback.insert(c.feedback.end(), t.feedback.begin(), t.feedback.end());
    c.done.push_back(t.done ? 1 : 0);
    c.rewards.push_back(t.reward);
    if (need_z) {
      if (t.hyper_action.size() != dim) throw std::invalid_argument("transition lacks a stored hyper-action");
      c.z.insert(c.z.end(), t.hyper_action.begin(), t.hyper_action.end());
    }
  }
  return c;
}

std::vector<ItemId> topk_rows(const Tensor& scores, std::size_t k) {
  const auto rows = scores.shape()[0];
  const auto n = scores.shape()[1];
  std::vector<ItemId> out;
  out.reserve(rows * k);
  for (std::size_t b = 0; b < rows; ++b) {
    auto a = policy::select_effect_action(scores.values().subspan(b * n, n), k, SelectionMode::kTopK, nullptr);
    out.insert(out.end(), a.items.begin(), a.items.end());
  }
  return out;
}

std::vector<double> copy_values(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Constant leaf that records the gradient it receives.
Tensor probe(Tensor t) {
  auto leaf = t.detach();
  leaf.set_requires_grad(true);
  return leaf;
}

std::string critic_input_name(CriticInput c) { return c == CriticInput::kEffect ? "effect" : "hyper"; }

CriticInput critic_input_from_string(const std::string& s) {
  if (s == "effect") return CriticInput::kEffect;
  if (s == "hyper") return CriticInput::kHyper;
  throw std::invalid_argument("unknown critic input '" + s + "'");
}

void append(nn::ParameterList& out, const std::string& prefix, const nn::ParameterList& params) {
  for (const auto& p : params) out.push_back({prefix + p.name, p.tensor});
}

}  // namespace

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kHAC: return "HAC";
    case Algorithm::kDDPG: return "DDPG";
    case Algorithm::kTD3: return "TD3";
    case Algorithm::kA2C: return "A2C";
    case Algorithm::kOnlineSL: return "OnlineSL";
    case Algorithm::kOfflineSL: return "OfflineSL";
    case Algorithm::kDDPGRA: return "DDPG-RA";
  }
  return "unknown";
}

Algorithm algorithm_from_string(const std::string& tag) {
  for (auto a : {Algorithm::kHAC, Algorithm::kDDPG, Algorithm::kTD3, Algorithm::kA2C, Algorithm::kOnlineSL,
                 Algorithm::kOfflineSL, Algorithm::kDDPGRA}) {
    if (to_string(a) == tag) return a;
  }
  throw std::invalid_argument("unknown algorithm '" + tag + "'");
}

bool uses_replay(Algorithm algorithm) {
  return algorithm == Algorithm::kHAC || algorithm == Algorithm::kDDPG || algorithm == Algorithm::kTD3 ||
         algorithm == Algorithm::kDDPGRA;
}

void TrainConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0, 1]");
  for (double lr : {actor_lr, critic_lr, supervision_lr, alignment_lr}) {
    if (!(lr >= 0.0)) throw std::invalid_argument("learning rates must be non-negative");
  }
  if (!(hyper_weight >= 0.0)) throw std::invalid_argument("hyper-action weight must be non-negative");
  if (batch_size == 0 || episodes == 0) throw std::invalid_argument("batch size and episodes must be positive");
  if (buffer_capacity == 0 || buffer_threshold > buffer_capacity) {
    throw std::invalid_argument("replay threshold must not exceed a positive capacity");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"algorithm", to_string(algorithm)},
          {"gamma", gamma},
          {"sigma", sigma},
          {"tau", tau},
          {"actor_lr", actor_lr},
          {"critic_lr", critic_lr},
          {"supervision_lr", supervision_lr},
          {"alignment_lr", alignment_lr},
          {"hyper_weight", hyper_weight},
          {"batch_size", batch_size},
          {"episodes", episodes},
          {"buffer_capacity", buffer_capacity},
          {"buffer_threshold", buffer_threshold},
          {"critic_input", critic_input_name(critic_input)},
          {"critic_hidden", critic_hidden},
          {"q_warning", q_warning},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.algorithm = algorithm_from_string(j.value("algorithm", to_string(c.algorithm)));
  c.gamma = j.value("gamma", c.gamma);
  c.sigma = j.value("sigma", c.sigma);
  c.tau = j.value("tau", c.tau);
  c.actor_lr = j.value("actor_lr", c.actor_lr);
  c.critic_lr = j.value("critic_lr", c.critic_lr);
  c.supervision_lr = j.value("supervision_lr", c.supervision_lr);
  c.alignment_lr = j.value("alignment_lr", c.alignment_lr);
  c.hyper_weight = j.value("hyper_weight", c.hyper_weight);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.episodes = j.value("episodes", c.episodes);
  c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
  c.buffer_threshold = j.value("buffer_threshold", c.buffer_threshold);
  c.critic_input = critic_input_from_string(j.value("critic_input", critic_input_name(c.critic_input)));
  c.critic_hidden = j.value("critic_hidden", c.critic_hidden);
  c.q_warning = j.value("q_warning", c.q_warning);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

Agent::Agent(policy::PolicyConfig policy_config, TrainConfig config)
    : config_(std::move(config)), rng_(config_.seed ^ 0x9e3779b97f4a7c15ULL) {
  config_.validate();
  const bool a2c = config_.algorithm == Algorithm::kA2C;
  policy_config.sigma = a2c ? 0.0 : config_.sigma;
  policy_config.selection = a2c ? SelectionMode::kCategorical : SelectionMode::kTopK;
  policy_ = std::make_unique<policy::Policy>(policy_config);
  target_policy_ = std::make_unique<policy::Policy>(policy_config);
  nn::copy_values(target_policy_->parameters(), policy_->parameters());
  const auto d = policy_->dim();

  if (a2c) {
    value_ = std::make_unique<critic::VNetwork>(d, config_.critic_hidden, config_.seed + 101);
    append(critic_params_, "", value_->parameters());
  } else {
    const std::size_t n = config_.algorithm == Algorithm::kTD3 ? 2 : 1;
    for (std::size_t i = 0; i < n; ++i) {
      critics_.push_back(std::make_unique<critic::QNetwork>(d, config_.critic_hidden, config_.seed + 101 + i));
      target_critics_.push_back(std::make_unique<critic::QNetwork>(d, config_.critic_hidden, config_.seed + 101 + i));
      nn::copy_values(target_critics_.back()->parameters(), critics_.back()->parameters());
      append(critic_params_, "q" + std::to_string(i) + ".", critics_.back()->parameters());
    }
  }

  auto adam = [](const nn::ParameterList& params, double lr) {
    return std::make_unique<nn::Adam>(params, nn::AdamOptions{.learning_rate = lr});
  };
  actor_opt_ = adam(policy_->parameters(), config_.actor_lr);
  critic_opt_ = adam(critic_params_, config_.critic_lr);
  hyper_opt_ = adam(policy_->parameters(), config_.alignment_lr);
  supervision_opt_ = adam(policy_->parameters(), config_.supervision_lr);
  if (config_.algorithm == Algorithm::kDDPGRA) {
    std::mt19937_64 head_rng(config_.seed + 211);
    ra_head_ = std::make_unique<nn::Mlp>(nn::ModuleSpec::mlp({2 * d, 256, d}), head_rng);
    nn::ParameterList ra_params;
    append(ra_params, "head.", ra_head_->parameters());
    append(ra_params, "policy.", policy_->parameters());
    ra_opt_ = adam(ra_params, config_.alignment_lr);
  }
}

nn::ParameterList Agent::all_parameters() const {
  nn::ParameterList out;
  append(out, "policy.", policy_->parameters());
  append(out, "target_policy.", target_policy_->parameters());
  for (std::size_t i = 0; i < critics_.size(); ++i) {
    append(out, "critic" + std::to_string(i) + ".", critics_[i]->parameters());
    append(out, "target_critic" + std::to_string(i) + ".", target_critics_[i]->parameters());
  }
  if (value_) append(out, "value.", value_->parameters());
  if (ra_head_) append(out, "ra_head.", ra_head_->parameters());
  return out;
}

ActionBatch Agent::act(std::span<const Observation> observations, ActMode mode, std::mt19937_64& rng) const {
  nn::NoGradGuard no_grad;
  const bool explore = mode == ActMode::kExplore;
  const auto& pc = policy_->config();
  const double sigma = explore ? pc.sigma : 0.0;
  const auto selection = explore ? pc.selection : SelectionMode::kTopK;
  auto state = policy_->encode_state(observations);
  auto h = policy_->propose_hyper_action(state, sigma, sigma > 0.0 ? SamplingMode::kGaussian : SamplingMode::kDeterministic,
                                         &rng);
  auto scores = policy_->score_items(h.sample);
  const auto n = scores.shape()[1];
  const auto d = policy_->dim();
  ActionBatch out;
  for (std::size_t b = 0; b < observations.size(); ++b) {
    auto a = policy::select_effect_action(scores.values().subspan(b * n, n), pc.list_size, selection, &rng);
    out.slates.push_back(std::move(a.items));
    auto z = h.sample.values().subspan(b * d, d);
    out.hyper_actions.emplace_back(z.begin(), z.end());
  }
  return out;
}

LossReport Agent::update(std::span<const Transition> batch) {
  switch (config_.algorithm) {
    case Algorithm::kHAC: return step_hac(batch);
    case Algorithm::kDDPG: return step_ddpg(batch, false);
    case Algorithm::kTD3: return step_ddpg(batch, true);
    case Algorithm::kDDPGRA: {
      auto report = step_ddpg(batch, false);
      const auto c = unpack(batch, policy_->config().list_size, policy_->dim(), false);
      if (config_.alignment_lr > 0.0) report.aux = step_ra(c.obs, c.next, c.items);
      return report;
    }
    case Algorithm::kA2C: return step_a2c(batch);
    case Algorithm::kOnlineSL: {
      const auto c = unpack(batch, policy_->config().list_size, policy_->dim(), false);
      return step_supervised(c.obs, c.items, c.feedback);
    }
    case Algorithm::kOfflineSL:
      throw std::logic_error("OfflineSL trains from logged records; use update_offline");
  }
  throw std::logic_error("unhandled algorithm");
}

LossReport Agent::update_offline(std::span<const data::InteractionRecord> records) {
  if (records.empty()) throw std::invalid_argument("offline update needs records");
  const auto k = policy_->config().list_size;
  std::vector<Observation> obs;
  std::vector<ItemId> items;
  std::vector<std::uint8_t> feedback;
  for (const auto& r : records) {
    if (r.exposed.size() != k) throw std::invalid_argument("logged slate size differs from the policy's list size");
    obs.push_back({r.user_features, r.history});
    items.insert(items.end(), r.exposed.begin(), r.exposed.end());
    feedback.insert(feedback.end(), r.feedback.begin(), r.feedback.end());
  }
  return step_supervised(obs, items, feedback);
}

void Agent::note_q(LossReport& report, const Tensor& q) const {
  for (double v : q.values()) report.max_q = std::max(report.max_q, v);
  if (report.max_q > config_.q_warning) {
    report.q_warning = true;
    if (!warned_) {
      std::cerr << "warning: critic value " << report.max_q << " exceeds " << config_.q_warning
                << "; returns are bounded by 1/(1-gamma)\n";
      warned_ = true;
    }
  }
}

LossReport Agent::step_hac(std::span<const Transition> batch) {
  const auto k = policy_->config().list_size;
  const auto d = policy_->dim();
  const bool effect = config_.critic_input == CriticInput::kEffect;
  const auto c = unpack(batch, k, d, !effect);
  const auto n = c.obs.size();
  LossReport report;
  report.trained = true;

  auto state = policy_->encode_state(c.obs, train_context());
  std::vector<double> next_q;
  {
    nn::NoGradGuard no_grad;
    auto s2 = target_policy_->encode_state(c.next);
    auto z2 = target_policy_->propose_hyper_action(s2, 0.0, SamplingMode::kDeterministic).mean;
    auto a2 = effect ? critic::inverse_pool(target_policy_->item_kernel(), topk_rows(target_policy_->score_items(z2), k), k)
                     : z2;
    next_q = copy_values((*target_critics_[0])(s2, a2));
  }
  const auto targets = td_targets(c.rewards, next_q, c.done, config_.gamma);

  // Critic: effect-action through the inverse module, kernel held fixed.
  auto s_fixed = probe(state);
  Tensor action;
  if (effect) {
    nn::NoGradGuard no_grad;
    action = critic::inverse_pool(policy_->item_kernel(), c.items, k);
  } else {
    action = Tensor::from({n, d}, c.z);
  }
  action = probe(action);
  zero_grads(all_parameters());
  auto q = (*critics_[0])(s_fixed, action);
  auto td = td_loss(q, targets);
  td.backward();
  critic_opt_->step();
  report.td = td.item();
  note_q(report, q);

  // Actor: hyper-action of the current policy.
  zero_grads(all_parameters());
  auto s_actor = probe(state);
  auto z = policy_->propose_hyper_action(state, 0.0, SamplingMode::kDeterministic).mean;
  auto qmax = qmax_loss((*critics_[0])(s_actor, z));
  qmax.backward();
  nn::zero_grads(critic_params_);
  actor_opt_->step();
  report.qmax = qmax.item();

  if (trace_ != nullptr) {
    trace_->td_state = s_fixed;
    trace_->td_action = action;
    trace_->qmax_state = s_actor;
    trace_->qmax_action = z;
    trace_->td_targets = targets;
    trace_->twin_targets.clear();
  }

  if (config_.hyper_weight > 0.0 && config_.alignment_lr > 0.0) report.hyper = step_hyper(c.obs);
  if (config_.supervision_lr > 0.0) report.bce = step_bce(c.obs, c.items, c.feedback);
  soft_update_targets();
  return report;
}

LossReport Agent::step_ddpg(std::span<const Transition> batch, bool twin) {
  const auto k = policy_->config().list_size;
  const auto d = policy_->dim();
  const auto c = unpack(batch, k, d, true);
  const auto n = c.obs.size();
  LossReport report;
  report.trained = true;

  auto state = policy_->encode_state(c.obs, train_context());
  std::vector<double> next_q, twin_targets;
  {
    nn::NoGradGuard no_grad;
    auto s2 = target_policy_->encode_state(c.next);
    auto z2 = target_policy_->propose_hyper_action(s2, 0.0, SamplingMode::kDeterministic).mean;
    next_q = copy_values((*target_critics_[0])(s2, z2));
    if (twin) {
      const auto other = copy_values((*target_critics_[1])(s2, z2));
      twin_targets = td_targets(c.rewards, next_q, c.done, config_.gamma);
      const auto t2 = td_targets(c.rewards, other, c.done, config_.gamma);
      twin_targets.insert(twin_targets.end(), t2.begin(), t2.end());
      for (std::size_t i = 0; i < n; ++i) next_q[i] = std::min(next_q[i], other[i]);
    }
  }
  const auto targets = td_targets(c.rewards, next_q, c.done, config_.gamma);

  auto s_fixed = probe(state);
  auto action = probe(Tensor::from({n, d}, c.z));
  zero_grads(all_parameters());
  auto q = (*critics_[0])(s_fixed, action);
  auto td = td_loss(q, targets);
  note_q(report, q);
  if (twin) {
    auto q2 = (*critics_[1])(s_fixed, action);
    td = nn::add(td, td_loss(q2, targets));
    note_q(report, q2);
  }
  td.backward();
  critic_opt_->step();
  report.td = td.item();

  zero_grads(all_parameters());
  auto s_actor = probe(state);
  auto z = policy_->propose_hyper_action(state, 0.0, SamplingMode::kDeterministic).mean;
  auto value = (*critics_[0])(s_actor, z);
  if (twin) value = nn::minimum(value, (*critics_[1])(s_actor, z));
  auto qmax = qmax_loss(value);
  qmax.backward();
  nn::zero_grads(critic_params_);
  actor_opt_->step();
  report.qmax = qmax.item();

  if (trace_ != nullptr) {
    trace_->td_state = s_fixed;
    trace_->td_action = action;
    trace_->qmax_state = s_actor;
    trace_->qmax_action = z;
    trace_->td_targets = targets;
    trace_->twin_targets = twin_targets;
  }
  soft_update_targets();
  return report;
}

LossReport Agent::step_a2c(std::span<const Transition> batch) {
  const auto k = policy_->config().list_size;
  const auto c = unpack(batch, k, policy_->dim(), false);
  LossReport report;
  report.trained = true;

  auto state = policy_->encode_state(c.obs, train_context());
  std::vector<double> next_v;
  {
    nn::NoGradGuard no_grad;
    next_v = copy_values((*value_)(policy_->encode_state(c.next)));
  }
  const auto targets = td_targets(c.rewards, next_v, c.done, config_.gamma);

  zero_grads(all_parameters());
  auto v = (*value_)(probe(state));
  std::vector<double> advantages(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) advantages[i] = targets[i] - v.at(i);
  auto v_loss = td_loss(v, targets);
  v_loss.backward();
  critic_opt_->step();
  report.td = v_loss.item();
  note_q(report, v);

  zero_grads(all_parameters());
  auto z = policy_->propose_hyper_action(state, 0.0, SamplingMode::kDeterministic).mean;
  auto log_prob = list_log_prob(policy_->score_items(z), c.items, k);
  auto pg = pg_loss(log_prob, advantages);
  pg.backward();
  actor_opt_->step();
  report.aux = pg.item();
  if (trace_ != nullptr) trace_->td_targets = targets;
  return report;
}

LossReport Agent::step_supervised(std::span<const Observation> obs, std::span<const ItemId> items,
                                  std::span<const std::uint8_t> feedback) {
  LossReport report;
  report.trained = true;
  report.bce = step_bce(obs, items, feedback);
  return report;
}

double Agent::step_hyper(std::span<const Observation> obs) {
  const auto k = policy_->config().list_size;
  zero_grads(all_parameters());
  auto z = policy_->propose_hyper_action(policy_->encode_state(obs, train_context()), 0.0,
                                         SamplingMode::kDeterministic)
               .mean;
  std::vector<ItemId> greedy;
  {
    nn::NoGradGuard no_grad;
    greedy = topk_rows(policy_->score_items(z), k);
  }
  auto z_hat = critic::inverse_pool(policy_->item_kernel(), greedy, k);
  auto loss = nn::scale(hyper_loss(z, z_hat), config_.hyper_weight);
  loss.backward();
  hyper_opt_->step();
  return loss.item();
}

double Agent::step_bce(std::span<const Observation> obs, std::span<const ItemId> items,
                       std::span<const std::uint8_t> feedback) {
  const auto k = policy_->config().list_size;
  zero_grads(all_parameters());
  auto z = policy_->propose_hyper_action(policy_->encode_state(obs, train_context()), 0.0,
                                         SamplingMode::kDeterministic)
               .mean;
  auto loss = bce_supervision_loss(policy_->score_items(z), items, k, feedback);
  loss.backward();
  supervision_opt_->step();
  return loss.item();
}

double Agent::step_ra(std::span<const Observation> obs, std::span<const Observation> next,
                      std::span<const ItemId> items) {
  const auto k = policy_->config().list_size;
  zero_grads(all_parameters());
  auto ctx = train_context();
  auto s = policy_->encode_state(obs, ctx);
  auto s2 = policy_->encode_state(next, ctx);
  auto e = (*ra_head_)(nn::concat({s, s2}, 1));
  auto loss = ra_align_loss(nn::matmul_nt(e, policy_->item_kernel()), items, k);
  loss.backward();
  ra_opt_->step();
  return loss.item();
}

void Agent::soft_update_targets() {
  critic::soft_update(target_policy_->parameters(), policy_->parameters(), config_.tau);
  for (std::size_t i = 0; i < critics_.size(); ++i) {
    critic::soft_update(target_critics_[i]->parameters(), critics_[i]->parameters(), config_.tau);
  }
}

void Agent::save(const std::filesystem::path& directory) const {
  std::filesystem::create_directories(directory);
  policy_->save(directory / "policy");
  const auto fingerprint = config_.to_json().dump() + policy_->config().to_json().dump();
  nn::write_parameter_file(directory / "agent.bin", fingerprint, all_parameters());
  std::ofstream out(directory / "train_config.json");
  out << config_.to_json().dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write agent config in " + directory.string());
}

void Agent::load(const std::filesystem::path& directory) {
  const auto fingerprint = config_.to_json().dump() + policy_->config().to_json().dump();
  nn::read_parameter_file(directory / "agent.bin", fingerprint, all_parameters());
}

Trainer::Trainer(Agent& agent, env::Environment& environment, std::uint64_t seed, const data::SessionLog* offline_log)
    : agent_(agent),
      env_(environment),
      offline_(offline_log),
      buffer_(agent.config().buffer_capacity, agent.config().buffer_threshold),
      rng_(seed) {
  if (agent.config().algorithm == Algorithm::kOfflineSL && (offline_ == nullptr || offline_->records.empty())) {
    throw std::invalid_argument("OfflineSL needs a non-empty training log");
  }
}

std::vector<Transition> Trainer::collect() {
  if (!started_) {
    env_.reset(agent_.config().episodes);
    started_ = true;
  }
  const auto n = env_.batch_size();
  std::vector<Observation> obs;
  obs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) obs.push_back(env_.session(i).observation);
  auto actions = agent_.act(obs, ActMode::kExplore, rng_);
  auto results = env_.step(actions.slates);
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = results[i];
    out.push_back({std::move(obs[i]), std::move(actions.slates[i]), std::move(r.feedback), r.reward,
                   std::move(r.next), r.done, std::move(actions.hyper_actions[i])});
    if (r.done) {
      ++finished_;
      env_.reset_session(i);
    }
  }
  return out;
}

LossReport Trainer::iterate() {
  ++iteration_;
  LossReport report;
  const auto& cfg = agent_.config();
  if (cfg.algorithm == Algorithm::kOfflineSL) {
    std::uniform_int_distribution<std::size_t> pick(0, offline_->records.size() - 1);
    std::vector<data::InteractionRecord> batch;
    batch.reserve(cfg.batch_size);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) batch.push_back(offline_->records[pick(rng_)]);
    report = agent_.update_offline(batch);
  } else {
    auto fresh = collect();
    if (uses_replay(cfg.algorithm)) {
      for (auto& t : fresh) buffer_.push(std::move(t));
      if (buffer_.ready()) report = agent_.update(buffer_.sample(cfg.batch_size, rng_));
    } else {
      report = agent_.update(fresh);
    }
  }
  report.iteration = iteration_;
  return report;
}

}  // namespace hac::agents

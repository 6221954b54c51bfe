#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "hac/agents/agent.hpp"
#include "hac/agents/losses.hpp"
#include "hac/nn/gradcheck.hpp"
#include "hac/nn/ops.hpp"
#include "hac/nn/optim.hpp"
#include "test_support.hpp"

using namespace hac::agents;
using hac::nn::Tensor;
using hac::testing::find_param;
using hac::testing::max_abs_diff;
using hac::testing::random_tensor;
using hac::testing::snapshot;
using hac::testing::three_sigma;

namespace {

constexpr std::size_t kCatalog = 30;
constexpr std::size_t kSlate = 3;
constexpr std::size_t kDim = 8;

hac::policy::PolicyConfig policy_config() {
  hac::policy::PolicyConfig c;
  c.catalog_size = kCatalog;
  c.list_size = kSlate;
  c.feature_cardinalities = {5};
  c.dim = kDim;
  c.max_history = 6;
  c.layers = 1;
  c.heads = 2;
  c.dropout = 0.0;
  c.user_hidden = {8};
  c.init_std = 0.3;
  c.seed = 1;
  return c;
}

TrainConfig train_config(Algorithm algorithm) {
  TrainConfig c;
  c.algorithm = algorithm;
  c.critic_hidden = {16, 8};
  c.actor_lr = 1e-3;
  c.critic_lr = 1e-3;
  c.supervision_lr = 1e-3;
  c.alignment_lr = 1e-3;
  c.batch_size = 16;
  c.episodes = 4;
  c.buffer_capacity = 1000;
  c.buffer_threshold = 20;
  c.seed = 3;
  return c;
}

std::vector<Transition> random_batch(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Transition> out;
  std::normal_distribution<double> gauss(0.0, 0.5);
  for (std::size_t i = 0; i < n; ++i) {
    Transition t;
    t.observation.user_features = {static_cast<std::int64_t>(rng() % 5)};
    for (std::size_t h = rng() % 5; h > 0; --h) t.observation.history.push_back(static_cast<ItemId>(rng() % kCatalog));
    std::vector<ItemId> all(kCatalog);
    for (std::size_t j = 0; j < kCatalog; ++j) all[j] = static_cast<ItemId>(j);
    std::shuffle(all.begin(), all.end(), rng);
    t.action.assign(all.begin(), all.begin() + kSlate);
    t.next = t.observation;
    for (auto item : t.action) {
      const std::uint8_t y = rng() % 2;
      t.feedback.push_back(y);
      if (y) t.next.history.push_back(item);
    }
    t.reward = hac::env::slate_reward(t.feedback);
    t.done = rng() % 4 == 0;
    for (std::size_t j = 0; j < kDim; ++j) t.hyper_action.push_back(gauss(rng));
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<double> policy_snapshot(const Agent& a) { return snapshot(a.policy().parameters()); }

std::vector<double> critic_snapshot(const Agent& a) {
  std::vector<double> out;
  for (std::size_t i = 0; i < a.critic_count(); ++i) {
    auto s = snapshot(a.critic(i).parameters());
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

std::vector<double> kernel_snapshot(const Agent& a) { return snapshot({{"", a.policy().item_kernel()}}); }

}  // namespace

TEST_CASE("replay buffer evicts strictly first-in first-out") {
  ReplayBuffer buffer(100000, 2000);
  for (std::size_t i = 0; i <= 100000; ++i) {
    Transition t;
    t.reward = static_cast<double>(i);
    buffer.push(std::move(t));
  }
  CHECK(buffer.size() == 100000);
  CHECK(buffer.at(0).reward == 1.0);
  CHECK(buffer.at(99999).reward == 100000.0);

  ReplayBuffer small(1000, 20);
  for (std::size_t i = 0; i < 2500; ++i) {
    Transition t;
    t.reward = static_cast<double>(i);
    small.push(std::move(t));
  }
  CHECK(small.size() == 1000);
  for (std::size_t i = 0; i < 1000; ++i) CHECK(small.at(i).reward == static_cast<double>(1500 + i));
}

TEST_CASE("sampling is disabled below the fill threshold") {
  ReplayBuffer buffer(100000, 2000);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1999; ++i) buffer.push({});
  CHECK_FALSE(buffer.ready());
  CHECK_THROWS_AS(buffer.sample(4, rng), BufferUnderfilledError);
  buffer.push({});
  CHECK(buffer.ready());
  CHECK(buffer.sample(4, rng).size() == 4);
  CHECK_THROWS_AS(ReplayBuffer(10, 11), std::invalid_argument);
}

TEST_CASE("uniform sampling over a 100-item buffer") {
  ReplayBuffer buffer(1000, 20);
  for (int i = 0; i < 100; ++i) buffer.push({});
  std::mt19937_64 rng(7);
  std::vector<std::size_t> counts(100, 0);
  const std::size_t draws = 100000;
  for (auto i : buffer.sample_indices(draws, rng)) ++counts[i];
  for (auto c : counts) CHECK(std::abs(static_cast<double>(c) / draws - 0.01) <= three_sigma(0.01, draws));
}

TEST_CASE("TD loss hand cases") {
  SUBCASE("terminal transitions do not bootstrap") {
    const std::vector<double> r = {0.5}, next = {123.0};
    const std::vector<std::uint8_t> done = {1};
    auto t = td_targets(r, next, done, 0.9);
    CHECK(t[0] == 0.5);
    CHECK(td_loss(Tensor::from({1}, {0.5}), t).item() == 0.0);
  }
  SUBCASE("r = 0.28, gamma = 0.9, next Q = 1, Q = 1") {
    const std::vector<double> r = {0.28}, next = {1.0};
    const std::vector<std::uint8_t> done = {0};
    auto loss = td_loss(Tensor::from({1}, {1.0}), td_targets(r, next, done, 0.9)).item();
    // 0.28 and 0.9 are not representable; the result sits within a few ulps of 0.0324.
    CHECK(std::abs(loss - 0.0324) <= 1e-16);
  }
  SUBCASE("gamma 0 regresses on the immediate reward") {
    const std::vector<double> r = {0.3, -0.2}, next = {5.0, -7.0};
    const std::vector<std::uint8_t> done = {0, 0};
    auto t = td_targets(r, next, done, 0.0);
    CHECK(t == r);
    CHECK(td_loss(Tensor::from({2}, {1.3, 0.8}), t).item() == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK_THROWS_AS(td_targets(std::vector<double>{1.0}, std::vector<double>{1.0}, std::vector<std::uint8_t>{0}, 1.0),
                  std::invalid_argument);
}

TEST_CASE("a Q-max step moves Z along the linear critic's weight") {
  auto w = Tensor::from({3, 1}, {0.5, -2.0, 1.0});
  auto z = Tensor::from({1, 3}, {0.1, 0.2, 0.3}, true);
  auto q_of = [&] { return hac::nn::reshape(hac::nn::matmul(z, w), {1}); };
  const double before = q_of().item();
  hac::nn::Adam opt({{"z", z}}, {.learning_rate = 0.01});
  auto loss = qmax_loss(q_of());
  CHECK(loss.item() == -before);
  loss.backward();
  opt.step();
  CHECK(q_of().item() > before);
}

TEST_CASE("hyper-action alignment loss") {
  auto z = Tensor::from({1, 2}, {3.0, 4.0});
  CHECK(hyper_loss(z, Tensor::zeros({1, 2})).item() == 25.0);
  CHECK(hyper_loss(z, z.clone()).item() == 0.0);
  CHECK(hyper_loss(Tensor::from({2, 2}, {3, 4, 0, 0}), Tensor::zeros({2, 2})).item() == 12.5);
}

TEST_CASE("alignment loss decreases over 100 steps on a frozen toy catalog") {
  auto kernel = random_tensor({10, 4}, 11);
  auto z = random_tensor({2, 4}, 12, 3.0, true);
  hac::nn::Adam opt({{"z", z}}, {.learning_rate = 0.05});
  auto loss_now = [&] {
    std::vector<ItemId> greedy;
    {
      hac::nn::NoGradGuard no_grad;
      auto scores = hac::nn::matmul_nt(z, kernel);
      for (std::size_t b = 0; b < 2; ++b) {
        auto a = hac::policy::select_effect_action(scores.values().subspan(b * 10, 10), 3,
                                                   hac::policy::SelectionMode::kTopK, nullptr);
        greedy.insert(greedy.end(), a.items.begin(), a.items.end());
      }
    }
    return hyper_loss(z, hac::critic::inverse_pool(kernel, greedy, 3));
  };
  const double initial = loss_now().item();
  double last = initial;
  for (int step = 0; step < 100; ++step) {
    auto loss = loss_now();
    last = loss.item();
    loss.backward();
    opt.step();
  }
  CHECK(last < 0.5 * initial);
}

TEST_CASE("item-level BCE hand cases") {
  const std::vector<ItemId> items = {0, 1};
  const std::vector<std::uint8_t> y = {1, 0};
  auto half = bce_supervision_loss(Tensor::from({1, 2}, {0.3, 0.3}), items, 2, y);
  CHECK(half.item() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));
  auto perfect = bce_supervision_loss(Tensor::from({1, 2}, {0.0, -1000.0}), items, 2, y);
  CHECK(perfect.item() == 0.0);
  auto worst = bce_supervision_loss(Tensor::from({1, 2}, {-1000.0, 0.0}), items, 2, y);
  CHECK(std::isfinite(worst.item()));
  CHECK(worst.item() == doctest::Approx(-2.0 * std::log(kProbabilityClamp)).epsilon(1e-12));
}

TEST_CASE("BCE kernel gradient: exposed row direct, other rows only through the normalizer") {
  auto kernel = Tensor::from({3, 2}, {0.2, -0.1, 0.5, 0.3, -0.4, 0.7}, true);
  auto z = Tensor::from({1, 2}, {1.5, -0.5});
  const std::vector<ItemId> items = {0};
  const std::vector<std::uint8_t> y = {1};
  bce_supervision_loss(hac::nn::matmul_nt(z, kernel), items, 1, y).backward();
  // loss = -log p_0  =>  dL/dPhi_j = (p_j - [j == 0]) z
  std::vector<double> logits(3), p(3);
  double total = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    logits[j] = 1.5 * kernel.at(2 * j) - 0.5 * kernel.at(2 * j + 1);
    total += std::exp(logits[j]);
  }
  for (std::size_t j = 0; j < 3; ++j) p[j] = std::exp(logits[j]) / total;
  const auto g = kernel.grad();
  for (std::size_t j = 0; j < 3; ++j) {
    const double coef = p[j] - (j == 0 ? 1.0 : 0.0);
    CHECK(g[2 * j] == doctest::Approx(coef * 1.5).epsilon(1e-12));
    CHECK(g[2 * j + 1] == doctest::Approx(coef * -0.5).epsilon(1e-12));
  }
  CHECK(std::abs(g[0]) > 0.0);
}

TEST_CASE("policy-gradient loss") {
  const std::vector<ItemId> items = {1, 3};
  auto logits = Tensor::from({1, 5}, {0.1, 0.2, -0.3, 0.4, 0.0}, true);
  SUBCASE("zero advantage gives a zero gradient") {
    pg_loss(list_log_prob(logits, items, 2), std::vector<double>{0.0}).backward();
    for (double g : logits.grad()) CHECK(g == 0.0);
  }
  SUBCASE("positive advantage raises the taken list's log-probability") {
    const double before = list_log_prob(logits, items, 2).item();
    hac::nn::Adam opt({{"logits", logits}}, {.learning_rate = 0.01});
    pg_loss(list_log_prob(logits, items, 2), std::vector<double>{1.5}).backward();
    opt.step();
    CHECK(list_log_prob(logits, items, 2).item() > before);
  }
  SUBCASE("value target at a terminal step is the reward") {
    auto t = td_targets(std::vector<double>{0.28}, std::vector<double>{4.0}, std::vector<std::uint8_t>{1}, 0.9);
    CHECK(t[0] == 0.28);
  }
}

TEST_CASE("inverse-dynamics alignment loss") {
  const std::vector<ItemId> one = {0};
  CHECK(ra_align_loss(Tensor::from({1, 4}, {0.0, -1000.0, -1000.0, -1000.0}), one, 1).item() == 0.0);
  const std::vector<ItemId> three = {2, 5, 6};
  CHECK(ra_align_loss(Tensor::zeros({1, 7}), three, 3).item() == doctest::Approx(3.0 * std::log(7.0)).epsilon(1e-14));
}

TEST_CASE("all losses pass finite-difference gradient checks") {
  const std::vector<ItemId> items = {0, 2, 1, 3};
  const std::vector<std::uint8_t> y = {1, 0, 0, 1};
  const std::vector<double> targets = {0.3, -0.1};
  auto q = random_tensor({2}, 1, 1.0, true);
  auto z = random_tensor({2, 3}, 2, 1.0, true);
  auto kernel = random_tensor({5, 3}, 3, 1.0, true);
  auto scores = random_tensor({2, 5}, 4, 1.0, true);
  auto check = [](hac::nn::ParameterList params, const std::function<Tensor()>& f) {
    return hac::nn::check_gradients(params, f).max_rel_error();
  };
  CHECK(check({{"q", q}}, [&] { return td_loss(q, targets); }) <= 1e-4);
  CHECK(check({{"q", q}}, [&] { return qmax_loss(q); }) <= 1e-4);
  CHECK(check({{"z", z}, {"kernel", kernel}},
              [&] { return hyper_loss(z, hac::critic::inverse_pool(kernel, items, 2)); }) <= 1e-4);
  CHECK(check({{"scores", scores}}, [&] { return bce_supervision_loss(scores, items, 2, y); }) <= 1e-4);
  CHECK(check({{"z", z}, {"kernel", kernel}},
              [&] { return bce_supervision_loss(hac::nn::matmul_nt(z, kernel), items, 2, y); }) <= 1e-4);
  CHECK(check({{"scores", scores}}, [&] { return pg_loss(list_log_prob(scores, items, 2), targets); }) <= 1e-4);
  CHECK(check({{"scores", scores}}, [&] { return ra_align_loss(scores, items, 2); }) <= 1e-4);
}

TEST_CASE("algorithm tags and train config serialization") {
  for (auto tag : {"HAC", "DDPG", "TD3", "A2C", "OnlineSL", "OfflineSL", "DDPG-RA"}) {
    CHECK(to_string(algorithm_from_string(tag)) == tag);
  }
  CHECK_THROWS_AS(algorithm_from_string("PPO"), std::invalid_argument);
  auto c = train_config(Algorithm::kTD3);
  c.critic_input = CriticInput::kHyper;
  auto back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(TrainConfig{}.gamma == 0.9);
  c.gamma = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.gamma = 0.9;
  c.hyper_weight = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("an HAC step changes actor, critic and kernel") {
  Agent agent(policy_config(), train_config(Algorithm::kHAC));
  const auto batch = random_batch(16, 5);
  const auto p0 = policy_snapshot(agent), c0 = critic_snapshot(agent), k0 = kernel_snapshot(agent);
  const auto report = agent.update(batch);
  CHECK(report.td.has_value());
  CHECK(report.qmax.has_value());
  CHECK(report.hyper.has_value());
  CHECK(report.bce.has_value());
  CHECK(max_abs_diff(p0, policy_snapshot(agent)) > 0.0);
  CHECK(max_abs_diff(c0, critic_snapshot(agent)) > 0.0);
  CHECK(max_abs_diff(k0, kernel_snapshot(agent)) > 0.0);
}

TEST_CASE("HAC critic learns on effect-actions and the actor on hyper-actions") {
  auto cfg = train_config(Algorithm::kHAC);
  cfg.hyper_weight = 0.0;
  cfg.supervision_lr = 0.0;
  Agent agent(policy_config(), cfg);
  const auto batch = random_batch(8, 6);
  std::vector<ItemId> items;
  for (const auto& t : batch) items.insert(items.end(), t.action.begin(), t.action.end());
  const auto pooled = hac::critic::inverse_pool(agent.policy().item_kernel().clone(), items, kSlate);
  StepTrace trace;
  agent.set_trace(&trace);
  agent.update(batch);
  REQUIRE(trace.td_action.has_grad());
  CHECK(snapshot({{"", trace.td_action}}) == snapshot({{"", pooled}}));
  CHECK(trace.td_action.values()[0] != batch[0].hyper_action[0]);
  REQUIRE(trace.qmax_action.has_grad());
  double norm = 0.0;
  for (double g : trace.qmax_action.grad()) norm += std::abs(g);
  CHECK(norm > 0.0);
}

TEST_CASE("Q-max leaves the critic untouched and a frozen actor gives a constant loss") {
  auto cfg = train_config(Algorithm::kHAC);
  cfg.critic_lr = 0.0;
  cfg.hyper_weight = 0.0;
  cfg.supervision_lr = 0.0;
  Agent agent(policy_config(), cfg);
  const auto batch = random_batch(16, 8);
  const auto c0 = critic_snapshot(agent), p0 = policy_snapshot(agent);
  agent.update(batch);
  CHECK(critic_snapshot(agent) == c0);
  CHECK(max_abs_diff(p0, policy_snapshot(agent)) > 0.0);

  cfg.actor_lr = 0.0;
  Agent frozen(policy_config(), cfg);
  const auto a = frozen.update(batch);
  const auto b = frozen.update(batch);
  CHECK(*a.qmax == *b.qmax);
}

TEST_CASE("HAC without supervision or alignment and with a hyper-action critic matches DDPG") {
  auto hac_cfg = train_config(Algorithm::kHAC);
  hac_cfg.supervision_lr = 0.0;
  hac_cfg.hyper_weight = 0.0;
  hac_cfg.critic_input = CriticInput::kHyper;
  auto ddpg_cfg = hac_cfg;
  ddpg_cfg.algorithm = Algorithm::kDDPG;
  auto pc = policy_config();
  pc.dropout = 0.1;  // exercises the shared random stream
  Agent hac(pc, hac_cfg), ddpg(pc, ddpg_cfg);
  for (std::uint64_t step = 0; step < 5; ++step) {
    const auto batch = random_batch(16, 20 + step);
    hac.update(batch);
    ddpg.update(batch);
  }
  CHECK(max_abs_diff(snapshot(hac.all_parameters()), snapshot(ddpg.all_parameters())) <= 1e-10);
}

TEST_CASE("TD3 bootstraps from the smaller of its twin target critics") {
  Agent agent(policy_config(), train_config(Algorithm::kTD3));
  CHECK(agent.critic_count() == 2);
  StepTrace trace;
  agent.set_trace(&trace);
  const auto batch = random_batch(16, 9);
  agent.update(batch);
  REQUIRE(trace.twin_targets.size() == 32);
  bool strict = false;
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(trace.td_targets[i] <= trace.twin_targets[i]);
    CHECK(trace.td_targets[i] <= trace.twin_targets[16 + i]);
    CHECK(trace.td_targets[i] == std::min(trace.twin_targets[i], trace.twin_targets[16 + i]));
    strict = strict || trace.twin_targets[i] != trace.twin_targets[16 + i];
  }
  CHECK(strict);
}

TEST_CASE("every algorithm leaves parameters unchanged when all learning rates are zero") {
  for (auto algo : {Algorithm::kHAC, Algorithm::kDDPG, Algorithm::kTD3, Algorithm::kA2C, Algorithm::kOnlineSL,
                    Algorithm::kOfflineSL, Algorithm::kDDPGRA}) {
    CAPTURE(to_string(algo));
    auto cfg = train_config(algo);
    cfg.actor_lr = cfg.critic_lr = cfg.supervision_lr = cfg.alignment_lr = 0.0;
    Agent agent(policy_config(), cfg);
    const auto before = snapshot(agent.all_parameters());
    const auto batch = random_batch(16, 10);
    if (algo == Algorithm::kOfflineSL) {
      std::vector<hac::data::InteractionRecord> records;
      for (const auto& t : batch) {
        records.push_back({"s", "u", t.observation.user_features, t.observation.history, t.action, t.feedback, 0});
      }
      agent.update_offline(records);
    } else {
      agent.update(batch);
    }
    CHECK(snapshot(agent.all_parameters()) == before);
  }
}

TEST_CASE("inverse-dynamics loss decreases under DDPG-RA training") {
  auto cfg = train_config(Algorithm::kDDPGRA);
  cfg.alignment_lr = 3e-3;
  Agent agent(policy_config(), cfg);
  const auto batch = random_batch(16, 11);
  const double first = *agent.update(batch).aux;
  double last = first;
  for (int i = 0; i < 60; ++i) last = *agent.update(batch).aux;
  CHECK(last < first);
}

TEST_CASE("A2C and the supervised baselines report their losses") {
  const auto batch = random_batch(16, 12);
  Agent a2c(policy_config(), train_config(Algorithm::kA2C));
  CHECK(a2c.value_network() != nullptr);
  const auto r = a2c.update(batch);
  CHECK(r.td.has_value());
  CHECK(r.aux.has_value());
  CHECK_FALSE(r.qmax.has_value());
  Agent online(policy_config(), train_config(Algorithm::kOnlineSL));
  const auto first = *online.update(batch).bce;
  double last = first;
  for (int i = 0; i < 30; ++i) last = *online.update(batch).bce;
  CHECK(last < first);
  Agent offline(policy_config(), train_config(Algorithm::kOfflineSL));
  CHECK_THROWS_AS(offline.update(batch), std::logic_error);
}

TEST_CASE("large critic values raise the divergence warning") {
  auto cfg = train_config(Algorithm::kDDPG);
  cfg.q_warning = -1e9;
  Agent agent(policy_config(), cfg);
  CHECK(agent.update(random_batch(8, 13)).q_warning);
  Agent quiet(policy_config(), train_config(Algorithm::kDDPG));
  CHECK_FALSE(quiet.update(random_batch(8, 13)).q_warning);
}

TEST_CASE("greedy acting is deterministic and exploring acting follows sigma") {
  Agent agent(policy_config(), train_config(Algorithm::kHAC));
  const auto batch = random_batch(4, 14);
  std::vector<Observation> obs;
  for (const auto& t : batch) obs.push_back(t.observation);
  std::mt19937_64 r1(1), r2(2);
  auto g1 = agent.act(obs, ActMode::kGreedy, r1);
  auto g2 = agent.act(obs, ActMode::kGreedy, r2);
  CHECK(g1.slates == g2.slates);
  CHECK(g1.hyper_actions == g2.hyper_actions);
  auto e = agent.act(obs, ActMode::kExplore, r1);
  CHECK(e.hyper_actions != g1.hyper_actions);
  for (const auto& s : e.slates) CHECK(s.size() == kSlate);
}

TEST_CASE("agent checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "hac_unit" / "agent_ckpt";
  Agent a(policy_config(), train_config(Algorithm::kTD3));
  a.update(random_batch(16, 15));
  a.save(dir);
  Agent b(policy_config(), train_config(Algorithm::kTD3));
  b.load(dir);
  CHECK(snapshot(a.all_parameters()) == snapshot(b.all_parameters()));
  Agent c(policy_config(), train_config(Algorithm::kDDPG));
  CHECK_THROWS(c.load(dir));
}

namespace {

struct TinyWorld {
  std::shared_ptr<hac::env::ResponseModel> model;
  std::vector<Observation> pool;
  hac::data::SessionLog log;
};

TinyWorld tiny_world() {
  TinyWorld w;
  hac::env::ResponseModelConfig rc;
  rc.catalog_size = kCatalog;
  rc.list_size = kSlate;
  rc.feature_cardinalities = {5};
  rc.embed_dim = 8;
  rc.max_history = 6;
  rc.init_std = 0.5;
  w.model = std::make_shared<hac::env::ResponseModel>(rc);
  for (std::int64_t u = 0; u < 5; ++u) w.pool.push_back({{u}, {u, u + 1}});
  w.log.catalog_size = kCatalog;
  w.log.list_size = kSlate;
  w.log.feature_cardinalities = {5};
  for (const auto& t : random_batch(40, 30)) {
    w.log.records.push_back({"s", "u", t.observation.user_features, t.observation.history, t.action, t.feedback, 0});
  }
  return w;
}

std::vector<double> run_trainer(Algorithm algo, std::size_t iterations, std::vector<LossReport>* reports = nullptr) {
  auto w = tiny_world();
  hac::env::Environment env(w.model, w.pool, {.seed = 4});
  Agent agent(policy_config(), train_config(algo));
  Trainer trainer(agent, env, 9, &w.log);
  for (std::size_t i = 0; i < iterations; ++i) {
    auto r = trainer.iterate();
    if (reports) reports->push_back(r);
  }
  return snapshot(agent.all_parameters());
}

}  // namespace

TEST_CASE("trainer waits for the replay threshold before updating") {
  std::vector<LossReport> reports;
  run_trainer(Algorithm::kHAC, 8, &reports);
  // 4 sessions per iteration, threshold 20: the first update happens at iteration 5.
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(reports[i].iteration == i + 1);
    CHECK(reports[i].trained == (i >= 4));
  }
}

TEST_CASE("on-policy and offline baselines update every iteration") {
  for (auto algo : {Algorithm::kA2C, Algorithm::kOnlineSL, Algorithm::kOfflineSL}) {
    std::vector<LossReport> reports;
    run_trainer(algo, 3, &reports);
    for (const auto& r : reports) CHECK(r.trained);
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  for (auto algo : {Algorithm::kHAC, Algorithm::kTD3, Algorithm::kA2C}) {
    CHECK(run_trainer(algo, 8) == run_trainer(algo, 8));
  }
}

TEST_CASE("OfflineSL requires a training log") {
  auto w = tiny_world();
  hac::env::Environment env(w.model, w.pool, {});
  Agent agent(policy_config(), train_config(Algorithm::kOfflineSL));
  CHECK_THROWS_AS(Trainer(agent, env, 1), std::invalid_argument);
}

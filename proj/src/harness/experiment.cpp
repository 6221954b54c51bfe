#include "hac/harness/experiment.hpp"

#include <chrono>
#include <fstream>
#include <stdexcept>
#include <tuple>

#include "hac/data/preprocess.hpp"
#include "hac/nn/tensor.hpp"

namespace hac::harness {

namespace {

nlohmann::json synth_to_json(const data::SynthConfig& s) {
  return {{"n_users", s.n_users},         {"n_items", s.n_items},
          {"k", s.k},                     {"n_records", s.n_records},
          {"latent_dim", s.latent_dim},   {"noise_scale", s.noise_scale},
          {"seed", s.seed},               {"exposure_noise", s.exposure_noise},
          {"label_offset", s.label_offset}, {"max_history", s.max_history}};
}

data::SynthConfig synth_from_json(const nlohmann::json& j) {
  data::SynthConfig s;
  s.n_users = j.value("n_users", s.n_users);
  s.n_items = j.value("n_items", s.n_items);
  s.k = j.value("k", s.k);
  s.n_records = j.value("n_records", s.n_records);
  s.latent_dim = j.value("latent_dim", s.latent_dim);
  s.noise_scale = j.value("noise_scale", s.noise_scale);
  s.seed = j.value("seed", s.seed);
  s.exposure_noise = j.value("exposure_noise", s.exposure_noise);
  s.label_offset = j.value("label_offset", s.label_offset);
  s.max_history = j.value("max_history", s.max_history);
  s.validate();
  return s;
}

nlohmann::json fit_to_json(const env::ResponseFitOptions& f) {
  return {{"epochs", f.epochs},
          {"batch_size", f.batch_size},
          {"learning_rate", f.learning_rate},
          {"weight_decay", f.weight_decay},
          {"heldout_fraction", f.heldout_fraction},
          {"seed", f.seed}};
}

env::ResponseFitOptions fit_from_json(const nlohmann::json& j) {
  env::ResponseFitOptions f;
  f.epochs = j.value("epochs", f.epochs);
  f.batch_size = j.value("batch_size", f.batch_size);
  f.learning_rate = j.value("learning_rate", f.learning_rate);
  f.weight_decay = j.value("weight_decay", f.weight_decay);
  f.heldout_fraction = j.value("heldout_fraction", f.heldout_fraction);
  f.seed = j.value("seed", f.seed);
  return f;
}

nlohmann::json policy_to_json(const policy::PolicyConfig& p) {
  return {{"dim", p.dim},         {"max_history", p.max_history}, {"layers", p.layers},
          {"heads", p.heads},     {"dropout", p.dropout},         {"user_hidden", p.user_hidden},
          {"init_std", p.init_std}};
}

policy::PolicyConfig policy_from_json(const nlohmann::json& j) {
  policy::PolicyConfig p;
  p.dim = j.value("dim", p.dim);
  p.max_history = j.value("max_history", p.max_history);
  p.layers = j.value("layers", p.layers);
  p.heads = j.value("heads", p.heads);
  p.dropout = j.value("dropout", p.dropout);
  p.user_hidden = j.value("user_hidden", p.user_hidden);
  p.init_std = j.value("init_std", p.init_std);
  return p;
}

nlohmann::json fit_report_json(const env::ResponseFitReport& r) {
  return {{"initial_loss", r.initial_loss},
          {"final_loss", r.final_loss},
          {"epoch_losses", r.epoch_losses},
          {"heldout_auc", r.heldout_auc},
          {"train_records", r.train_records},
          {"heldout_records", r.heldout_records}};
}

nlohmann::json metrics_json(const AggregateMetrics& m) {
  return {{"sessions", m.sessions},
          {"mean_total_reward", m.mean_total_reward},
          {"mean_depth", m.mean_depth},
          {"reward_variance", m.reward_variance}};
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::shared_ptr<env::ResponseModel> fit_model(const ExperimentConfig& config, const data::SessionLog& log,
                                              env::ResponseFitReport& report) {
  auto rc = env::ResponseModelConfig::for_log(log);
  rc.embed_dim = config.response_dim;
  rc.max_history = config.response_max_history;
  rc.seed = config.fit.seed;
  auto model = std::make_shared<env::ResponseModel>(rc);
  report = env::fit_response_model(*model, log, config.fit);
  return model;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (iterations == 0) throw std::invalid_argument("iteration budget must be positive");
  if (eval_sessions == 0) throw std::invalid_argument("evaluation session count must be positive");
  if (eval_every == 0) throw std::invalid_argument("evaluation cadence must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train fraction must lie in (0, 1)");
  if (response_dim == 0 || response_max_history == 0) throw std::invalid_argument("response model sizes must be positive");
  if (dataset.empty()) synth.validate();
  environment.validate();
  train.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"dataset", dataset},
          {"synth", synth_to_json(synth)},
          {"train_fraction", train_fraction},
          {"environment", environment.to_json()},
          {"response_dim", response_dim},
          {"response_max_history", response_max_history},
          {"fit", fit_to_json(fit)},
          {"policy", policy_to_json(policy)},
          {"train", train.to_json()},
          {"iterations", iterations},
          {"eval_every", eval_every},
          {"eval_sessions", eval_sessions},
          {"seed", seed},
          {"output_dir", output_dir},
          {"write_checkpoints", write_checkpoints}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
  ExperimentConfig c;
  const auto known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("unknown experiment config key '" + key + "'");
  }
  c.dataset = j.value("dataset", c.dataset);
  if (j.contains("synth")) c.synth = synth_from_json(j.at("synth"));
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  if (j.contains("environment")) c.environment = env::EnvConfig::from_json(j.at("environment"));
  c.response_dim = j.value("response_dim", c.response_dim);
  c.response_max_history = j.value("response_max_history", c.response_max_history);
  if (j.contains("fit")) c.fit = fit_from_json(j.at("fit"));
  if (j.contains("policy")) c.policy = policy_from_json(j.at("policy"));
  if (j.contains("train")) c.train = agents::TrainConfig::from_json(j.at("train"));
  c.iterations = j.value("iterations", c.iterations);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.eval_sessions = j.value("eval_sessions", c.eval_sessions);
  c.seed = j.value("seed", c.seed);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.write_checkpoints = j.value("write_checkpoints", c.write_checkpoints);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

data::SessionLog load_dataset(const ExperimentConfig& config) {
  if (config.dataset.empty()) return data::generate_synthetic(config.synth);
  return data::load_session_log(config.dataset);
}

Worlds prepare_worlds(const ExperimentConfig& config) {
  config.validate();
  Worlds w;
  w.log = load_dataset(config);
  w.log.validate();
  std::tie(w.train, w.test) = data::temporal_split(w.log, config.train_fraction);
  w.train_model = fit_model(config, w.train, w.train_fit);
  w.full_model = fit_model(config, w.log, w.full_fit);
  w.train_pool = env::observations_from_log(w.train);
  w.eval_pool = env::observations_from_log(w.log);
  return w;
}

policy::PolicyConfig policy_config_for(const ExperimentConfig& config, const data::SessionLog& log) {
  auto p = config.policy;
  p.catalog_size = log.catalog_size;
  p.list_size = log.list_size;
  p.feature_cardinalities = log.feature_cardinalities;
  p.seed = config.seed;
  return p;
}

std::uint64_t evaluation_seed(std::uint64_t seed) { return seed * 7919 + 104729; }

ExperimentResult train_and_evaluate(const ExperimentConfig& config, const Worlds& worlds, bool write,
                                    const ProgressCallback& progress) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::filesystem::path out_dir = config.output_dir;
  if (write) std::filesystem::create_directories(out_dir);

  auto train_cfg = config.train;
  train_cfg.seed = config.seed;
  agents::Agent agent(policy_config_for(config, worlds.log), train_cfg);
  auto env_cfg = config.environment;
  env_cfg.seed = config.seed;
  env::Environment train_env(worlds.train_model, worlds.train_pool, env_cfg);
  agents::Trainer trainer(agent, train_env, config.seed + 1, &worlds.train);

  ExperimentResult result;
  const auto eval_seed = evaluation_seed(config.seed);
  const auto algo = agents::to_string(train_cfg.algorithm);
  auto run_eval = [&](std::uint64_t iteration) {
    const auto sessions = evaluate_sessions(agent, worlds.full_model, worlds.eval_pool, config.environment,
                                            config.eval_sessions, eval_seed);
    for (std::size_t i = 0; i < sessions.size(); ++i) {
      result.sessions.push_back({iteration, i, sessions[i].total_reward, sessions[i].depth});
    }
    const auto m = aggregate(sessions);
    result.metrics.push_back({iteration, algo, config.seed, m.mean_total_reward, m.mean_depth, m.reward_variance});
    if (progress) progress(iteration, m);
    return m;
  };

  result.initial = run_eval(0);
  result.final = result.initial;
  for (std::uint64_t it = 1; it <= config.iterations; ++it) {
    agents::LossReport report;
    try {
      report = trainer.iterate();
    } catch (const nn::NumericError& e) {
      throw env::DivergenceError("training diverged at iteration " + std::to_string(it) + ": " + e.what());
    }
    if (report.trained) result.losses.push_back(report);
    if (it % config.eval_every == 0 || it == config.iterations) result.final = run_eval(it);
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (write) {
    write_metrics_csv(out_dir / "metrics.csv", result.metrics);
    write_loss_csv(out_dir / "losses.csv", result.losses);
    write_session_csv(out_dir / "sessions.csv", result.sessions);
    write_json(out_dir / "config.json", config.to_json());
    nlohmann::json meta = {{"algo", algo},
                           {"seed", config.seed},
                           {"gamma", train_cfg.gamma},
                           {"iterations", config.iterations},
                           {"eval_every", config.eval_every},
                           {"eval_sessions", config.eval_sessions},
                           {"evaluation_seed", eval_seed},
                           {"catalog_size", worlds.log.catalog_size},
                           {"list_size", worlds.log.list_size},
                           {"records", worlds.log.records.size()},
                           {"train_records", worlds.train.records.size()},
                           {"train_env_fit", fit_report_json(worlds.train_fit)},
                           {"full_env_fit", fit_report_json(worlds.full_fit)},
                           {"replay_size", trainer.buffer().size()},
                           {"finished_training_sessions", trainer.finished_sessions()},
                           {"initial", metrics_json(result.initial)},
                           {"final", metrics_json(result.final)},
                           {"seconds", result.seconds}};
    write_json(out_dir / "metadata.json", meta);
    if (config.write_checkpoints) {
      agent.save(out_dir / "checkpoints" / "final");
      env::Environment(worlds.train_model, worlds.train_pool, env_cfg).save(out_dir / "env" / "train");
      env::Environment(worlds.full_model, worlds.eval_pool, config.environment).save(out_dir / "env" / "full");
    }
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ProgressCallback& progress) {
  const auto worlds = prepare_worlds(config);
  return train_and_evaluate(config, worlds, true, progress);
}

}  // namespace hac::harness

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hac/data/preprocess.hpp"
#include "hac/data/synthetic.hpp"
#include "hac/harness/experiment.hpp"

namespace fs = std::filesystem;
using namespace hac;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string algo;
  std::string out;
  std::optional<std::size_t> iters;
};

harness::ExperimentConfig resolve(const Common& c) {
  auto cfg = c.config.empty() ? harness::ExperimentConfig{} : harness::ExperimentConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.algo.empty()) cfg.train.algorithm = agents::algorithm_from_string(c.algo);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.iters) cfg.iterations = *c.iters;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, Common& c, bool with_algo) {
  cmd->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "random seed");
  if (with_algo) cmd->add_option("--algo", c.algo, "HAC, DDPG, TD3, A2C, OnlineSL, OfflineSL or DDPG-RA");
  cmd->add_option("--iters", c.iters, "training iterations");
}

void print_metrics(std::uint64_t iteration, const harness::AggregateMetrics& m) {
  std::printf("iter %6llu  total_reward %.4f  depth %.3f  variance %.4f\n",
              static_cast<unsigned long long>(iteration), m.mean_total_reward, m.mean_depth, m.reward_variance);
  std::fflush(stdout);
}

void print_fit(const char* name, const env::ResponseFitReport& r) {
  std::printf("%s simulator: bce %.4f -> %.4f, held-out auc %.4f (%zu train / %zu held out)\n", name, r.initial_loss,
              r.final_loss, r.heldout_auc, r.train_records, r.heldout_records);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-action reinforcement learning for slate recommendation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic session log");
  Common synth_c;
  synth->add_option("--config", synth_c.config, "experiment config whose synth section is used")
      ->check(CLI::ExistingFile);
  synth->add_option("--seed", synth_c.seed, "generator seed");
  synth->add_option("--out", synth_c.out, "output TSV")->required();
  data::SynthConfig synth_cfg;
  synth->add_option("--users", synth_cfg.n_users);
  synth->add_option("--items", synth_cfg.n_items);
  synth->add_option("--k", synth_cfg.k, "slate size");
  synth->add_option("--records", synth_cfg.n_records);
  synth->add_option("--noise", synth_cfg.noise_scale, "label noise scale");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "binarize, segment and filter a raw event log");
  std::string pre_input, pre_rule = "rating_gt_3";
  std::size_t pre_list = 10, pre_kcore = 0, pre_hist = 50;
  double pre_split = 0.0;
  Common pre_c;
  pre->add_option("--input", pre_input, "events TSV: user_id, item, value, timestamp, user_features")
      ->required()
      ->check(CLI::ExistingFile);
  pre->add_option("--rule", pre_rule, "rating_gt_3, watch_ratio_gt_0.8 or identity");
  pre->add_option("--list-size", pre_list, "items per slate");
  pre->add_option("--kcore", pre_kcore, "minimum exposures per item (0 disables)");
  pre->add_option("--max-history", pre_hist);
  pre->add_option("--split", pre_split, "also write train/test logs with this train fraction");
  pre->add_option("--out", pre_c.out, "output session-log TSV")->required();

  // fit-env
  auto* fit = app.add_subcommand("fit-env", "fit the train-split and full-data user simulators");
  Common fit_c;
  add_common(fit, fit_c, false);
  fit->add_option("--out", fit_c.out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train an agent and evaluate it periodically");
  Common train_c;
  add_common(train, train_c, true);
  train->add_option("--out", train_c.out, "output directory");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "evaluate a trained checkpoint");
  Common eval_c;
  std::string run_dir;
  std::optional<std::size_t> sessions;
  eval->add_option("--run", run_dir, "directory written by train")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--seed", eval_c.seed, "evaluation seed");
  eval->add_option("--sessions", sessions, "number of sessions");
  eval->add_option("--out", eval_c.out, "write metrics.csv and sessions.csv here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      auto cfg = synth_c.config.empty() ? synth_cfg : harness::ExperimentConfig::load(synth_c.config).synth;
      if (synth_c.seed) cfg.seed = *synth_c.seed;
      const auto log = data::generate_synthetic(cfg);
      data::save_session_log(log, synth_c.out);
      std::printf("wrote %zu records (%zu items, k=%zu) to %s\n", log.records.size(), log.catalog_size,
                  log.list_size, synth_c.out.c_str());
    } else if (*pre) {
      const auto events = data::load_event_log(pre_input, data::binarize_rule_from_string(pre_rule));
      auto log = data::segment_sessions(events, pre_list, pre_hist);
      if (pre_kcore > 0) log = data::kcore_filter(log, pre_kcore);
      data::save_session_log(log, pre_c.out);
      std::printf("%zu events -> %zu records over %zu items\n", events.size(), log.records.size(), log.catalog_size);
      if (pre_split > 0.0) {
        const auto [tr, te] = data::temporal_split(log, pre_split);
        const fs::path base = pre_c.out;
        const auto stem = base.parent_path() / base.stem();
        data::save_session_log(tr, stem.string() + ".train.tsv");
        data::save_session_log(te, stem.string() + ".test.tsv");
        std::printf("split: %zu train / %zu test\n", tr.records.size(), te.records.size());
      }
    } else if (*fit) {
      const auto cfg = resolve(fit_c);
      const auto worlds = harness::prepare_worlds(cfg);
      print_fit("train", worlds.train_fit);
      print_fit("full", worlds.full_fit);
      auto env_cfg = cfg.environment;
      env::Environment(worlds.train_model, worlds.train_pool, env_cfg).save(fs::path(cfg.output_dir) / "train");
      env::Environment(worlds.full_model, worlds.eval_pool, env_cfg).save(fs::path(cfg.output_dir) / "full");
    } else if (*train) {
      const auto cfg = resolve(train_c);
      std::printf("%s seed %llu: %zu iterations -> %s\n", agents::to_string(cfg.train.algorithm).c_str(),
                  static_cast<unsigned long long>(cfg.seed), cfg.iterations, cfg.output_dir.c_str());
      const auto worlds = harness::prepare_worlds(cfg);
      print_fit("train", worlds.train_fit);
      print_fit("full", worlds.full_fit);
      const auto result = harness::train_and_evaluate(cfg, worlds, true, print_metrics);
      std::printf("done in %.1f s\n", result.seconds);
    } else if (*eval) {
      const fs::path run = run_dir;
      auto cfg = harness::ExperimentConfig::load(run / "config.json");
      const auto log = harness::load_dataset(cfg);
      const auto environment = env::Environment::load(run / "env" / "full", env::observations_from_log(log));
      auto train_cfg = cfg.train;
      train_cfg.seed = cfg.seed;
      agents::Agent agent(harness::policy_config_for(cfg, log), train_cfg);
      agent.load(run / "checkpoints" / "final");
      const auto seed = eval_c.seed.value_or(harness::evaluation_seed(cfg.seed));
      const auto n = sessions.value_or(cfg.eval_sessions);
      const auto per_session = harness::evaluate_sessions(agent, environment.shared_model(),
                                                          env::observations_from_log(log), environment.config(), n, seed);
      const auto m = harness::aggregate(per_session);
      print_metrics(cfg.iterations, m);
      if (!eval_c.out.empty()) {
        const fs::path out = eval_c.out;
        const harness::MetricsRow row{cfg.iterations, agents::to_string(cfg.train.algorithm), cfg.seed,
                                      m.mean_total_reward, m.mean_depth, m.reward_variance};
        harness::write_metrics_csv(out / "metrics.csv", std::span(&row, 1));
        std::vector<harness::SessionRow> rows;
        for (std::size_t i = 0; i < per_session.size(); ++i) {
          rows.push_back({cfg.iterations, i, per_session[i].total_reward, per_session[i].depth});
        }
        harness::write_session_csv(out / "sessions.csv", rows);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

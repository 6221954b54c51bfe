#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <random>
#include <string>
#include <vector>

#include "hac/agents/agent.hpp"
#include "hac/critic/critic.hpp"
#include "hac/data/preprocess.hpp"
#include "hac/data/synthetic.hpp"
#include "hac/env/environment.hpp"
#include "hac/harness/experiment.hpp"
#include "hac/nn/tensor.hpp"

namespace py = pybind11;
using namespace hac;

namespace {

// Configs cross the boundary as JSON text; the Python wrapper converts dicts.
harness::ExperimentConfig parse_config(const std::string& text) {
  return harness::ExperimentConfig::from_json(nlohmann::json::parse(text));
}

py::dict metrics_dict(const harness::AggregateMetrics& m) {
  py::dict d;
  d["sessions"] = m.sessions;
  d["mean_total_reward"] = m.mean_total_reward;
  d["mean_depth"] = m.mean_depth;
  d["reward_variance"] = m.reward_variance;
  return d;
}

py::dict result_dict(const harness::ExperimentResult& r) {
  py::list metrics;
  for (const auto& row : r.metrics) {
    py::dict d;
    d["iteration"] = row.iteration;
    d["algo"] = row.algo;
    d["seed"] = row.seed;
    d["mean_total_reward"] = row.mean_total_reward;
    d["mean_depth"] = row.mean_depth;
    d["reward_variance"] = row.reward_variance;
    metrics.append(d);
  }
  py::dict out;
  out["metrics"] = metrics;
  out["initial"] = metrics_dict(r.initial);
  out["final"] = metrics_dict(r.final);
  out["updates"] = r.losses.size();
  out["seconds"] = r.seconds;
  return out;
}

env::Observation to_observation(const py::handle& h) {
  auto t = h.cast<std::pair<std::vector<std::int64_t>, std::vector<data::ItemId>>>();
  return {std::move(t.first), std::move(t.second)};
}

std::vector<env::Observation> to_observations(const py::iterable& items) {
  std::vector<env::Observation> out;
  for (auto h : items) out.push_back(to_observation(h));
  return out;
}

py::tuple observation_tuple(const env::Observation& o) { return py::make_tuple(o.user_features, o.history); }

struct PyAgent {
  PyAgent(const harness::ExperimentConfig& config, const data::SessionLog& log)
      : agent(harness::policy_config_for(config, log), [&] {
          auto t = config.train;
          t.seed = config.seed;
          return t;
        }()),
        rng(config.seed) {}

  agents::Agent agent;
  std::mt19937_64 rng;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Latent-action reinforcement learning engine for slate recommendation";

  py::register_exception<nn::NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<env::DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);
  py::register_exception<data::EmptyLogError>(m, "EmptyLogError", PyExc_ValueError);

  m.def("default_config", [] { return harness::ExperimentConfig{}.to_json().dump(); },
        "Default experiment config as JSON text.");
  m.def("normalize_config", [](const std::string& text) { return parse_config(text).to_json().dump(); },
        "Validates a partial config and returns it with defaults filled in.");

  py::class_<data::SessionLog>(m, "SessionLog")
      .def_readonly("catalog_size", &data::SessionLog::catalog_size)
      .def_readonly("list_size", &data::SessionLog::list_size)
      .def_readonly("feature_cardinalities", &data::SessionLog::feature_cardinalities)
      .def("__len__", [](const data::SessionLog& l) { return l.records.size(); })
      .def("timestamps",
           [](const data::SessionLog& l) {
             std::vector<std::int64_t> t;
             for (const auto& r : l.records) t.push_back(r.timestamp);
             return t;
           })
      .def("exposed",
           [](const data::SessionLog& l) {
             std::vector<std::vector<data::ItemId>> out;
             for (const auto& r : l.records) out.push_back(r.exposed);
             return out;
           })
      .def("feedback",
           [](const data::SessionLog& l) {
             std::vector<std::vector<std::uint8_t>> out;
             for (const auto& r : l.records) out.push_back(r.feedback);
             return out;
           })
      .def("observations",
           [](const data::SessionLog& l) {
             py::list out;
             for (const auto& o : env::observations_from_log(l)) out.append(observation_tuple(o));
             return out;
           })
      .def("save", [](const data::SessionLog& l, const std::filesystem::path& p) { data::save_session_log(l, p); });

  m.def("load_session_log", [](const std::filesystem::path& p) { return data::load_session_log(p); });
  m.def(
      "generate_synthetic",
      [](std::size_t n_users, std::size_t n_items, std::size_t k, std::size_t n_records, std::uint64_t seed) {
        return data::generate_synthetic(
            {.n_users = n_users, .n_items = n_items, .k = k, .n_records = n_records, .seed = seed});
      },
      py::arg("n_users") = 100, py::arg("n_items") = 200, py::arg("k") = 5, py::arg("n_records") = 4000,
      py::arg("seed") = 0);
  m.def("kcore_filter", &data::kcore_filter, py::arg("log"), py::arg("threshold"));
  m.def("temporal_split", &data::temporal_split, py::arg("log"), py::arg("fraction"));
  m.def(
      "binarize_feedback",
      [](double value, const std::string& rule) {
        return static_cast<int>(data::binarize_feedback(value, data::binarize_rule_from_string(rule)));
      },
      py::arg("value"), py::arg("rule"));

  m.def(
      "slate_reward", [](const std::vector<std::uint8_t>& feedback) { return env::slate_reward(feedback); },
      py::arg("feedback"));
  m.def(
      "temper_update",
      [](double temper, const std::vector<std::uint8_t>& feedback, double alpha) {
        return env::temper_update(temper, feedback, alpha);
      },
      py::arg("temper"), py::arg("feedback"), py::arg("alpha") = 2.0);
  m.def(
      "inverse_pool",
      [](const std::vector<std::vector<double>>& kernel, const std::vector<data::ItemId>& items, std::size_t k) {
        if (kernel.empty()) throw std::invalid_argument("empty kernel");
        std::vector<double> flat;
        for (const auto& row : kernel) flat.insert(flat.end(), row.begin(), row.end());
        const auto pooled =
            critic::inverse_pool(nn::Tensor::from({kernel.size(), kernel[0].size()}, flat), items, k);
        const auto d = kernel[0].size();
        std::vector<std::vector<double>> out(items.size() / k);
        for (std::size_t b = 0; b < out.size(); ++b)
          out[b].assign(pooled.values().begin() + b * d, pooled.values().begin() + (b + 1) * d);
        return out;
      },
      py::arg("kernel"), py::arg("items"), py::arg("k"));

  py::class_<harness::Worlds>(m, "Worlds")
      .def_readonly("log", &harness::Worlds::log)
      .def_readonly("train", &harness::Worlds::train)
      .def_readonly("test", &harness::Worlds::test)
      .def_property_readonly("train_auc", [](const harness::Worlds& w) { return w.train_fit.heldout_auc; })
      .def_property_readonly("full_auc", [](const harness::Worlds& w) { return w.full_fit.heldout_auc; });
  m.def(
      "prepare_worlds", [](const std::string& config) { return harness::prepare_worlds(parse_config(config)); },
      py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def(
      "train_and_evaluate",
      [](const std::string& config, const harness::Worlds& worlds, bool write) {
        harness::ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = harness::train_and_evaluate(parse_config(config), worlds, write);
        }
        return result_dict(r);
      },
      py::arg("config"), py::arg("worlds"), py::arg("write") = false);
  m.def(
      "run_experiment",
      [](const std::string& config) {
        harness::ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = harness::run_experiment(parse_config(config));
        }
        return result_dict(r);
      },
      py::arg("config"));

  py::class_<env::Environment>(m, "Environment")
      .def(py::init([](const harness::Worlds& w, bool full, std::uint64_t seed) {
             env::EnvConfig c;
             c.seed = seed;
             return full ? env::Environment(w.full_model, w.eval_pool, c)
                         : env::Environment(w.train_model, w.train_pool, c);
           }),
           py::arg("worlds"), py::arg("full") = false, py::arg("seed") = 0)
      .def_property_readonly("catalog_size", &env::Environment::catalog_size)
      .def_property_readonly("list_size", &env::Environment::list_size)
      .def_property_readonly("live_sessions", &env::Environment::live_sessions)
      .def("reset",
           [](env::Environment& e, std::size_t n) {
             py::list out;
             for (const auto& o : e.reset(n)) out.append(observation_tuple(o));
             return out;
           })
      .def("step",
           [](env::Environment& e, const std::vector<std::vector<data::ItemId>>& slates) {
             py::list out;
             for (const auto& r : e.step(slates)) {
               py::dict d;
               d["feedback"] = r.feedback;
               d["reward"] = r.reward;
               d["done"] = r.done;
               d["next"] = observation_tuple(r.next);
               out.append(d);
             }
             return out;
           })
      .def("session", [](const env::Environment& e, std::size_t i) {
        const auto& s = e.session(i);
        py::dict d;
        d["observation"] = observation_tuple(s.observation);
        d["temper"] = s.temper;
        d["depth"] = s.depth;
        d["done"] = s.done;
        return d;
      });

  py::class_<PyAgent>(m, "Agent")
      .def(py::init([](const std::string& config, const data::SessionLog& log) {
             return std::make_unique<PyAgent>(parse_config(config), log);
           }),
           py::arg("config"), py::arg("log"))
      .def_property_readonly("algorithm", [](const PyAgent& a) { return agents::to_string(a.agent.config().algorithm); })
      .def_property_readonly("parameter_count",
                             [](const PyAgent& a) { return nn::count_values(a.agent.all_parameters()); })
      .def(
          "act",
          [](PyAgent& a, const py::iterable& observations, bool explore) {
            const auto obs = to_observations(observations);
            auto batch = a.agent.act(obs, explore ? agents::ActMode::kExplore : agents::ActMode::kGreedy, a.rng);
            return py::make_tuple(batch.slates, batch.hyper_actions);
          },
          py::arg("observations"), py::arg("explore") = false)
      .def(
          "evaluate",
          [](const PyAgent& a, const harness::Worlds& w, std::size_t sessions, std::uint64_t seed) {
            return metrics_dict(harness::evaluate(a.agent, w.full_model, w.eval_pool, {}, sessions, seed));
          },
          py::arg("worlds"), py::arg("sessions") = 100, py::arg("seed") = 0)
      .def("save", [](const PyAgent& a, const std::filesystem::path& p) { a.agent.save(p); })
      .def("load", [](PyAgent& a, const std::filesystem::path& p) { a.agent.load(p); });
}

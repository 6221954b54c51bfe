#include "hac/harness/metrics.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "hac/data/log.hpp"

namespace hac::harness {

AggregateMetrics aggregate(std::span<const SessionMetrics> sessions) {
  AggregateMetrics m;
  m.sessions = sessions.size();
  if (sessions.empty()) return m;
  const double n = static_cast<double>(sessions.size());
  for (const auto& s : sessions) {
    m.mean_total_reward += s.total_reward;
    m.mean_depth += static_cast<double>(s.depth);
  }
  m.mean_total_reward /= n;
  m.mean_depth /= n;
  for (const auto& s : sessions) {
    const double d = s.total_reward - m.mean_total_reward;
    m.reward_variance += d * d;
  }
  m.reward_variance /= n;
  return m;
}

std::vector<SessionMetrics> run_sessions(const SlateFunction& slates, std::shared_ptr<const env::ResponseModel> model,
                                         std::vector<Observation> user_pool, env::EnvConfig config,
                                         std::size_t n_sessions, std::uint64_t seed) {
  if (n_sessions == 0) throw std::invalid_argument("evaluation needs at least one session");
  config.seed = seed;
  env::Environment environment(std::move(model), std::move(user_pool), config);
  environment.reset(n_sessions);
  std::vector<SessionMetrics> out(n_sessions);
  std::vector<std::size_t> live(n_sessions);
  std::iota(live.begin(), live.end(), 0);
  while (!live.empty()) {
    std::vector<Observation> obs;
    obs.reserve(live.size());
    for (auto i : live) obs.push_back(environment.session(i).observation);
    const auto chosen = slates(obs);
    if (chosen.size() != live.size()) throw std::logic_error("slate function returned the wrong number of slates");
    const auto results = environment.step(live, chosen);
    std::vector<std::size_t> still;
    for (std::size_t j = 0; j < live.size(); ++j) {
      auto& m = out[live[j]];
      m.total_reward += results[j].reward;
      ++m.depth;
      if (!results[j].done) still.push_back(live[j]);
    }
    live = std::move(still);
  }
  return out;
}

std::vector<SessionMetrics> evaluate_sessions(const agents::Agent& agent, std::shared_ptr<const env::ResponseModel> model,
                                              std::vector<Observation> user_pool, env::EnvConfig config,
                                              std::size_t n_sessions, std::uint64_t seed, agents::ActMode mode) {
  std::mt19937_64 rng(seed + 1);
  const SlateFunction policy = [&](std::span<const Observation> obs) { return agent.act(obs, mode, rng).slates; };
  return run_sessions(policy, std::move(model), std::move(user_pool), config, n_sessions, seed);
}

AggregateMetrics evaluate(const agents::Agent& agent, std::shared_ptr<const env::ResponseModel> model,
                          std::vector<Observation> user_pool, env::EnvConfig config, std::size_t n_sessions,
                          std::uint64_t seed) {
  const auto sessions = evaluate_sessions(agent, std::move(model), std::move(user_pool), config, n_sessions, seed);
  return aggregate(sessions);
}

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path, const char* header) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw CsvError("cannot write " + path.string());
  out << header << '\n';
  return out;
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path, const char* header,
                                                std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != header) throw CsvError(path.string() + ": unexpected header");
  std::vector<std::vector<std::string>> rows;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    auto fields = data::split(line, ',');
    if (fields.size() != columns) {
      throw CsvError(path.string() + ":" + std::to_string(number) + ": expected " + std::to_string(columns) +
                     " fields");
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

double to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw CsvError("trailing characters in '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw CsvError("not a number: '" + s + "'");
  }
}

std::uint64_t to_uint(const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw CsvError("not an unsigned integer: '" + s + "'");
  return v;
}

std::string optional_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::optional<double> optional_value(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return to_double(s);
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
  auto out = open_out(path, kMetricsHeader);
  for (const auto& r : rows) {
    out << r.iteration << ',' << r.algo << ',' << r.seed << ',' << format_double(r.mean_total_reward) << ','
        << format_double(r.mean_depth) << ',' << format_double(r.reward_variance) << '\n';
  }
  if (!out) throw CsvError("write failed for " + path.string());
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::vector<MetricsRow> out;
  for (const auto& f : read_rows(path, kMetricsHeader, 6)) {
    out.push_back({to_uint(f[0]), f[1], to_uint(f[2]), to_double(f[3]), to_double(f[4]), to_double(f[5])});
  }
  return out;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const agents::LossReport> rows) {
  auto out = open_out(path, kLossHeader);
  for (const auto& r : rows) {
    out << r.iteration << ',' << optional_field(r.td) << ',' << optional_field(r.qmax) << ','
        << optional_field(r.hyper) << ',' << optional_field(r.bce) << ',' << optional_field(r.aux) << '\n';
  }
  if (!out) throw CsvError("write failed for " + path.string());
}

std::vector<agents::LossReport> read_loss_csv(const std::filesystem::path& path) {
  std::vector<agents::LossReport> out;
  for (const auto& f : read_rows(path, kLossHeader, 6)) {
    agents::LossReport r;
    r.iteration = to_uint(f[0]);
    r.trained = true;
    r.td = optional_value(f[1]);
    r.qmax = optional_value(f[2]);
    r.hyper = optional_value(f[3]);
    r.bce = optional_value(f[4]);
    r.aux = optional_value(f[5]);
    out.push_back(r);
  }
  return out;
}

void write_session_csv(const std::filesystem::path& path, std::span<const SessionRow> rows) {
  auto out = open_out(path, kSessionHeader);
  for (const auto& r : rows) {
    out << r.iteration << ',' << r.session << ',' << format_double(r.total_reward) << ',' << r.depth << '\n';
  }
  if (!out) throw CsvError("write failed for " + path.string());
}

std::vector<SessionRow> read_session_csv(const std::filesystem::path& path) {
  std::vector<SessionRow> out;
  for (const auto& f : read_rows(path, kSessionHeader, 4)) {
    out.push_back({to_uint(f[0]), static_cast<std::size_t>(to_uint(f[1])), to_double(f[2]),
                   static_cast<std::size_t>(to_uint(f[3]))});
  }
  return out;
}

}  // namespace hac::harness

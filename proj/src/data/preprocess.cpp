#include "hac/data/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

namespace hac::data {

BinarizeRule binarize_rule_from_string(const std::string& name) {
  if (name == "rating_gt_3") return BinarizeRule::kRatingGreaterThan3;
  if (name == "watch_ratio_gt_0.8") return BinarizeRule::kWatchRatioGreaterThan08;
  if (name == "identity") return BinarizeRule::kIdentity;
  throw std::invalid_argument("unknown binarize rule '" + name + "'");
}

std::string to_string(BinarizeRule rule) {
  switch (rule) {
    case BinarizeRule::kRatingGreaterThan3: return "rating_gt_3";
    case BinarizeRule::kWatchRatioGreaterThan08: return "watch_ratio_gt_0.8";
    case BinarizeRule::kIdentity: return "identity";
  }
  return "?";
}

std::uint8_t binarize_feedback(double raw_value, BinarizeRule rule) {
  if (!std::isfinite(raw_value)) throw std::domain_error("feedback value is not finite");
  switch (rule) {
    case BinarizeRule::kRatingGreaterThan3:
      if (raw_value < 0.0 || raw_value > 5.0) throw std::domain_error("rating outside [0, 5]");
      return raw_value > 3.0 ? 1 : 0;
    case BinarizeRule::kWatchRatioGreaterThan08:
      if (raw_value < 0.0) throw std::domain_error("negative watch ratio");
      return raw_value > 0.8 ? 1 : 0;
    case BinarizeRule::kIdentity:
      if (raw_value != 0.0 && raw_value != 1.0) throw std::domain_error("identity rule expects 0 or 1");
      return static_cast<std::uint8_t>(raw_value);
  }
  throw std::invalid_argument("unknown binarize rule");
}

SessionLog kcore_filter(const SessionLog& log, std::size_t threshold) {
  if (threshold < 1) throw std::invalid_argument("k-core threshold must be at least 1");
  SessionLog out = log;
  while (true) {
    std::vector<std::size_t> counts(out.catalog_size, 0);
    for (const auto& rec : out.records) {
      for (auto id : rec.exposed) ++counts[static_cast<std::size_t>(id)];
    }
    auto removed = [&](ItemId id) { return counts[static_cast<std::size_t>(id)] < threshold; };
    const auto before = out.records.size();
    std::erase_if(out.records, [&](const InteractionRecord& rec) {
      return std::any_of(rec.exposed.begin(), rec.exposed.end(), removed);
    });
    if (out.records.size() == before) break;
  }
  if (out.records.empty()) throw EmptyLogError("k-core filtering removed every record");

  std::vector<std::uint8_t> alive(out.catalog_size, 0);
  for (const auto& rec : out.records) {
    for (auto id : rec.exposed) alive[static_cast<std::size_t>(id)] = 1;
  }
  for (auto& rec : out.records) {
    std::erase_if(rec.history, [&](ItemId id) { return !alive[static_cast<std::size_t>(id)]; });
  }
  return out;
}

std::vector<Event> load_event_log(const std::filesystem::path& path, BinarizeRule rule) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open event log " + path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw LogFormatError(path.string(), 1, "missing header");
  std::vector<Event> events;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 5) throw LogFormatError(path.string(), line_no, "expected 5 tab-separated columns");
    Event e;
    e.user_id = cols[0];
    try {
      const auto item = parse_int_list(cols[1], line_no);
      const auto ts = parse_int_list(cols[3], line_no);
      if (item.size() != 1 || ts.size() != 1) throw std::invalid_argument("item and timestamp must be scalars");
      if (item[0] < 0) throw std::invalid_argument("negative item id");
      e.item = item[0];
      e.timestamp = ts[0];
      e.user_features = parse_int_list(cols[4], line_no);
      std::size_t used = 0;
      const double raw = std::stod(cols[2], &used);
      if (used != cols[2].size()) throw std::invalid_argument("bad feedback value '" + cols[2] + "'");
      e.label = binarize_feedback(raw, rule);
    } catch (const std::exception& err) {
      throw LogFormatError(path.string(), line_no, err.what());
    }
    events.push_back(std::move(e));
  }
  return events;
}

SessionLog segment_sessions(const std::vector<Event>& events, std::size_t list_size, std::size_t max_history) {
  if (list_size == 0) throw std::invalid_argument("list size must be positive");
  SessionLog log;
  log.list_size = list_size;

  std::map<std::string, std::vector<std::size_t>> by_user;
  std::vector<std::string> user_order;
  ItemId max_item = -1;
  std::size_t n_features = events.empty() ? 0 : events.front().user_features.size();
  for (std::size_t i = 0; i < events.size(); ++i) {
    auto [it, inserted] = by_user.try_emplace(events[i].user_id);
    if (inserted) user_order.push_back(events[i].user_id);
    it->second.push_back(i);
    max_item = std::max(max_item, events[i].item);
    if (events[i].user_features.size() != n_features) {
      throw std::invalid_argument("events carry different numbers of user features");
    }
  }
  log.catalog_size = static_cast<std::size_t>(max_item + 1);
  log.feature_cardinalities.assign(n_features, 1);

  for (const auto& user : user_order) {
    auto idx = by_user[user];
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return events[a].timestamp < events[b].timestamp; });
    std::vector<ItemId> positives;
    const std::size_t windows = idx.size() / list_size;
    for (std::size_t w = 0; w < windows; ++w) {
      const auto& first = events[idx[w * list_size]];
      InteractionRecord rec;
      rec.session_id = user + "_" + std::to_string(w);
      rec.user_id = user;
      rec.user_features = first.user_features;
      rec.timestamp = first.timestamp;
      const auto keep = std::min(positives.size(), max_history);
      rec.history.assign(positives.end() - static_cast<std::ptrdiff_t>(keep), positives.end());
      for (std::size_t j = 0; j < list_size; ++j) {
        const auto& e = events[idx[w * list_size + j]];
        rec.exposed.push_back(e.item);
        rec.feedback.push_back(e.label);
      }
      for (std::size_t j = 0; j < list_size; ++j) {
        if (rec.feedback[j]) positives.push_back(rec.exposed[j]);
      }
      for (std::size_t f = 0; f < n_features; ++f) {
        if (rec.user_features[f] < 0) throw std::invalid_argument("negative feature code");
        log.feature_cardinalities[f] =
            std::max(log.feature_cardinalities[f], static_cast<std::size_t>(rec.user_features[f]) + 1);
      }
      log.records.push_back(std::move(rec));
    }
  }
  std::stable_sort(log.records.begin(), log.records.end(),
                   [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  return log;
}

std::pair<SessionLog, SessionLog> temporal_split(const SessionLog& log, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split fraction must lie in (0, 1)");
  const auto n = log.records.size();
  if (n < 2) throw std::invalid_argument("temporal split needs at least 2 records");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = log.records[a];
    const auto& rb = log.records[b];
    if (ra.timestamp != rb.timestamp) return ra.timestamp < rb.timestamp;
    return ra.session_id < rb.session_id;
  });
  // The epsilon absorbs rounding in fraction * n before the ceiling.
  auto cut = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  cut = std::clamp<std::size_t>(cut, 1, n - 1);

  std::pair<SessionLog, SessionLog> out;
  for (auto* part : {&out.first, &out.second}) {
    part->catalog_size = log.catalog_size;
    part->list_size = log.list_size;
    part->feature_cardinalities = log.feature_cardinalities;
  }
  for (std::size_t i = 0; i < n; ++i) {
    (i < cut ? out.first : out.second).records.push_back(log.records[order[i]]);
  }
  return out;
}

}  // namespace hac::data

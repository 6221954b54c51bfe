#include "hac/data/log.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace hac::data {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(text.substr(start));
      return out;
    }
    out.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

namespace {

std::int64_t parse_int(const std::string& token, std::size_t line, const char* what) {
  std::int64_t value = 0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || first == last) {
    throw LogFormatError(line, std::string("bad ") + what + " '" + token + "'");
  }
  return value;
}

}  // namespace

std::vector<std::int64_t> parse_int_list(const std::string& field, std::size_t line) {
  std::vector<std::int64_t> out;
  if (field.empty()) return out;
  for (const auto& token : split(field, ',')) out.push_back(parse_int(token, line, "integer"));
  return out;
}

std::string join_ints(const std::vector<std::int64_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

void SessionLog::validate() const {
  if (list_size == 0) throw LogValidationError("list size must be positive");
  if (catalog_size < list_size) {
    throw LogValidationError("catalog size " + std::to_string(catalog_size) + " is smaller than list size " +
                             std::to_string(list_size));
  }
  auto check_item = [&](ItemId id, std::size_t r) {
    if (id < 0 || static_cast<std::size_t>(id) >= catalog_size) {
      throw LogValidationError("record " + std::to_string(r) + ": item " + std::to_string(id) +
                               " outside catalog of size " + std::to_string(catalog_size));
    }
  };
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.exposed.size() != list_size || rec.feedback.size() != list_size) {
      throw LogValidationError("record " + std::to_string(r) + ": expected " + std::to_string(list_size) +
                               " exposed items and labels");
    }
    for (auto id : rec.exposed) check_item(id, r);
    for (auto id : rec.history) check_item(id, r);
    for (auto y : rec.feedback) {
      if (y > 1) throw LogValidationError("record " + std::to_string(r) + ": label is not binary");
    }
    if (rec.user_features.size() != feature_cardinalities.size()) {
      throw LogValidationError("record " + std::to_string(r) + ": expected " +
                               std::to_string(feature_cardinalities.size()) + " user features");
    }
    for (std::size_t f = 0; f < rec.user_features.size(); ++f) {
      const auto code = rec.user_features[f];
      if (code < 0 || static_cast<std::size_t>(code) >= feature_cardinalities[f]) {
        throw LogValidationError("record " + std::to_string(r) + ": feature " + std::to_string(f) + " code " +
                                 std::to_string(code) + " out of range");
      }
    }
    if (r > 0 && records[r - 1].timestamp > rec.timestamp) {
      throw LogValidationError("records are not in timestamp order at record " + std::to_string(r));
    }
  }
}

SessionLog parse_session_log(std::istream& in, const FeatureSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw LogFormatError(1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kLogHeader) throw LogFormatError(1, "unexpected header '" + line + "'");

  SessionLog log;
  std::map<std::string, std::int64_t> last_time;
  std::size_t n_features = schema.feature_cardinalities.size();
  bool features_known = !schema.feature_cardinalities.empty();

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 7) {
      throw LogFormatError(line_no, "expected 7 tab-separated columns, got " + std::to_string(cols.size()));
    }
    InteractionRecord rec;
    rec.session_id = cols[0];
    if (rec.session_id.empty()) throw LogFormatError(line_no, "empty session id");
    rec.user_id = cols[1];
    rec.user_features = parse_int_list(cols[2], line_no);
    rec.history = parse_int_list(cols[3], line_no);
    rec.exposed = parse_int_list(cols[4], line_no);
    for (auto y : parse_int_list(cols[5], line_no)) {
      if (y != 0 && y != 1) throw LogFormatError(line_no, "feedback must be 0 or 1");
      rec.feedback.push_back(static_cast<std::uint8_t>(y));
    }
    rec.timestamp = parse_int(cols[6], line_no, "timestamp");

    if (rec.exposed.empty()) throw LogFormatError(line_no, "empty exposed list");
    if (rec.exposed.size() != rec.feedback.size()) {
      throw LogFormatError(line_no, std::to_string(rec.exposed.size()) + " exposed items but " +
                                        std::to_string(rec.feedback.size()) + " labels");
    }
    if (log.list_size == 0) log.list_size = rec.exposed.size();
    if (rec.exposed.size() != log.list_size) {
      throw LogFormatError(line_no, "list size " + std::to_string(rec.exposed.size()) + " differs from " +
                                        std::to_string(log.list_size));
    }
    if (!features_known) {
      n_features = rec.user_features.size();
      features_known = true;
    }
    if (rec.user_features.size() != n_features) {
      throw LogFormatError(line_no, "expected " + std::to_string(n_features) + " user features");
    }
    for (std::size_t f = 0; f < n_features; ++f) {
      const auto code = rec.user_features[f];
      if (code < 0) throw LogFormatError(line_no, "negative feature code");
      if (!schema.feature_cardinalities.empty() && static_cast<std::size_t>(code) >= schema.feature_cardinalities[f]) {
        throw LogFormatError(line_no, "feature " + std::to_string(f) + " code " + std::to_string(code) +
                                          " exceeds schema cardinality");
      }
    }
    for (const auto* list : {&rec.history, &rec.exposed}) {
      for (auto id : *list) {
        if (id < 0 || (schema.catalog_size > 0 && static_cast<std::size_t>(id) >= schema.catalog_size)) {
          throw LogFormatError(line_no, "unknown item id " + std::to_string(id));
        }
      }
    }
    auto [it, inserted] = last_time.try_emplace(rec.session_id, rec.timestamp);
    if (!inserted) {
      if (rec.timestamp < it->second) throw LogFormatError(line_no, "timestamp goes backwards within session");
      it->second = rec.timestamp;
    }
    log.records.push_back(std::move(rec));
  }
  if (log.records.empty()) throw LogFormatError(line_no, "log has no records");

  if (schema.catalog_size > 0) {
    log.catalog_size = schema.catalog_size;
  } else {
    ItemId max_id = -1;
    for (const auto& rec : log.records) {
      for (auto id : rec.exposed) max_id = std::max(max_id, id);
      for (auto id : rec.history) max_id = std::max(max_id, id);
    }
    log.catalog_size = static_cast<std::size_t>(max_id + 1);
  }
  if (!schema.feature_cardinalities.empty()) {
    log.feature_cardinalities = schema.feature_cardinalities;
  } else {
    log.feature_cardinalities.assign(n_features, 1);
    for (const auto& rec : log.records) {
      for (std::size_t f = 0; f < n_features; ++f) {
        log.feature_cardinalities[f] =
            std::max(log.feature_cardinalities[f], static_cast<std::size_t>(rec.user_features[f]) + 1);
      }
    }
  }

  std::stable_sort(log.records.begin(), log.records.end(),
                   [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  try {
    log.validate();
  } catch (const LogValidationError& e) {
    throw LogFormatError(line_no, e.what());
  }
  return log;
}

SessionLog load_session_log(const std::filesystem::path& path, const FeatureSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open session log " + path.string());
  try {
    return parse_session_log(in, schema);
  } catch (const LogFormatError& e) {
    const std::string what = e.what();
    const auto colon = what.find(": ");
    throw LogFormatError(path.string(), e.line(), colon == std::string::npos ? what : what.substr(colon + 2));
  }
}

void write_session_log(std::ostream& out, const SessionLog& log) {
  out << kLogHeader << '\n';
  for (const auto& rec : log.records) {
    std::vector<std::int64_t> labels(rec.feedback.begin(), rec.feedback.end());
    out << rec.session_id << '\t' << rec.user_id << '\t' << join_ints(rec.user_features) << '\t'
        << join_ints(rec.history) << '\t' << join_ints(rec.exposed) << '\t' << join_ints(labels) << '\t'
        << rec.timestamp << '\n';
  }
}

void save_session_log(const SessionLog& log, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write session log " + path.string());
  write_session_log(out, log);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace hac::data

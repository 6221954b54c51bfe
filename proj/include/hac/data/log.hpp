#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace hac::data {

using ItemId = std::int64_t;

struct InteractionRecord {
  std::string session_id;
  std::string user_id;  // empty when the source has no user ids
  std::vector<std::int64_t> user_features;
  std::vector<ItemId> history;  // positives only, oldest first
  std::vector<ItemId> exposed;
  std::vector<std::uint8_t> feedback;
  std::int64_t timestamp = 0;

  bool operator==(const InteractionRecord&) const = default;
};

// Integer-coded categorical user features. Zero / empty entries are inferred
// from the data on load.
struct FeatureSchema {
  std::size_t catalog_size = 0;
  std::vector<std::size_t> feature_cardinalities;
};

struct SessionLog {
  std::size_t catalog_size = 0;
  std::size_t list_size = 0;
  std::vector<std::size_t> feature_cardinalities;
  std::vector<InteractionRecord> records;  // timestamp order

  FeatureSchema schema() const { return {catalog_size, feature_cardinalities}; }
  // Throws LogValidationError describing the first violated invariant.
  void validate() const;
  bool operator==(const SessionLog&) const = default;
};

class LogValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LogFormatError : public std::runtime_error {
 public:
  LogFormatError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  LogFormatError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Unified TSV: header line, then
//   session_id, user_id, user_features, history, exposed, feedback, timestamp
// with comma-separated integer lists.
inline constexpr const char* kLogHeader =
    "session_id\tuser_id\tuser_features\thistory\texposed\tfeedback\ttimestamp";

SessionLog parse_session_log(std::istream& in, const FeatureSchema& schema = {});
SessionLog load_session_log(const std::filesystem::path& path, const FeatureSchema& schema = {});
void write_session_log(std::ostream& out, const SessionLog& log);
void save_session_log(const SessionLog& log, const std::filesystem::path& path);

// Shared helpers for the TSV readers.
std::vector<std::string> split(const std::string& text, char sep);
std::vector<std::int64_t> parse_int_list(const std::string& field, std::size_t line);
std::string join_ints(const std::vector<std::int64_t>& values);

}  // namespace hac::data

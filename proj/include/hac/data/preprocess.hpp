#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hac/data/log.hpp"

namespace hac::data {

enum class BinarizeRule { kRatingGreaterThan3, kWatchRatioGreaterThan08, kIdentity };

BinarizeRule binarize_rule_from_string(const std::string& name);  // rating_gt_3, watch_ratio_gt_0.8, identity
std::string to_string(BinarizeRule rule);

// Ratings must lie in [0, 5], watch ratios must be finite and non-negative,
// identity accepts exactly 0 or 1. Anything else throws std::domain_error.
std::uint8_t binarize_feedback(double raw_value, BinarizeRule rule);

class EmptyLogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Repeatedly removes items exposed fewer than `threshold` times, dropping records
// whose exposed list loses an item and stripping removed items from histories,
// until no surviving item is below the threshold. Item ids are kept as-is.
SessionLog kcore_filter(const SessionLog& log, std::size_t threshold);

struct Event {
  std::string user_id;
  std::vector<std::int64_t> user_features;
  ItemId item = 0;
  std::uint8_t label = 0;
  std::int64_t timestamp = 0;
};

// Event TSV: header "user_id\titem\tvalue\ttimestamp\tuser_features", raw values binarized by `rule`.
std::vector<Event> load_event_log(const std::filesystem::path& path, BinarizeRule rule);

// Consecutive non-overlapping windows of `list_size` events per user. Short
// remainders are dropped; histories keep the last `max_history` positives.
SessionLog segment_sessions(const std::vector<Event>& events, std::size_t list_size, std::size_t max_history = 50);

// Train gets the first ceil(fraction * n) records in (timestamp, session_id, input order).
std::pair<SessionLog, SessionLog> temporal_split(const SessionLog& log, double fraction);

}  // namespace hac::data

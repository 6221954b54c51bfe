#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "hac/data/log.hpp"
#include "hac/data/preprocess.hpp"
#include "hac/data/synthetic.hpp"

using namespace hac::data;

namespace {

std::string tsv(const std::vector<std::string>& rows) {
  std::string out = std::string(kLogHeader) + "\n";
  for (const auto& r : rows) out += r + "\n";
  return out;
}

SessionLog parse(const std::string& text, const FeatureSchema& schema = {}) {
  std::istringstream in(text);
  return parse_session_log(in, schema);
}

InteractionRecord make_record(std::string sid, std::vector<ItemId> exposed, std::int64_t ts,
                              std::vector<ItemId> history = {}) {
  InteractionRecord r;
  r.session_id = std::move(sid);
  r.exposed = std::move(exposed);
  r.feedback.assign(r.exposed.size(), 1);
  r.history = std::move(history);
  r.timestamp = ts;
  return r;
}

SessionLog make_log(std::size_t catalog, std::size_t k, std::vector<InteractionRecord> records) {
  SessionLog log;
  log.catalog_size = catalog;
  log.list_size = k;
  log.records = std::move(records);
  return log;
}

std::size_t line_of(const std::string& text) {
  try {
    parse(text);
  } catch (const LogFormatError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("nine exposed items and nine labels give a record with k = 9") {
  auto log = parse(tsv({"s1\tu1\t3,1\t4,5\t1,2,3,4,5,6,7,8,9\t1,0,0,1,0,0,0,1,0\t100"}));
  REQUIRE(log.records.size() == 1);
  CHECK(log.list_size == 9);
  CHECK(log.records[0].exposed.size() == 9);
  CHECK(log.records[0].history == std::vector<ItemId>{4, 5});
  CHECK(log.catalog_size == 10);
  CHECK(log.feature_cardinalities == std::vector<std::size_t>{4, 2});
}

TEST_CASE("an empty history field gives an empty history") {
  auto log = parse(tsv({"s1\t\t\t\t1,2\t0,1\t5"}));
  CHECK(log.records[0].history.empty());
  CHECK(log.records[0].user_id.empty());
  CHECK(log.records[0].user_features.empty());
}

TEST_CASE("malformed rows are reported with their line number") {
  CHECK(line_of(tsv({"s1\tu\t\t\t1,2\t0,1\t5", "s2\tu\t\t\t1,2,3,4,5,6,7,8,9,10\t1,0,0,1,0,0,0,1,0\t6"})) == 3);
  CHECK(line_of(tsv({"s1\tu\t\t\t1,2\t0,1\t5", "s2\tu\t\t\t1,2,3\t0,1,1\t6"})) == 3);  // non-uniform k
  CHECK(line_of(tsv({"s1\tu\t\t\t1,x\t0,1\t5"})) == 2);
  CHECK(line_of(tsv({"s1\tu\t\t\t1,2\t0,2\t5"})) == 2);
  CHECK(line_of(tsv({"s1\tu\t\t1,2\t0,1\t5"})) == 2);
  CHECK(line_of("wrong header\n") == 1);
  std::istringstream in(tsv({"s1\tu\t\t\t1,7\t0,1\t5"}));
  CHECK_THROWS_AS(parse_session_log(in, {.catalog_size = 5}), LogFormatError);  // unknown item id
}

TEST_CASE("records are ordered by timestamp on load and survive a write/read round trip") {
  auto log = parse(tsv({"a\tu\t0\t\t1,2\t0,1\t9", "b\tu\t1\t2\t3,4\t1,1\t3", "c\tu\t0\t\t0,4\t0,0\t3"}));
  CHECK(log.records[0].session_id == "b");
  CHECK(log.records[1].session_id == "c");
  CHECK(log.records[2].session_id == "a");
  std::ostringstream out;
  write_session_log(out, log);
  CHECK(parse(out.str()) == log);
}

TEST_CASE("binarize rules") {
  CHECK(binarize_feedback(4, BinarizeRule::kRatingGreaterThan3) == 1);
  CHECK(binarize_feedback(3, BinarizeRule::kRatingGreaterThan3) == 0);  // strict
  CHECK(binarize_feedback(0.9, BinarizeRule::kWatchRatioGreaterThan08) == 1);
  CHECK(binarize_feedback(0.8, BinarizeRule::kWatchRatioGreaterThan08) == 0);
  CHECK(binarize_feedback(1, BinarizeRule::kIdentity) == 1);
  CHECK_THROWS_AS(binarize_feedback(7, BinarizeRule::kRatingGreaterThan3), std::domain_error);
  CHECK_THROWS_AS(binarize_feedback(-0.1, BinarizeRule::kWatchRatioGreaterThan08), std::domain_error);
  CHECK_THROWS_AS(binarize_feedback(0.5, BinarizeRule::kIdentity), std::domain_error);
  CHECK(binarize_rule_from_string("watch_ratio_gt_0.8") == BinarizeRule::kWatchRatioGreaterThan08);
}

TEST_CASE("an item seen 49 times is removed under threshold 50") {
  std::vector<InteractionRecord> recs;
  for (int i = 0; i < 60; ++i) recs.push_back(make_record("s" + std::to_string(i), {0, 1}, i));
  for (int i = 0; i < 49; ++i) recs.push_back(make_record("t" + std::to_string(i), {0, 2}, 100 + i, {2, 1}));
  auto out = kcore_filter(make_log(3, 2, recs), 50);
  CHECK(out.records.size() == 60);
  for (const auto& r : out.records) {
    CHECK(std::find(r.exposed.begin(), r.exposed.end(), 2) == r.exposed.end());
  }
}

TEST_CASE("k-core leaves a log unchanged when every item clears the threshold") {
  auto log = generate_synthetic({.n_users = 10, .n_items = 8, .k = 3, .n_records = 300, .seed = 1});
  CHECK(kcore_filter(log, 5) == log);
}

TEST_CASE("k-core reaches a fixpoint: recount finds no survivor below threshold") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    // Zipf-like exposures so that some items fall below the threshold and cascade.
    std::mt19937_64 rng(seed);
    std::vector<double> weights;
    for (int i = 0; i < 60; ++i) weights.push_back(1.0 / (i + 1.0));
    std::discrete_distribution<ItemId> pick(weights.begin(), weights.end());
    std::vector<InteractionRecord> recs;
    for (int i = 0; i < 2000; ++i) {
      recs.push_back(make_record("s" + std::to_string(i), {pick(rng), pick(rng)}, i, {pick(rng), pick(rng)}));
    }
    auto log = make_log(60, 2, recs);
    const std::size_t threshold = 30;
    auto out = kcore_filter(log, threshold);
    CHECK(out.records.size() < log.records.size());
    // Brute-force recount over the filtered log.
    std::map<ItemId, std::size_t> counts;
    std::set<ItemId> survivors;
    for (const auto& r : out.records) {
      for (auto id : r.exposed) {
        ++counts[id];
        survivors.insert(id);
      }
    }
    for (const auto& [id, c] : counts) CHECK(c >= threshold);
    for (const auto& r : out.records) {
      for (auto id : r.history) CHECK(survivors.count(id) == 1);
    }
    CHECK_NOTHROW(out.validate());
    CHECK(kcore_filter(out, threshold) == out);  // idempotent
  }
}

TEST_CASE("k-core that empties the log is flagged") {
  auto log = make_log(3, 2, {make_record("a", {0, 1}, 0)});
  CHECK_THROWS_AS(kcore_filter(log, 2), EmptyLogError);
}

TEST_CASE("segmentation produces floor(events / list_size) windows") {
  std::vector<Event> events;
  for (int t = 0; t < 25; ++t) {
    events.push_back({"u", {0}, t % 13, static_cast<std::uint8_t>(t % 3 == 0), t});
  }
  for (int t = 0; t < 3; ++t) events.push_back({"v", {1}, t, 1, t});
  auto log = segment_sessions(events, 10);
  CHECK(log.records.size() == 25 / 10);
  // Second record's history: positives among the first 10 events (t = 0, 3, 6, 9).
  std::vector<ItemId> expected;
  for (int t = 0; t < 10; ++t)
    if (t % 3 == 0) expected.push_back(t % 13);
  CHECK(log.records[0].history.empty());
  CHECK(log.records[1].history == expected);
  CHECK(log.records[1].timestamp == 10);
  CHECK_NOTHROW(log.validate());
}

TEST_CASE("segmentation histories hold only positives and respect the cap") {
  auto world = generate_synthetic_world({.n_users = 5, .n_items = 30, .k = 1, .n_records = 500, .seed = 3});
  std::vector<Event> events;
  for (const auto& r : world.log.records) {
    events.push_back({r.user_id, r.user_features, r.exposed[0], r.feedback[0], r.timestamp});
  }
  auto log = segment_sessions(events, 4, 6);
  std::map<std::string, std::multiset<ItemId>> positives_so_far;
  for (const auto& r : log.records) {
    CHECK(r.history.size() <= 6);
    for (auto id : r.history) CHECK(positives_so_far[r.user_id].count(id) > 0);
    for (std::size_t j = 0; j < r.exposed.size(); ++j)
      if (r.feedback[j]) positives_so_far[r.user_id].insert(r.exposed[j]);
  }
  CHECK_NOTHROW(log.validate());
}

TEST_CASE("temporal split takes the first ceil(f n) records") {
  std::vector<InteractionRecord> recs;
  for (int i = 0; i < 100; ++i) recs.push_back(make_record("s" + std::to_string(100 + i), {0, 1}, i));
  auto [train, eval] = temporal_split(make_log(2, 2, recs), 0.8);
  CHECK(train.records.size() == 80);
  CHECK(eval.records.size() == 20);
  CHECK(train.records.back().timestamp <= eval.records.front().timestamp);
  auto [a, b] = temporal_split(make_log(2, 2, {recs[0], recs[1], recs[2]}), 0.5);
  CHECK(a.records.size() == 2);
  CHECK_THROWS_AS(temporal_split(make_log(2, 2, {recs[0]}), 0.5), std::invalid_argument);
  CHECK_THROWS_AS(temporal_split(make_log(2, 2, recs), 1.0), std::invalid_argument);
}

TEST_CASE("temporal split with equal timestamps preserves input order") {
  std::vector<InteractionRecord> recs;
  for (int i = 0; i < 10; ++i) {
    auto r = make_record("same", {i % 3, 3}, 7);
    r.user_id = std::to_string(i);
    recs.push_back(r);
  }
  auto [train, eval] = temporal_split(make_log(4, 2, recs), 0.3);
  std::vector<std::string> order;
  for (const auto* part : {&train, &eval})
    for (const auto& r : part->records) order.push_back(r.user_id);
  for (int i = 0; i < 10; ++i) CHECK(order[static_cast<std::size_t>(i)] == std::to_string(i));
}

TEST_CASE("temporal split is a partition of a synthetic log") {
  auto log = generate_synthetic({.n_records = 333, .seed = 9});
  auto [train, eval] = temporal_split(log, 0.8);
  CHECK(train.records.size() + eval.records.size() == log.records.size());
  std::vector<InteractionRecord> joined = train.records;
  joined.insert(joined.end(), eval.records.begin(), eval.records.end());
  CHECK(joined == log.records);
  CHECK_NOTHROW(train.validate());
  CHECK_NOTHROW(eval.validate());
}

TEST_CASE("synthetic logs are deterministic per seed") {
  SynthConfig c{.n_records = 200, .seed = 5};
  CHECK(generate_synthetic(c) == generate_synthetic(c));
  SynthConfig d = c;
  d.seed = 6;
  CHECK_FALSE(generate_synthetic(c) == generate_synthetic(d));
}

TEST_CASE("noise_scale 0 makes labels the sign of the planted affinity") {
  auto world = generate_synthetic_world({.n_records = 300, .noise_scale = 0.0, .seed = 2});
  for (const auto& r : world.log.records) {
    const auto user = static_cast<std::size_t>(r.user_features[0]);
    for (std::size_t j = 0; j < r.exposed.size(); ++j) {
      CHECK(r.feedback[j] == (world.affinity(user, r.exposed[j]) > 0.0 ? 1 : 0));
    }
  }
}

TEST_CASE("default synthetic config has a positive rate in [0.2, 0.8]") {
  auto log = generate_synthetic({});
  std::size_t pos = 0, total = 0;
  for (const auto& r : log.records) {
    for (auto y : r.feedback) {
      pos += y;
      ++total;
    }
  }
  const double rate = static_cast<double>(pos) / static_cast<double>(total);
  MESSAGE("positive rate " << rate);
  CHECK(rate >= 0.2);
  CHECK(rate <= 0.8);
  CHECK_NOTHROW(log.validate());
}

TEST_CASE("synthetic configs are validated") {
  CHECK_THROWS_AS(generate_synthetic({.n_items = 3, .k = 5}), std::invalid_argument);
  CHECK_THROWS_AS(generate_synthetic({.n_records = 0}), std::invalid_argument);
}

TEST_CASE("session logs load from disk and report the file on failure") {
  const auto dir = std::filesystem::temp_directory_path() / "hac_unit";
  std::filesystem::create_directories(dir);
  auto log = generate_synthetic({.n_records = 50, .seed = 4});
  save_session_log(log, dir / "log.tsv");
  CHECK(load_session_log(dir / "log.tsv", log.schema()) == log);
  {
    std::ofstream out(dir / "bad.tsv");
    out << tsv({"s\tu\t1\t\t1,2\t0\t4"});
  }
  try {
    load_session_log(dir / "bad.tsv");
    FAIL("expected an error");
  } catch (const LogFormatError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("bad.tsv:2") != std::string::npos);
  }
}

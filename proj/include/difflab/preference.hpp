// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace difflab {

enum class Choice { kA, kB };

std::string_view to_string(Choice c);
std::optional<Choice> parse_choice(std::string_view s);

/// Microseconds since the Unix epoch for an ISO-8601 timestamp of the form
/// YYYY-MM-DDTHH:MM:SS[.fraction](Z|+HH:MM|-HH:MM). nullopt when malformed.
std::optional<std::int64_t> parse_timestamp(std::string_view s);
/// UTC, microsecond precision, trailing Z.
std::string format_timestamp(std::int64_t micros);

struct Vote {
  std::string study;
  std::string pair;
  std::string rater;
  Choice choice = Choice::kA;
  std::string ts;         // as received
  std::int64_t ts_us = 0; // parsed
};

struct StudyRules {
  std::size_t min_raters = 7;
  std::size_t win_margin = 2;

  void validate() const;
};

enum class Outcome { kWinA, kWinB, kTie, kInvalid };

std::string_view to_string(Outcome o);

struct PairResult {
  std::string pair;
  std::size_t votes_a = 0;
  std::size_t votes_b = 0;
  std::size_t unique_raters = 0;
  Outcome outcome = Outcome::kInvalid;
};

/// Preference ratio wins_A / wins_B. Infinite when only A has wins,
/// undefined when neither side has any.
struct PreferenceRatio {
  enum class Kind { kFinite, kInfinite, kUndefined };

  Kind kind = Kind::kUndefined;
  double value = 0.0;  // meaningful for kFinite only

  static PreferenceRatio of(std::size_t wins_a, std::size_t wins_b);
};

struct StudyReport {
  std::string study;
  std::size_t total_pairs = 0;
  std::size_t wins_a = 0;
  std::size_t wins_b = 0;
  std::size_t ties = 0;
  std::size_t invalid = 0;
  /// Rates over decided pairs (wins only); nullopt when there are none.
  std::optional<double> win_rate_a;
  std::optional<double> win_rate_b;
  /// Rates over valid pairs (wins and ties); nullopt when there are none.
  std::optional<double> win_rate_a_valid;
  std::optional<double> win_rate_b_valid;
  PreferenceRatio ratio;
  /// Pairs that do not enter the ratio: ties plus invalid.
  std::size_t excluded = 0;
  /// Set when no pair is valid.
  bool empty = true;
  std::vector<PairResult> pairs;  // sorted by pair id

  std::size_t decided() const { return wins_a + wins_b; }
};

struct RejectedRecord {
  std::size_t index = 0;  // position in the input
  std::string reason;
};

struct IngestResult {
  /// One vote per (study, pair, rater), sorted by that key.
  std::vector<Vote> votes;
  std::vector<RejectedRecord> rejects;
};

/// Validates raw records and keeps the latest vote per (study, pair, rater).
/// Equal timestamps resolve to the later record in input order.
IngestResult ingest_votes(std::span<const nlohmann::json> records);
/// JSONL input; unparsable lines are rejected, blank lines skipped. Record
/// indices are 0-based line numbers.
IngestResult ingest_vote_lines(std::istream& in);

nlohmann::json vote_to_json(const Vote& v);

/// The decision rule alone, on counts.
Outcome decide(std::size_t votes_a, std::size_t votes_b, std::size_t unique_raters, const StudyRules& rules);

/// Votes must share one pair id; throws std::invalid_argument otherwise.
PairResult score_pair(std::span<const Vote> votes, const StudyRules& rules);

/// Aggregates the votes of one study. Votes of other studies are ignored.
/// The pairs scored are those with at least one vote, plus `known_pairs`
/// (pairs without votes count as invalid).
StudyReport study_report(std::span<const Vote> votes, const StudyRules& rules, const std::string& study,
                         std::span<const std::string> known_pairs = {});

/// Distinct study ids in the votes, sorted.
std::vector<std::string> study_ids(std::span<const Vote> votes);

struct RatedItem {
  std::string id;
  std::string source;
  double rating = 0.0;
  std::size_t rater_count = 0;
};

struct RatingCuration {
  std::vector<std::string> selected;  // grouped by source, ranked
  std::map<std::string, std::size_t> shortfall;
};

/// Per source: drop items with rater_count < min_rater_count, rank by rating
/// descending (id ascending on ties), take the source's quota. Sources absent
/// from `quotas` contribute nothing.
RatingCuration curate_by_ratings(std::span<const RatedItem> items,
                                 const std::map<std::string, std::size_t>& quotas,
                                 std::size_t min_rater_count);

}  // namespace difflab

// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"

#include "difflab/preference.hpp"
#include "difflab/rng.hpp"

using namespace difflab;
using nlohmann::json;

namespace {

json record(const std::string& pair, const std::string& rater, const std::string& choice, const std::string& ts,
            const std::string& study = "s1") {
  return {{"study", study}, {"pair", pair}, {"rater", rater}, {"choice", choice}, {"ts", ts}};
}

std::string ts_at(int second) {
  return format_timestamp(1'700'000'000'000'000LL + second * 1'000'000LL);
}

// Adds `a` A-votes and `b` B-votes from distinct raters.
void add_votes(std::vector<Vote>& out, const std::string& pair, int a, int b, const std::string& study = "s1") {
  for (int i = 0; i < a + b; ++i) {
    out.push_back({study, pair, pair + "-r" + std::to_string(i), i < a ? Choice::kA : Choice::kB, "", 0});
  }
}

}  // namespace

TEST_SUITE("preference") {
TEST_CASE("decision rule on the worked cases") {
  const StudyRules rules;
  CHECK(decide(5, 2, 7, rules) == Outcome::kWinA);
  CHECK(decide(2, 5, 7, rules) == Outcome::kWinB);
  CHECK(decide(4, 3, 7, rules) == Outcome::kTie);
  CHECK(decide(6, 0, 6, rules) == Outcome::kInvalid);
  CHECK(decide(0, 0, 0, rules) == Outcome::kInvalid);
  CHECK(to_string(Outcome::kInvalid) == "invalid_insufficient_raters");
  CHECK(to_string(Outcome::kWinA) == "win_A");
  CHECK_THROWS_AS(StudyRules({0, 2}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(StudyRules({7, 0}).validate(), std::invalid_argument);
}

TEST_CASE("decision rule matches brute force on all small vote sets") {
  // Every assignment of up to 12 raters to A/B, with rules varied.
  for (std::size_t min_raters : {1u, 3u, 7u}) {
    for (std::size_t margin : {1u, 2u, 3u}) {
      const StudyRules rules{min_raters, margin};
      for (int n = 0; n <= 12; ++n) {
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
          std::vector<Vote> votes;
          int a = 0;
          for (int i = 0; i < n; ++i) {
            const bool is_a = (mask >> i) & 1u;
            a += is_a;
            votes.push_back({"s", "p", "r" + std::to_string(i), is_a ? Choice::kA : Choice::kB, "", 0});
          }
          const int b = n - a;
          Outcome expect;
          if (static_cast<std::size_t>(n) < min_raters) expect = Outcome::kInvalid;
          else if (a - b >= static_cast<int>(margin)) expect = Outcome::kWinA;
          else if (b - a >= static_cast<int>(margin)) expect = Outcome::kWinB;
          else expect = Outcome::kTie;
          const PairResult r = score_pair(votes, rules);
          REQUIRE(r.outcome == expect);
          REQUIRE(r.votes_a == static_cast<std::size_t>(a));
          REQUIRE(r.unique_raters == static_cast<std::size_t>(n));
        }
      }
    }
  }
}

TEST_CASE("score_pair rejects mixed pairs") {
  std::vector<Vote> v;
  add_votes(v, "p1", 1, 0);
  add_votes(v, "p2", 1, 0);
  CHECK_THROWS_AS(score_pair(v, {}), std::invalid_argument);
}

TEST_CASE("timestamps parse and format") {
  CHECK(parse_timestamp("1970-01-01T00:00:00Z") == 0);
  CHECK(parse_timestamp("1970-01-01T00:00:01.5Z") == 1'500'000);
  CHECK(parse_timestamp("2024-02-29T12:00:00+02:00") == parse_timestamp("2024-02-29T10:00:00Z"));
  CHECK(parse_timestamp("2024-03-01T00:00:00-00:30") == parse_timestamp("2024-03-01T00:30:00Z"));
  CHECK(parse_timestamp("2024-01-02T03:04:05.1234567Z") == *parse_timestamp("2024-01-02T03:04:05Z") + 123456);
  CHECK_FALSE(parse_timestamp("2023-02-29T00:00:00Z"));
  CHECK_FALSE(parse_timestamp("2024-01-01 00:00:00Z"));
  CHECK_FALSE(parse_timestamp("2024-01-01T00:00:00"));
  CHECK_FALSE(parse_timestamp("2024-01-01T24:00:00Z"));
  CHECK_FALSE(parse_timestamp("2024-01-01T00:00:00.Z"));
  CHECK_FALSE(parse_timestamp("2024-01-01T00:00:00Zjunk"));
  CHECK_FALSE(parse_timestamp("yesterday"));
  CHECK(format_timestamp(0) == "1970-01-01T00:00:00.000000Z");
  CHECK(format_timestamp(-1) == "1969-12-31T23:59:59.999999Z");
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const auto us = static_cast<std::int64_t>(rng.uniform() * 8e15) - 2'000'000'000'000'000LL;
    REQUIRE(parse_timestamp(format_timestamp(us)) == us);
  }
}

TEST_CASE("ingest keeps the latest vote per rater") {
  const std::vector<json> recs{
      record("p1", "r1", "A", "2024-01-01T00:00:02Z"),
      record("p1", "r1", "B", "2024-01-01T00:00:01Z"),  // older, ignored
      record("p1", "r2", "A", "2024-01-01T00:00:01Z"),
      record("p1", "r2", "B", "2024-01-01T00:00:03Z"),  // newer wins
      record("p1", "r3", "C", "2024-01-01T00:00:01Z"),
      record("p1", "", "A", "2024-01-01T00:00:01Z"),
      record("p1", "r4", "A", "not a time"),
      json::array(),
      json{{"study", "s1"}, {"pair", "p1"}, {"rater", "r5"}, {"choice", "A"}},
  };
  const IngestResult r = ingest_votes(recs);
  REQUIRE(r.votes.size() == 2);
  CHECK(r.votes[0].rater == "r1");
  CHECK(r.votes[0].choice == Choice::kA);
  CHECK(r.votes[1].choice == Choice::kB);
  REQUIRE(r.rejects.size() == 5);
  CHECK(r.rejects[0].index == 4);
  CHECK(r.rejects[0].reason.find("\"C\"") != std::string::npos);
  CHECK(r.rejects[4].index == 8);
}

TEST_CASE("equal timestamps resolve to the later record") {
  const std::string t = "2024-01-01T00:00:00Z";
  std::vector<json> recs{record("p", "r", "A", t), record("p", "r", "B", t)};
  CHECK(ingest_votes(recs).votes.at(0).choice == Choice::kB);
  std::swap(recs[0], recs[1]);
  CHECK(ingest_votes(recs).votes.at(0).choice == Choice::kA);
  // Same instant written with different offsets.
  recs = {record("p", "r", "A", "2024-01-01T02:00:00+02:00"), record("p", "r", "B", t)};
  CHECK(ingest_votes(recs).votes.at(0).choice == Choice::kB);
}

TEST_CASE("ingest is idempotent and order-independent for distinct timestamps") {
  Rng rng(5);
  std::vector<json> recs;
  for (int i = 0; i < 1000; ++i) {
    recs.push_back(record("p" + std::to_string(rng.index(20)), "r" + std::to_string(rng.index(15)),
                          rng.uniform() < 0.6 ? "A" : "B", ts_at(i), rng.uniform() < 0.8 ? "s1" : "s2"));
  }
  const IngestResult base = ingest_votes(recs);
  auto key = [](const std::vector<Vote>& vs) {
    std::vector<std::tuple<std::string, std::string, std::string, std::string>> out;
    for (const auto& v : vs) out.emplace_back(v.study, v.pair, v.rater, std::string(to_string(v.choice)));
    return out;
  };
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<json> shuffled = recs;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
    CHECK(key(ingest_votes(shuffled).votes) == key(base.votes));
  }
  std::vector<json> once;
  for (const auto& v : base.votes) once.push_back(vote_to_json(v));
  CHECK(key(ingest_votes(once).votes) == key(base.votes));
  std::vector<json> doubled = recs;
  doubled.insert(doubled.end(), recs.begin(), recs.end());
  CHECK(key(ingest_votes(doubled).votes) == key(base.votes));
}

TEST_CASE("jsonl ingest reports line numbers") {
  std::istringstream in(record("p", "r1", "A", ts_at(0)).dump() + "\n\n{broken\n" +
                        record("p", "r2", "X", ts_at(1)).dump() + "\n" + record("p", "r3", "B", ts_at(2)).dump() +
                        "\n");
  const IngestResult r = ingest_vote_lines(in);
  CHECK(r.votes.size() == 2);
  REQUIRE(r.rejects.size() == 2);
  CHECK(r.rejects[0].index == 2);
  CHECK(r.rejects[0].reason.rfind("invalid JSON", 0) == 0);
  CHECK(r.rejects[1].index == 3);
}

TEST_CASE("study report counts and ratio") {
  std::vector<Vote> votes;
  for (int i = 0; i < 48; ++i) add_votes(votes, "a" + std::to_string(i), 6, 1);
  for (int i = 0; i < 10; ++i) add_votes(votes, "b" + std::to_string(i), 1, 6);
  for (int i = 0; i < 5; ++i) add_votes(votes, "t" + std::to_string(i), 4, 3);
  for (int i = 0; i < 3; ++i) add_votes(votes, "x" + std::to_string(i), 6, 0);
  add_votes(votes, "other", 7, 0, "s2");
  const std::vector<std::string> known{"unvoted"};
  const StudyReport r = study_report(votes, {}, "s1", known);
  CHECK(r.total_pairs == 67);
  CHECK(r.wins_a == 48);
  CHECK(r.wins_b == 10);
  CHECK(r.ties == 5);
  CHECK(r.invalid == 4);
  CHECK(r.excluded == 9);
  CHECK(r.ratio.kind == PreferenceRatio::Kind::kFinite);
  CHECK(r.ratio.value == doctest::Approx(4.8));
  CHECK(*r.win_rate_a == doctest::Approx(48.0 / 58));
  CHECK(*r.win_rate_a_valid == doctest::Approx(48.0 / 63));
  CHECK_FALSE(r.empty);
  CHECK(std::is_sorted(r.pairs.begin(), r.pairs.end(),
                       [](const PairResult& x, const PairResult& y) { return x.pair < y.pair; }));
}

TEST_CASE("degenerate ratios") {
  std::vector<Vote> ties;
  add_votes(ties, "p", 4, 3);
  const StudyReport t = study_report(ties, {}, "s1");
  CHECK(t.ratio.kind == PreferenceRatio::Kind::kUndefined);
  CHECK_FALSE(t.win_rate_a);
  CHECK(*t.win_rate_a_valid == 0.0);
  CHECK_FALSE(t.empty);

  std::vector<Vote> only_a;
  add_votes(only_a, "p", 7, 0);
  CHECK(study_report(only_a, {}, "s1").ratio.kind == PreferenceRatio::Kind::kInfinite);

  const StudyReport none = study_report({}, {}, "s1");
  CHECK(none.empty);
  CHECK(none.total_pairs == 0);
  CHECK(none.ratio.kind == PreferenceRatio::Kind::kUndefined);
}

TEST_CASE("swapping A and B inverts the outcome") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vote> votes;
    for (int p = 0; p < 20; ++p) {
      add_votes(votes, "p" + std::to_string(p), static_cast<int>(rng.index(8)), static_cast<int>(rng.index(8)));
    }
    std::vector<Vote> swapped = votes;
    for (auto& v : swapped) v.choice = v.choice == Choice::kA ? Choice::kB : Choice::kA;
    const StudyReport r = study_report(votes, {}, "s1");
    const StudyReport s = study_report(swapped, {}, "s1");
    CHECK(r.wins_a == s.wins_b);
    CHECK(r.wins_b == s.wins_a);
    CHECK(r.ties == s.ties);
    CHECK(r.invalid == s.invalid);
    if (r.ratio.kind == PreferenceRatio::Kind::kFinite && s.ratio.kind == PreferenceRatio::Kind::kFinite) {
      CHECK(r.ratio.value * s.ratio.value == doctest::Approx(1.0));
    }

    std::vector<Vote> permuted = votes;
    for (std::size_t i = permuted.size(); i > 1; --i) std::swap(permuted[i - 1], permuted[rng.index(i)]);
    const StudyReport q = study_report(permuted, {}, "s1");
    CHECK(q.wins_a == r.wins_a);
    CHECK(q.ties == r.ties);
    CHECK(q.pairs.size() == r.pairs.size());
  }
}

TEST_CASE("study ids") {
  std::vector<Vote> votes;
  add_votes(votes, "p", 1, 0, "zeta");
  add_votes(votes, "p", 1, 0, "alpha");
  add_votes(votes, "q", 1, 0, "zeta");
  CHECK(study_ids(votes) == std::vector<std::string>{"alpha", "zeta"});
}

TEST_CASE("curation by ratings matches a filter-sort-take oracle") {
  Rng rng(12);
  std::vector<RatedItem> items;
  const std::vector<std::string> sources{"web", "stock", "art"};
  for (int i = 0; i < 200; ++i) {
    items.push_back({"i" + std::to_string(i), sources[rng.index(3)], static_cast<double>(rng.index(10)),
                     rng.index(12)});
  }
  const std::map<std::string, std::size_t> quotas{{"web", 10}, {"stock", 40}, {"missing", 3}};
  const RatingCuration got = curate_by_ratings(items, quotas, 5);

  std::vector<std::string> expect;
  std::map<std::string, std::size_t> shortfall;
  for (const auto& [source, quota] : quotas) {
    std::vector<RatedItem> pool;
    for (const auto& it : items) {
      if (it.source == source && it.rater_count >= 5) pool.push_back(it);
    }
    std::sort(pool.begin(), pool.end(), [](const RatedItem& a, const RatedItem& b) {
      return std::make_pair(-a.rating, a.id) < std::make_pair(-b.rating, b.id);
    });
    for (std::size_t i = 0; i < std::min(quota, pool.size()); ++i) expect.push_back(pool[i].id);
    if (pool.size() < quota) shortfall[source] = quota - pool.size();
  }
  CHECK(got.selected == expect);
  CHECK(got.shortfall == shortfall);
  CHECK(got.shortfall.at("missing") == 3);
  for (const auto& id : got.selected) {
    const auto it = std::find_if(items.begin(), items.end(), [&](const RatedItem& x) { return x.id == id; });
    CHECK(it->source != "art");
  }
}
}

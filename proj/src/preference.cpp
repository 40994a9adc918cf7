// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#include "difflab/preference.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

namespace difflab {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y = static_cast<std::int64_t>(yoe) + era * 400 + (m <= 2);
}

bool leap(std::int64_t y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

unsigned days_in_month(std::int64_t y, unsigned m) {
  static constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && leap(y) ? 29 : kDays[m - 1];
}

// Fixed-width unsigned field at s[pos, pos+width).
bool digits(std::string_view s, std::size_t pos, std::size_t width, unsigned& out) {
  if (pos + width > s.size()) return false;
  out = 0;
  for (std::size_t i = pos; i < pos + width; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    out = out * 10 + static_cast<unsigned>(s[i] - '0');
  }
  return true;
}

std::optional<std::string> get_string(const nlohmann::json& rec, const char* key) {
  const auto it = rec.find(key);
  if (it == rec.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

std::string_view to_string(Choice c) { return c == Choice::kA ? "A" : "B"; }

std::optional<Choice> parse_choice(std::string_view s) {
  if (s == "A") return Choice::kA;
  if (s == "B") return Choice::kB;
  return std::nullopt;
}

std::optional<std::int64_t> parse_timestamp(std::string_view s) {
  unsigned year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  if (!digits(s, 0, 4, year) || s.size() < 19 || s[4] != '-' || !digits(s, 5, 2, month) || s[7] != '-' ||
      !digits(s, 8, 2, day) || s[10] != 'T' || !digits(s, 11, 2, hour) || s[13] != ':' ||
      !digits(s, 14, 2, minute) || s[16] != ':' || !digits(s, 17, 2, second)) {
    return std::nullopt;
  }
  if (month < 1 || month > 12 || day < 1 || day > days_in_month(year, month) || hour > 23 || minute > 59 ||
      second > 59) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  std::int64_t micros = 0;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    std::size_t n = 0;
    std::int64_t scale = 100000;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
      if (n < 6) micros += (s[pos] - '0') * scale;
      scale /= 10;
      ++pos;
      ++n;
    }
    if (n == 0) return std::nullopt;
  }
  std::int64_t offset_s = 0;
  if (pos < s.size() && s[pos] == 'Z') {
    ++pos;
  } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
    const int sign = s[pos] == '+' ? 1 : -1;
    unsigned oh = 0, om = 0;
    if (!digits(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' || !digits(s, pos + 4, 2, om) ||
        oh > 23 || om > 59) {
      return std::nullopt;
    }
    offset_s = sign * static_cast<std::int64_t>(oh * 3600 + om * 60);
    pos += 6;
  } else {
    return std::nullopt;
  }
  if (pos != s.size()) return std::nullopt;

  const std::int64_t days = days_from_civil(year, month, day);
  const std::int64_t secs = days * 86400 + hour * 3600 + minute * 60 + second - offset_s;
  return secs * 1000000 + micros;
}

std::string format_timestamp(std::int64_t micros) {
  std::int64_t secs = micros / 1000000;
  std::int64_t frac = micros % 1000000;
  if (frac < 0) {
    frac += 1000000;
    --secs;
  }
  std::int64_t days = secs / 86400;
  std::int64_t rem = secs % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  std::int64_t y = 0;
  unsigned m = 0, d = 0;
  civil_from_days(days, y, m, d);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lld.%06lldZ", static_cast<long long>(y), m, d,
                static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                static_cast<long long>(rem % 60), static_cast<long long>(frac));
  return buf;
}

void StudyRules::validate() const {
  require(min_raters >= 1, "study rules: min_raters must be >= 1");
  require(win_margin >= 1, "study rules: win_margin must be >= 1");
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::kWinA: return "win_A";
    case Outcome::kWinB: return "win_B";
    case Outcome::kTie: return "tie";
    case Outcome::kInvalid: return "invalid_insufficient_raters";
  }
  return "";
}

PreferenceRatio PreferenceRatio::of(std::size_t wins_a, std::size_t wins_b) {
  if (wins_b > 0) {
    return {Kind::kFinite, static_cast<double>(wins_a) / static_cast<double>(wins_b)};
  }
  return {wins_a > 0 ? Kind::kInfinite : Kind::kUndefined, 0.0};
}

IngestResult ingest_votes(std::span<const nlohmann::json> records) {
  IngestResult result;
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::pair<Vote, std::size_t>> latest;

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    auto reject = [&](std::string reason) { result.rejects.push_back({i, std::move(reason)}); };
    if (!rec.is_object()) {
      reject("record is not an object");
      continue;
    }
    const auto study = get_string(rec, "study");
    const auto pair = get_string(rec, "pair");
    const auto rater = get_string(rec, "rater");
    const auto choice_str = get_string(rec, "choice");
    const auto ts = get_string(rec, "ts");
    if (!study || study->empty()) { reject("missing or empty 'study'"); continue; }
    if (!pair || pair->empty()) { reject("missing or empty 'pair'"); continue; }
    if (!rater || rater->empty()) { reject("missing or empty 'rater'"); continue; }
    if (!choice_str) { reject("missing 'choice'"); continue; }
    const auto choice = parse_choice(*choice_str);
    if (!choice) { reject("choice must be \"A\" or \"B\", got \"" + *choice_str + "\""); continue; }
    if (!ts) { reject("missing 'ts'"); continue; }
    const auto ts_us = parse_timestamp(*ts);
    if (!ts_us) { reject("unparsable timestamp \"" + *ts + "\""); continue; }

    Vote vote{*study, *pair, *rater, *choice, *ts, *ts_us};
    Key key{vote.study, vote.pair, vote.rater};
    auto it = latest.find(key);
    if (it == latest.end()) {
      latest.emplace(std::move(key), std::make_pair(std::move(vote), i));
    } else if (vote.ts_us >= it->second.first.ts_us) {
      it->second = {std::move(vote), i};
    }
  }
  result.votes.reserve(latest.size());
  for (auto& [key, entry] : latest) result.votes.push_back(std::move(entry.first));
  return result;
}

IngestResult ingest_vote_lines(std::istream& in) {
  std::vector<nlohmann::json> records;
  std::vector<std::size_t> line_of;
  std::vector<RejectedRecord> parse_rejects;
  std::string line;
  std::size_t lineno = 0;
  for (; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(nlohmann::json::parse(line));
      line_of.push_back(lineno);
    } catch (const nlohmann::json::parse_error& e) {
      parse_rejects.push_back({lineno, std::string("invalid JSON: ") + e.what()});
    }
  }
  IngestResult result = ingest_votes(records);
  for (auto& r : result.rejects) r.index = line_of[r.index];
  result.rejects.insert(result.rejects.end(), parse_rejects.begin(), parse_rejects.end());
  std::sort(result.rejects.begin(), result.rejects.end(),
            [](const RejectedRecord& a, const RejectedRecord& b) { return a.index < b.index; });
  return result;
}

nlohmann::json vote_to_json(const Vote& v) {
  nlohmann::json j;
  j["study"] = v.study;
  j["pair"] = v.pair;
  j["rater"] = v.rater;
  j["choice"] = std::string(to_string(v.choice));
  j["ts"] = v.ts;
  return j;
}

Outcome decide(std::size_t votes_a, std::size_t votes_b, std::size_t unique_raters, const StudyRules& rules) {
  if (unique_raters < rules.min_raters) return Outcome::kInvalid;
  const std::size_t margin = votes_a > votes_b ? votes_a - votes_b : votes_b - votes_a;
  if (margin < rules.win_margin) return Outcome::kTie;
  return votes_a > votes_b ? Outcome::kWinA : Outcome::kWinB;
}

PairResult score_pair(std::span<const Vote> votes, const StudyRules& rules) {
  rules.validate();
  PairResult result;
  if (!votes.empty()) result.pair = votes.front().pair;
  std::set<std::string> raters;
  for (const auto& v : votes) {
    require(v.pair == result.pair, "score_pair: mixed pair ids '" + result.pair + "' and '" + v.pair + "'");
    raters.insert(v.rater);
    if (v.choice == Choice::kA) ++result.votes_a; else ++result.votes_b;
  }
  result.unique_raters = raters.size();
  result.outcome = decide(result.votes_a, result.votes_b, result.unique_raters, rules);
  return result;
}

StudyReport study_report(std::span<const Vote> votes, const StudyRules& rules, const std::string& study,
                         std::span<const std::string> known_pairs) {
  rules.validate();
  std::map<std::string, std::vector<Vote>> by_pair;
  for (const auto& p : known_pairs) by_pair[p];
  for (const auto& v : votes) {
    if (v.study == study) by_pair[v.pair].push_back(v);
  }

  StudyReport report;
  report.study = study;
  for (const auto& [pair, pair_votes] : by_pair) {
    PairResult r = score_pair(pair_votes, rules);
    r.pair = pair;
    switch (r.outcome) {
      case Outcome::kWinA: ++report.wins_a; break;
      case Outcome::kWinB: ++report.wins_b; break;
      case Outcome::kTie: ++report.ties; break;
      case Outcome::kInvalid: ++report.invalid; break;
    }
    report.pairs.push_back(std::move(r));
  }
  report.total_pairs = report.pairs.size();
  report.excluded = report.ties + report.invalid;
  const std::size_t decided = report.decided();
  const std::size_t valid = decided + report.ties;
  report.empty = valid == 0;
  if (decided > 0) {
    report.win_rate_a = static_cast<double>(report.wins_a) / static_cast<double>(decided);
    report.win_rate_b = static_cast<double>(report.wins_b) / static_cast<double>(decided);
  }
  if (valid > 0) {
    report.win_rate_a_valid = static_cast<double>(report.wins_a) / static_cast<double>(valid);
    report.win_rate_b_valid = static_cast<double>(report.wins_b) / static_cast<double>(valid);
  }
  report.ratio = PreferenceRatio::of(report.wins_a, report.wins_b);
  return report;
}

std::vector<std::string> study_ids(std::span<const Vote> votes) {
  std::set<std::string> ids;
  for (const auto& v : votes) ids.insert(v.study);
  return {ids.begin(), ids.end()};
}

RatingCuration curate_by_ratings(std::span<const RatedItem> items,
                                 const std::map<std::string, std::size_t>& quotas,
                                 std::size_t min_rater_count) {
  std::map<std::string, std::vector<const RatedItem*>> by_source;
  for (const auto& [source, quota] : quotas) by_source[source];
  for (const auto& item : items) {
    if (!quotas.contains(item.source)) continue;
    if (item.rater_count >= min_rater_count) by_source[item.source].push_back(&item);
  }

  RatingCuration result;
  for (auto& [source, pool] : by_source) {
    std::sort(pool.begin(), pool.end(), [](const RatedItem* a, const RatedItem* b) {
      if (a->rating != b->rating) return a->rating > b->rating;
      return a->id < b->id;
    });
    const std::size_t quota = quotas.at(source);
    const std::size_t take = std::min(quota, pool.size());
    for (std::size_t i = 0; i < take; ++i) result.selected.push_back(pool[i]->id);
    if (take < quota) result.shortfall[source] = quota - take;
  }
  return result;
}

}  // namespace difflab

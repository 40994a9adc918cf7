// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#include "difflab/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace difflab::io {

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + ": expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw FormatError(where + ": missing '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw FormatError(where + ": field '" + key + "' has the wrong type");
  }
}

std::optional<double> optional_number(const json& j, const char* key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw FormatError(where + ": field '" + key + "' must be a number");
  return it->get<double>();
}

json optional_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string line_where(std::size_t lineno) { return "line " + std::to_string(lineno + 1); }

// Calls fn(record, lineno) for every nonblank JSONL line.
template <typename Fn>
void for_each_jsonl(std::istream& in, Fn fn) {
  std::string line;
  for (std::size_t lineno = 0; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(line_where(lineno) + ": invalid JSON: " + e.what());
    }
    fn(rec, lineno);
  }
}

long long parse_int(const std::string& s, const std::string& where) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError(where + ": '" + s + "' is not an integer");
  return v;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError(where + ": '" + s + "' is not a number");
  return v;
}

std::string covariance_name(CovarianceMode m) { return m == CovarianceMode::kUnbiased ? "unbiased" : "biased"; }

Outcome outcome_from_string(const std::string& s) {
  for (Outcome o : {Outcome::kWinA, Outcome::kWinB, Outcome::kTie, Outcome::kInvalid}) {
    if (to_string(o) == s) return o;
  }
  throw FormatError("unknown outcome '" + s + "'");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json schedule_json(const DdpmSchedule& sched, const std::string& name) {
  json j;
  j["kind"] = "ddpm";
  j["T"] = sched.steps();
  j["betas"] = sched.betas();
  j["meta"] = {{"name", name}, {"terminal_snr", terminal_snr(sched)}};
  return j;
}

DdpmSchedule schedule_from_json(const json& j) {
  const std::string where = "schedule";
  if (field<std::string>(j, "kind", where) != "ddpm") throw FormatError(where + ": kind must be \"ddpm\"");
  auto betas = field<std::vector<double>>(j, "betas", where);
  if (field<std::size_t>(j, "T", where) != betas.size()) throw FormatError(where + ": T does not match betas");
  try {
    return DdpmSchedule::from_betas(std::move(betas));
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": " + e.what());
  }
}

json grid_json(const SigmaGrid& grid) {
  json j;
  j["kind"] = "edm";
  j["n"] = grid.n;
  j["sigmas"] = grid.sigmas;
  j["meta"] = {{"sigma_min", grid.sigma_min}, {"sigma_max", grid.sigma_max}, {"rho", grid.rho}};
  return j;
}

SigmaGrid grid_from_json(const json& j) {
  const std::string where = "grid";
  if (field<std::string>(j, "kind", where) != "edm") throw FormatError(where + ": kind must be \"edm\"");
  SigmaGrid grid;
  grid.n = field<std::size_t>(j, "n", where);
  grid.sigmas = field<std::vector<double>>(j, "sigmas", where);
  const json meta = field<json>(j, "meta", where);
  grid.sigma_min = field<double>(meta, "sigma_min", where + " meta");
  grid.sigma_max = field<double>(meta, "sigma_max", where + " meta");
  grid.rho = field<double>(meta, "rho", where + " meta");
  try {
    grid.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": " + e.what());
  }
  return grid;
}

void write_snr_csv(std::ostream& out, const DdpmSchedule& sched) {
  out << "t,alpha_bar,snr,log_snr\n";
  for (std::size_t t = 1; t <= sched.steps(); ++t) {
    const double snr = snr_at(sched, t);
    out << t << ',' << format_double(sched.alpha_bar(t)) << ',' << format_double(snr) << ','
        << format_double(std::log(snr)) << '\n';
  }
}

void write_grid_csv(std::ostream& out, const SigmaGrid& grid) {
  out << "i,sigma\n";
  for (std::size_t i = 0; i < grid.sigmas.size(); ++i) out << i << ',' << format_double(grid.sigmas[i]) << '\n';
}

void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryPoint> points) {
  out << "step,sigma,norm,mean\n";
  for (const auto& p : points) {
    out << p.step << ',' << format_double(p.sigma) << ',' << format_double(p.norm) << ',' << format_double(p.mean)
        << '\n';
  }
}

void write_sample_line(std::ostream& out, std::uint64_t seed, std::span<const double> x) {
  json j;
  j["seed"] = seed;
  j["x"] = std::vector<double>(x.begin(), x.end());
  out << j.dump() << '\n';
}

json mean_recovery_json(std::span<const MeanRecoveryReport> reports, const MeanRecoveryConfig& cfg) {
  json j;
  j["config"] = {{"dim", cfg.dim}, {"n_samples", cfg.n_samples}, {"seed", cfg.seed}, {"saturation", cfg.saturation}};
  json arr = json::array();
  for (const auto& r : reports) {
    arr.push_back({{"label", r.label},
                   {"kind", r.kind},
                   {"avg_abs_mean", r.avg_abs_mean},
                   {"saturated_fraction", r.saturated_fraction},
                   {"means", r.means}});
  }
  j["schedules"] = std::move(arr);
  return j;
}

std::vector<MeanRecoveryReport> mean_recovery_from_json(const json& j) {
  const std::string where = "mean recovery report";
  std::vector<MeanRecoveryReport> out;
  for (const auto& r : field<json>(j, "schedules", where)) {
    MeanRecoveryReport rep;
    rep.label = field<std::string>(r, "label", where);
    rep.kind = field<std::string>(r, "kind", where);
    rep.avg_abs_mean = field<double>(r, "avg_abs_mean", where);
    rep.saturated_fraction = field<double>(r, "saturated_fraction", where);
    rep.means = field<Vec>(r, "means", where);
    out.push_back(std::move(rep));
  }
  return out;
}

std::string mean_recovery_table(std::span<const MeanRecoveryReport> reports, double saturation) {
  std::size_t width = 8;
  for (const auto& r : reports) width = std::max(width, r.label.size());
  std::ostringstream os;
  char head[128];
  std::snprintf(head, sizeof head, "%-*s  %12s  %14s\n", static_cast<int>(width), "schedule", "avg |mean|",
                ("frac >= " + format_double(saturation)).c_str());
  os << head;
  for (const auto& r : reports) {
    char row[256];
    std::snprintf(row, sizeof row, "%-*s  %12.6f  %14.4f\n", static_cast<int>(width), r.label.c_str(),
                  r.avg_abs_mean, r.saturated_fraction);
    os << row;
  }
  return os.str();
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted) throw FormatError("unterminated quoted CSV field");
  out.push_back(std::move(cur));
  return out;
}

std::vector<ImageMeta> read_image_meta_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("image metadata: empty file");
  const auto header = split_csv_line(line);
  const bool has_category = header.size() == 4 && header[3] == "category";
  if (header.size() < 3 || header[0] != "id" || header[1] != "width" || header[2] != "height" ||
      (header.size() == 4 && !has_category) || header.size() > 4) {
    throw FormatError("image metadata: header must be id,width,height[,category]");
  }
  std::vector<ImageMeta> out;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "image metadata " + line_where(lineno);
    const auto cols = split_csv_line(line);
    if (cols.size() != header.size()) throw FormatError(where + ": expected " + std::to_string(header.size()) + " columns");
    ImageMeta meta;
    meta.id = cols[0];
    if (meta.id.empty()) throw FormatError(where + ": empty id");
    const long long w = parse_int(cols[1], where);
    const long long h = parse_int(cols[2], where);
    if (w < 1 || h < 1 || w > 1'000'000 || h > 1'000'000) throw FormatError(where + ": dimensions out of range");
    meta.width = static_cast<int>(w);
    meta.height = static_cast<int>(h);
    if (has_category && !cols[3].empty()) meta.category = cols[3];
    out.push_back(std::move(meta));
  }
  return out;
}

void write_image_meta_csv(std::ostream& out, std::span<const ImageMeta> images) {
  bool any_category = false;
  for (const auto& m : images) any_category |= m.category.has_value();
  out << (any_category ? "id,width,height,category\n" : "id,width,height\n");
  for (const auto& m : images) {
    out << csv_field(m.id) << ',' << m.width << ',' << m.height;
    if (any_category) out << ',' << csv_field(m.category.value_or(""));
    out << '\n';
  }
}

json buckets_json(std::span<const Bucket> buckets) {
  json arr = json::array();
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    const auto& b = buckets[i];
    arr.push_back({{"index", i}, {"width", b.width}, {"height", b.height}, {"label", b.label}, {"ratio", b.ratio()}});
  }
  return {{"buckets", std::move(arr)}};
}

std::vector<Bucket> buckets_from_json(const json& j) {
  const std::string where = "buckets";
  std::vector<Bucket> out;
  for (const auto& b : field<json>(j, "buckets", where)) {
    Bucket bucket{field<int>(b, "width", where), field<int>(b, "height", where), field<std::string>(b, "label", where)};
    if (bucket.width < 1 || bucket.height < 1) throw FormatError(where + ": dimensions must be >= 1");
    out.push_back(std::move(bucket));
  }
  if (out.empty()) throw FormatError(where + ": empty bucket list");
  return out;
}

void write_assignments_jsonl(std::ostream& out, std::span<const BucketAssignment> assignments,
                             std::span<const Bucket> buckets) {
  for (const auto& a : assignments) {
    const Bucket& b = buckets[a.bucket];
    json j{{"image", a.image_id},          {"bucket", a.bucket},
           {"width", b.width},             {"height", b.height},
           {"label", b.label},             {"log_distance", a.log_distance},
           {"crop_fraction", a.crop_fraction}};
    out << j.dump() << '\n';
  }
}

std::vector<BucketAssignment> read_assignments_jsonl(std::istream& in) {
  std::vector<BucketAssignment> out;
  for_each_jsonl(in, [&](const json& j, std::size_t lineno) {
    const std::string where = "assignments " + line_where(lineno);
    out.push_back({field<std::string>(j, "image", where), field<std::size_t>(j, "bucket", where),
                   field<double>(j, "log_distance", where), field<double>(j, "crop_fraction", where)});
  });
  return out;
}

void write_plan_jsonl(std::ostream& out, const SamplingPlan& plan, std::span<const Bucket> buckets) {
  for (std::size_t i = 0; i < plan.batches.size(); ++i) {
    const Batch& batch = plan.batches[i];
    const Bucket& b = buckets[batch.bucket];
    json j{{"batch", i}, {"bucket", batch.bucket}, {"width", b.width}, {"height", b.height}, {"ids", batch.ids}};
    out << j.dump() << '\n';
  }
}

SamplingPlan read_plan_jsonl(std::istream& in) {
  SamplingPlan plan;
  for_each_jsonl(in, [&](const json& j, std::size_t lineno) {
    const std::string where = "plan " + line_where(lineno);
    Batch batch{field<std::size_t>(j, "bucket", where), field<std::vector<std::string>>(j, "ids", where)};
    if (batch.ids.empty()) throw FormatError(where + ": empty batch");
    if (plan.batches.empty()) plan.batch_size = batch.ids.size();
    if (batch.ids.size() != plan.batch_size) throw FormatError(where + ": batch size differs from the first batch");
    for (const auto& id : batch.ids) ++plan.repeats[id];
    plan.batches.push_back(std::move(batch));
  });
  return plan;
}

json bucket_stats_json(const BucketStats& stats, std::span<const Bucket> buckets) {
  json arr = json::array();
  for (std::size_t b = 0; b < stats.batch_counts.size(); ++b) {
    json entry{{"index", b},
               {"batches", stats.batch_counts[b]},
               {"share", stats.shares[b]},
               {"natural_share", stats.natural_shares[b]}};
    if (b < buckets.size()) {
      entry["width"] = buckets[b].width;
      entry["height"] = buckets[b].height;
      entry["label"] = buckets[b].label;
    }
    arr.push_back(std::move(entry));
  }
  std::size_t total = 0;
  for (auto c : stats.batch_counts) total += c;
  return {{"batches", total},
          {"buckets", std::move(arr)},
          {"nonempty_buckets", stats.nonempty_buckets},
          {"l1_to_uniform", stats.l1_to_uniform},
          {"l1_to_natural", stats.l1_to_natural},
          {"max_repeat", stats.max_repeat}};
}

BucketStats bucket_stats_from_json(const json& j) {
  const std::string where = "bucket stats";
  BucketStats stats;
  for (const auto& b : field<json>(j, "buckets", where)) {
    stats.batch_counts.push_back(field<std::size_t>(b, "batches", where));
    stats.shares.push_back(field<double>(b, "share", where));
    stats.natural_shares.push_back(field<double>(b, "natural_share", where));
  }
  stats.nonempty_buckets = field<std::size_t>(j, "nonempty_buckets", where);
  stats.l1_to_uniform = field<double>(j, "l1_to_uniform", where);
  stats.l1_to_natural = field<double>(j, "l1_to_natural", where);
  stats.max_repeat = field<std::size_t>(j, "max_repeat", where);
  return stats;
}

FeatureSet read_features_jsonl(std::istream& in) {
  FeatureSet set;
  for_each_jsonl(in, [&](const json& j, std::size_t lineno) {
    const std::string where = "features " + line_where(lineno);
    FeatureRow row;
    row.id = field<std::string>(j, "id", where);
    row.category = field<std::string>(j, "category", where);
    row.feat = field<Vec>(j, "feat", where);
    row.aesthetic = optional_number(j, "aesthetic", where);
    row.alignment = optional_number(j, "alignment", where);
    for (double v : row.feat) {
      if (!std::isfinite(v)) throw FormatError(where + ": non-finite feature value");
    }
    if (!set.rows.empty() && row.feat.size() != set.dim()) {
      throw FormatError(where + ": feature dimension " + std::to_string(row.feat.size()) + " differs from " +
                        std::to_string(set.dim()));
    }
    set.rows.push_back(std::move(row));
  });
  return set;
}

void write_features_jsonl(std::ostream& out, const FeatureSet& set) {
  for (const auto& row : set.rows) {
    json j{{"id", row.id}, {"category", row.category}, {"feat", row.feat}};
    if (row.aesthetic) j["aesthetic"] = *row.aesthetic;
    if (row.alignment) j["alignment"] = *row.alignment;
    out << j.dump() << '\n';
  }
}

json fid_report_json(const FidReport& report) {
  json counts = json::object();
  for (const auto& [cat, c] : report.counts) counts[cat] = {{"reference", c.reference}, {"generated", c.generated}};
  json per_category = json::object();
  for (const auto& [cat, v] : report.per_category) per_category[cat] = v;
  return {{"overall", report.overall},
          {"per_category", std::move(per_category)},
          {"counts", std::move(counts)},
          {"absent", report.absent},
          {"single_sample", report.single_sample},
          {"meta", {{"resolution", report.resolution}, {"covariance", covariance_name(report.covariance)}}}};
}

FidReport fid_report_from_json(const json& j) {
  const std::string where = "fid report";
  FidReport report;
  report.overall = field<double>(j, "overall", where);
  report.per_category = field<std::map<std::string, double>>(j, "per_category", where);
  const json counts = field<json>(j, "counts", where);
  for (const auto& [cat, c] : counts.items()) {
    report.counts[cat] = {field<std::size_t>(c, "reference", where), field<std::size_t>(c, "generated", where)};
  }
  report.absent = field<std::vector<std::string>>(j, "absent", where);
  report.single_sample = field<std::vector<std::string>>(j, "single_sample", where);
  const json meta = field<json>(j, "meta", where);
  report.resolution = field<std::string>(meta, "resolution", where);
  const auto cov = field<std::string>(meta, "covariance", where);
  if (cov != "unbiased" && cov != "biased") throw FormatError(where + ": unknown covariance '" + cov + "'");
  report.covariance = cov == "unbiased" ? CovarianceMode::kUnbiased : CovarianceMode::kBiased;
  return report;
}

json curation_json(const CurationResult& result) {
  json shortfall = json::object();
  for (const auto& [cat, n] : result.shortfall) shortfall[cat] = n;
  return {{"selected", result.selected}, {"shortfall", std::move(shortfall)}};
}

CurationResult curation_from_json(const json& j) {
  const std::string where = "curation";
  return {field<std::vector<std::string>>(j, "selected", where),
          field<std::map<std::string, std::size_t>>(j, "shortfall", where)};
}

void write_votes_jsonl(std::ostream& out, std::span<const Vote> votes) {
  for (const auto& v : votes) out << vote_to_json(v).dump() << '\n';
}

json study_report_json(const StudyReport& report) {
  json ratio;
  switch (report.ratio.kind) {
    case PreferenceRatio::Kind::kFinite: ratio = report.ratio.value; break;
    case PreferenceRatio::Kind::kInfinite: ratio = "inf"; break;
    case PreferenceRatio::Kind::kUndefined: ratio = nullptr; break;
  }
  json pairs = json::array();
  for (const auto& p : report.pairs) {
    pairs.push_back({{"pair", p.pair},
                     {"votes_A", p.votes_a},
                     {"votes_B", p.votes_b},
                     {"unique_raters", p.unique_raters},
                     {"outcome", std::string(to_string(p.outcome))}});
  }
  return {{"study", report.study},
          {"total_pairs", report.total_pairs},
          {"counts",
           {{"win_A", report.wins_a}, {"win_B", report.wins_b}, {"tie", report.ties}, {"invalid", report.invalid}}},
          {"decided", report.decided()},
          {"excluded", report.excluded},
          {"empty", report.empty},
          {"win_rate", {{"A", optional_to_json(report.win_rate_a)}, {"B", optional_to_json(report.win_rate_b)}}},
          {"win_rate_valid",
           {{"A", optional_to_json(report.win_rate_a_valid)}, {"B", optional_to_json(report.win_rate_b_valid)}}},
          {"ratio", std::move(ratio)},
          {"pairs", std::move(pairs)}};
}

StudyReport study_report_from_json(const json& j) {
  const std::string where = "study report";
  StudyReport report;
  report.study = field<std::string>(j, "study", where);
  report.total_pairs = field<std::size_t>(j, "total_pairs", where);
  const json counts = field<json>(j, "counts", where);
  report.wins_a = field<std::size_t>(counts, "win_A", where);
  report.wins_b = field<std::size_t>(counts, "win_B", where);
  report.ties = field<std::size_t>(counts, "tie", where);
  report.invalid = field<std::size_t>(counts, "invalid", where);
  report.excluded = field<std::size_t>(j, "excluded", where);
  report.empty = field<bool>(j, "empty", where);
  const json rate = field<json>(j, "win_rate", where);
  report.win_rate_a = optional_number(rate, "A", where);
  report.win_rate_b = optional_number(rate, "B", where);
  const json rate_valid = field<json>(j, "win_rate_valid", where);
  report.win_rate_a_valid = optional_number(rate_valid, "A", where);
  report.win_rate_b_valid = optional_number(rate_valid, "B", where);
  const json ratio = field<json>(j, "ratio", where);
  if (ratio.is_number()) {
    report.ratio = {PreferenceRatio::Kind::kFinite, ratio.get<double>()};
  } else if (ratio == "inf") {
    report.ratio = {PreferenceRatio::Kind::kInfinite, 0.0};
  } else if (ratio.is_null()) {
    report.ratio = {PreferenceRatio::Kind::kUndefined, 0.0};
  } else {
    throw FormatError(where + ": ratio must be a number, \"inf\" or null");
  }
  for (const auto& p : field<json>(j, "pairs", where)) {
    report.pairs.push_back({field<std::string>(p, "pair", where), field<std::size_t>(p, "votes_A", where),
                            field<std::size_t>(p, "votes_B", where), field<std::size_t>(p, "unique_raters", where),
                            outcome_from_string(field<std::string>(p, "outcome", where))});
  }
  return report;
}

json rejects_json(std::span<const RejectedRecord> rejects) {
  json arr = json::array();
  for (const auto& r : rejects) arr.push_back({{"line", r.index + 1}, {"reason", r.reason}});
  return arr;
}

std::vector<RatedItem> read_rated_items_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("ratings: empty file");
  const auto header = split_csv_line(line);
  if (header != std::vector<std::string>{"id", "source", "rating", "rater_count"}) {
    throw FormatError("ratings: header must be id,source,rating,rater_count");
  }
  std::vector<RatedItem> out;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "ratings " + line_where(lineno);
    const auto cols = split_csv_line(line);
    if (cols.size() != 4) throw FormatError(where + ": expected 4 columns");
    const long long count = parse_int(cols[3], where);
    if (count < 0) throw FormatError(where + ": negative rater_count");
    const double rating = parse_double(cols[2], where);
    if (!std::isfinite(rating)) throw FormatError(where + ": rating must be finite");
    out.push_back({cols[0], cols[1], rating, static_cast<std::size_t>(count)});
  }
  return out;
}

json rating_curation_json(const RatingCuration& result) {
  json shortfall = json::object();
  for (const auto& [source, n] : result.shortfall) shortfall[source] = n;
  return {{"selected", result.selected}, {"shortfall", std::move(shortfall)}};
}

}  // namespace difflab::io

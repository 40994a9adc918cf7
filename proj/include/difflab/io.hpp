// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

// File formats: JSON documents, JSONL streams and CSV tables for every
// module. Every JSON writer has a matching reader.

#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "difflab/bucketing.hpp"
#include "difflab/fid.hpp"
#include "difflab/preference.hpp"
#include "difflab/samplers.hpp"
#include "difflab/schedules.hpp"
#include "difflab/toy_denoisers.hpp"

namespace difflab::io {

using nlohmann::json;

/// Thrown on malformed input files. Message names the line when known.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

/// Pretty-printed with sorted keys and a trailing newline.
std::string dump(const json& j);

// Schedules and grids: {"kind":"ddpm","T":..,"betas":[..],"meta":{..}} and
// {"kind":"edm","n":..,"sigmas":[..],"meta":{..}}.
json schedule_json(const DdpmSchedule& sched, const std::string& name);
DdpmSchedule schedule_from_json(const json& j);
json grid_json(const SigmaGrid& grid);
SigmaGrid grid_from_json(const json& j);

/// Header t,alpha_bar,snr,log_snr; one row per step.
void write_snr_csv(std::ostream& out, const DdpmSchedule& sched);
/// Header i,sigma; includes the terminal 0.
void write_grid_csv(std::ostream& out, const SigmaGrid& grid);

/// Header step,sigma,norm,mean.
void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryPoint> points);
/// One {"seed":..,"x":[..]} line.
void write_sample_line(std::ostream& out, std::uint64_t seed, std::span<const double> x);

json mean_recovery_json(std::span<const MeanRecoveryReport> reports, const MeanRecoveryConfig& cfg);
std::vector<MeanRecoveryReport> mean_recovery_from_json(const json& j);
/// Fixed-width table: schedule, avg |mean|, fraction >= saturation.
std::string mean_recovery_table(std::span<const MeanRecoveryReport> reports, double saturation);

/// CSV with header id,width,height[,category].
std::vector<ImageMeta> read_image_meta_csv(std::istream& in);
void write_image_meta_csv(std::ostream& out, std::span<const ImageMeta> images);

json buckets_json(std::span<const Bucket> buckets);
std::vector<Bucket> buckets_from_json(const json& j);

/// One {"image","bucket","width","height","label","log_distance","crop_fraction"} per line.
void write_assignments_jsonl(std::ostream& out, std::span<const BucketAssignment> assignments,
                             std::span<const Bucket> buckets);
std::vector<BucketAssignment> read_assignments_jsonl(std::istream& in);

/// One {"batch":i,"bucket":b,"width":..,"height":..,"ids":[..]} per line.
void write_plan_jsonl(std::ostream& out, const SamplingPlan& plan, std::span<const Bucket> buckets);
SamplingPlan read_plan_jsonl(std::istream& in);

json bucket_stats_json(const BucketStats& stats, std::span<const Bucket> buckets);
BucketStats bucket_stats_from_json(const json& j);

/// {"id","category","feat":[..],"aesthetic"?,"alignment"?} per line.
FeatureSet read_features_jsonl(std::istream& in);
void write_features_jsonl(std::ostream& out, const FeatureSet& set);

json fid_report_json(const FidReport& report);
FidReport fid_report_from_json(const json& j);
json curation_json(const CurationResult& result);
CurationResult curation_from_json(const json& j);

void write_votes_jsonl(std::ostream& out, std::span<const Vote> votes);

/// The ratio is a number, the string "inf", or null when undefined.
json study_report_json(const StudyReport& report);
StudyReport study_report_from_json(const json& j);
json rejects_json(std::span<const RejectedRecord> rejects);

/// CSV with header id,source,rating,rater_count.
std::vector<RatedItem> read_rated_items_csv(std::istream& in);
json rating_curation_json(const RatingCuration& result);

/// Quotes a field when it holds a comma, quote or line break.
std::string csv_field(const std::string& value);
/// Splits one CSV record; double quotes may wrap fields and "" escapes a quote.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace difflab::io

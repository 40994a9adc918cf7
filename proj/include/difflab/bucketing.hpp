// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "difflab/rng.hpp"

namespace difflab {

/// Training resolution. label names the ladder ratio (width:height) the
/// bucket was generated for, e.g. "3:4" for a portrait bucket.
struct Bucket {
  int width = 0;
  int height = 0;
  std::string label;

  double ratio() const { return static_cast<double>(width) / static_cast<double>(height); }
  std::int64_t area() const { return static_cast<std::int64_t>(width) * height; }
};

struct ImageMeta {
  std::string id;
  int width = 0;
  int height = 0;
  std::optional<std::string> category;
};

struct BucketAssignment {
  std::string image_id;
  std::size_t bucket = 0;
  double log_distance = 0.0;   // |ln r_img - ln r_bucket|
  double crop_fraction = 0.0;  // 1 - min(r_img / r_b, r_b / r_img)
};

struct Batch {
  std::size_t bucket = 0;
  std::vector<std::string> ids;
};

struct SamplingPlan {
  std::size_t batch_size = 0;
  std::vector<Batch> batches;
  std::map<std::string, std::size_t> repeats;  // scheduled images only
};

/// Bucket pick probability proportional to count^exponent.
struct PlanStrategy {
  enum class Kind { kNatural, kBalanced };

  Kind kind = Kind::kNatural;
  double tau = 1.0;

  static PlanStrategy natural() { return {Kind::kNatural, 1.0}; }
  static PlanStrategy balanced(double tau) { return {Kind::kBalanced, tau}; }
  double exponent() const { return kind == Kind::kNatural ? 1.0 : tau; }
};

struct BucketStats {
  std::vector<std::size_t> batch_counts;
  Vec shares;
  Vec natural_shares;
  std::size_t nonempty_buckets = 0;
  double l1_to_uniform = 0.0;
  double l1_to_natural = 0.0;
  std::size_t max_repeat = 0;
};

inline constexpr std::int64_t kDefaultPixelBudget = 1024 * 1024;
inline constexpr int kDefaultDivisor = 64;
inline constexpr std::size_t kDefaultMaxRepeat = 4;
/// ln(16/9): keeps the whole default ladder.
inline constexpr double kDefaultMaxLogRatio = 0.5753641449035618;

/// Buckets for the ladder 1:1, 5:4, 4:3, 3:2, 16:9 and mirrors, limited to
/// |ln ratio| <= max_log_ratio. Each ratio takes the divisor-rounded
/// neighbour of its ideal size sqrt(budget * r) x sqrt(budget / r) with the
/// smallest ratio error that fits the budget. Ratios are placed from the
/// most extreme toward square; a ratio whose choice is already taken falls
/// back to its next candidate, or is dropped. Output is sorted by ratio.
std::vector<Bucket> default_buckets(std::int64_t pixel_budget = kDefaultPixelBudget,
                                    int divisor = kDefaultDivisor,
                                    double max_log_ratio = kDefaultMaxLogRatio);

/// Nearest bucket in log aspect ratio; ties go to the larger area, then the
/// lower index.
BucketAssignment assign_image(const ImageMeta& img, std::span<const Bucket> buckets);
std::vector<BucketAssignment> assign_images(std::span<const ImageMeta> images,
                                            std::span<const Bucket> buckets);

/// Builds floor(assignments / batch_size) single-bucket batches. Buckets are
/// drawn with probability proportional to count^exponent among buckets that
/// can still fill a batch; slots are filled uniformly from images used fewer
/// than max_repeat times. The plan ends early if every bucket runs dry.
SamplingPlan plan_epoch(std::span<const BucketAssignment> assignments, std::size_t bucket_count,
                        std::size_t batch_size, PlanStrategy strategy, std::size_t max_repeat,
                        Rng& rng);

BucketStats plan_stats(const SamplingPlan& plan, std::span<const BucketAssignment> assignments,
                       std::size_t bucket_count);

}  // namespace difflab

// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#include "difflab/bucketing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <utility>

namespace difflab {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

struct LadderRatio {
  int num;  // width part
  int den;  // height part
};

// Landscape half of the ladder; portrait entries are transposes.
constexpr LadderRatio kLadder[] = {{1, 1}, {5, 4}, {4, 3}, {3, 2}, {16, 9}};

std::string ratio_label(int w, int h) { return std::to_string(w) + ":" + std::to_string(h); }

// Candidates for width/height ratio r: floor/ceil divisor multiples around the
// ideal size, best ratio error first, larger area on ties.
std::vector<std::pair<int, int>> candidates_for(double r, std::int64_t budget, int divisor) {
  const double ideal_w = std::sqrt(static_cast<double>(budget) * r);
  const double ideal_h = std::sqrt(static_cast<double>(budget) / r);
  std::set<std::pair<int, int>> raw;
  for (double wf : {std::floor(ideal_w / divisor), std::ceil(ideal_w / divisor)}) {
    for (double hf : {std::floor(ideal_h / divisor), std::ceil(ideal_h / divisor)}) {
      const int w = static_cast<int>(wf) * divisor;
      const int h = static_cast<int>(hf) * divisor;
      if (w < divisor || h < divisor) continue;
      if (static_cast<std::int64_t>(w) * h > budget) continue;
      raw.insert({w, h});
    }
  }
  if (raw.empty()) {
    // Fall back to shrinking the longer side until the area fits.
    int w = std::max(divisor, static_cast<int>(std::floor(ideal_w / divisor)) * divisor);
    int h = std::max(divisor, static_cast<int>(std::floor(ideal_h / divisor)) * divisor);
    while (static_cast<std::int64_t>(w) * h > budget && (w > divisor || h > divisor)) {
      if (w >= h) w -= divisor; else h -= divisor;
    }
    if (static_cast<std::int64_t>(w) * h <= budget) raw.insert({w, h});
  }
  std::vector<std::pair<int, int>> out(raw.begin(), raw.end());
  const double log_r = std::log(r);
  std::stable_sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
    const double ea = std::abs(std::log(static_cast<double>(a.first) / a.second) - log_r);
    const double eb = std::abs(std::log(static_cast<double>(b.first) / b.second) - log_r);
    if (ea != eb) return ea < eb;
    return static_cast<std::int64_t>(a.first) * a.second > static_cast<std::int64_t>(b.first) * b.second;
  });
  return out;
}

}  // namespace

std::vector<Bucket> default_buckets(std::int64_t pixel_budget, int divisor, double max_log_ratio) {
  require(divisor >= 1, "default_buckets: divisor must be >= 1");
  require(pixel_budget >= static_cast<std::int64_t>(divisor) * divisor,
          "default_buckets: budget must be at least divisor^2");
  require(max_log_ratio >= 0.0, "default_buckets: max_log_ratio must be >= 0");

  std::set<std::pair<int, int>> taken;
  std::vector<Bucket> out;
  // Extreme ratios first.
  for (auto it = std::rbegin(kLadder); it != std::rend(kLadder); ++it) {
    const double r = static_cast<double>(it->num) / it->den;
    if (std::log(r) > max_log_ratio + 1e-12) continue;
    for (const auto& [w, h] : candidates_for(r, pixel_budget, divisor)) {
      const bool square = w == h;
      if (taken.contains({w, h}) || (!square && taken.contains({h, w}))) continue;
      taken.insert({w, h});
      out.push_back({w, h, ratio_label(it->num, it->den)});
      if (!square) {
        taken.insert({h, w});
        out.push_back({h, w, ratio_label(it->den, it->num)});
      }
      break;
    }
  }
  require(!out.empty(), "default_buckets: no bucket satisfies the constraints");
  std::sort(out.begin(), out.end(), [](const Bucket& a, const Bucket& b) {
    if (a.ratio() != b.ratio()) return a.ratio() < b.ratio();
    return a.area() > b.area();
  });
  return out;
}

BucketAssignment assign_image(const ImageMeta& img, std::span<const Bucket> buckets) {
  require(!buckets.empty(), "assign_image: empty bucket list");
  require(img.width >= 1 && img.height >= 1, "assign_image: image dimensions must be >= 1");
  const double r_img = static_cast<double>(img.width) / img.height;
  const double log_img = std::log(r_img);

  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    const double dist = std::abs(log_img - std::log(buckets[b].ratio()));
    if (dist < best_dist || (dist == best_dist && buckets[b].area() > buckets[best].area())) {
      best = b;
      best_dist = dist;
    }
  }
  const double r_b = buckets[best].ratio();
  return {.image_id = img.id,
          .bucket = best,
          .log_distance = best_dist,
          .crop_fraction = 1.0 - std::min(r_img / r_b, r_b / r_img)};
}

std::vector<BucketAssignment> assign_images(std::span<const ImageMeta> images,
                                            std::span<const Bucket> buckets) {
  std::vector<BucketAssignment> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(assign_image(img, buckets));
  return out;
}

SamplingPlan plan_epoch(std::span<const BucketAssignment> assignments, std::size_t bucket_count,
                        std::size_t batch_size, PlanStrategy strategy, std::size_t max_repeat,
                        Rng& rng) {
  require(batch_size >= 1, "plan_epoch: batch_size must be >= 1");
  require(max_repeat >= 1, "plan_epoch: max_repeat must be >= 1");
  require(strategy.exponent() >= 0.0, "plan_epoch: tau must be >= 0");

  // Per bucket: images with remaining capacity, their use counts, and the
  // total remaining slots.
  struct Pool {
    std::vector<std::size_t> open;  // indices into assignments
    std::size_t slots = 0;
    double weight = 0.0;
  };
  std::vector<Pool> pools(bucket_count);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const std::size_t b = assignments[i].bucket;
    require(b < bucket_count, "plan_epoch: assignment references unknown bucket " + std::to_string(b));
    pools[b].open.push_back(i);
    pools[b].slots += max_repeat;
  }
  std::size_t largest = 0;
  for (auto& pool : pools) {
    if (!pool.open.empty()) pool.weight = std::pow(static_cast<double>(pool.open.size()), strategy.exponent());
    largest = std::max(largest, pool.open.size());
  }
  require(assignments.empty() || largest * max_repeat >= batch_size,
          "plan_epoch: batch_size exceeds every bucket's capacity (largest bucket " +
              std::to_string(largest) + " images, max_repeat " + std::to_string(max_repeat) + ")");

  SamplingPlan plan;
  plan.batch_size = batch_size;
  std::vector<std::size_t> uses(assignments.size(), 0);
  const std::size_t target = assignments.size() / batch_size;

  while (plan.batches.size() < target) {
    double total = 0.0;
    for (const auto& pool : pools) {
      if (pool.slots >= batch_size) total += pool.weight;
    }
    if (total <= 0.0) break;

    double pick = rng.uniform() * total;
    std::size_t chosen = bucket_count;
    for (std::size_t b = 0; b < bucket_count; ++b) {
      if (pools[b].slots < batch_size) continue;
      chosen = b;
      if (pick < pools[b].weight) break;
      pick -= pools[b].weight;
    }

    Pool& pool = pools[chosen];
    Batch batch{.bucket = chosen, .ids = {}};
    batch.ids.reserve(batch_size);
    for (std::size_t slot = 0; slot < batch_size; ++slot) {
      const std::size_t pos = rng.index(pool.open.size());
      const std::size_t idx = pool.open[pos];
      batch.ids.push_back(assignments[idx].image_id);
      ++plan.repeats[assignments[idx].image_id];
      --pool.slots;
      if (++uses[idx] == max_repeat) {
        pool.open[pos] = pool.open.back();
        pool.open.pop_back();
      }
    }
    plan.batches.push_back(std::move(batch));
  }
  return plan;
}

BucketStats plan_stats(const SamplingPlan& plan, std::span<const BucketAssignment> assignments,
                       std::size_t bucket_count) {
  std::unordered_map<std::string, std::size_t> bucket_of;
  std::vector<std::size_t> population(bucket_count, 0);
  for (const auto& a : assignments) {
    require(a.bucket < bucket_count, "plan_stats: assignment references unknown bucket");
    bucket_of[a.image_id] = a.bucket;
    ++population[a.bucket];
  }

  BucketStats stats;
  stats.batch_counts.assign(bucket_count, 0);
  std::unordered_map<std::string, std::size_t> repeats;
  for (std::size_t i = 0; i < plan.batches.size(); ++i) {
    const Batch& batch = plan.batches[i];
    require(batch.bucket < bucket_count, "plan_stats: batch " + std::to_string(i) + " has unknown bucket");
    for (const auto& id : batch.ids) {
      const auto it = bucket_of.find(id);
      require(it != bucket_of.end(), "plan_stats: batch " + std::to_string(i) + " has unknown image '" + id + "'");
      require(it->second == batch.bucket,
              "plan_stats: image '" + id + "' scheduled in batch " + std::to_string(i) +
                  " outside its bucket");
      stats.max_repeat = std::max(stats.max_repeat, ++repeats[id]);
    }
    ++stats.batch_counts[batch.bucket];
  }

  const double n_batches = static_cast<double>(plan.batches.size());
  const double n_images = static_cast<double>(assignments.size());
  stats.shares.assign(bucket_count, 0.0);
  stats.natural_shares.assign(bucket_count, 0.0);
  for (std::size_t b = 0; b < bucket_count; ++b) {
    if (population[b] > 0) ++stats.nonempty_buckets;
    if (n_batches > 0) stats.shares[b] = stats.batch_counts[b] / n_batches;
    if (n_images > 0) stats.natural_shares[b] = population[b] / n_images;
  }
  for (std::size_t b = 0; b < bucket_count; ++b) {
    const double uniform = population[b] > 0 ? 1.0 / static_cast<double>(stats.nonempty_buckets) : 0.0;
    stats.l1_to_uniform += std::abs(stats.shares[b] - uniform);
    stats.l1_to_natural += std::abs(stats.shares[b] - stats.natural_shares[b]);
  }
  return stats;
}

}  // namespace difflab

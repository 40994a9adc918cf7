// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "difflab/rng.hpp"

namespace difflab {

/// One embedded image. Features come from an external extractor; scores
/// are optional and only needed for curation.
struct FeatureRow {
  std::string id;
  std::string category;
  Vec feat;
  std::optional<double> aesthetic;
  std::optional<double> alignment;
};

struct FeatureSet {
  std::vector<FeatureRow> rows;

  /// Throws unless rows is nonempty, dimensions agree and categories are
  /// nonempty.
  void validate() const;
  std::size_t dim() const { return rows.empty() ? 0 : rows.front().feat.size(); }
  std::vector<std::string> categories() const;
};

enum class CovarianceMode { kUnbiased, kBiased };

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t count = 0;
  /// Set when count == 1: covariance is zero, not estimated.
  bool single_sample = false;
};

GaussianStats gaussian_stats(std::span<const Vec> rows, CovarianceMode mode = CovarianceMode::kUnbiased);
/// Stats over every row, or only rows of `category` when given.
GaussianStats gaussian_stats(const FeatureSet& set, const std::optional<std::string>& category = std::nullopt,
                             CovarianceMode mode = CovarianceMode::kUnbiased);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}). The trace of the
/// square root is taken as sum sqrt(eig(A^{1/2} S_b A^{1/2})) with
/// A^{1/2} the symmetric root of S_a, so only symmetric eigensolves are
/// needed. Negative eigenvalues are clamped to 0 and the result to >= 0.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

struct CategoryCounts {
  std::size_t reference = 0;
  std::size_t generated = 0;
};

struct FidReport {
  double overall = 0.0;
  std::map<std::string, double> per_category;
  std::map<std::string, CategoryCounts> counts;
  /// Categories present in only one of the two sets.
  std::vector<std::string> absent;
  /// Categories whose stats came from a single row.
  std::vector<std::string> single_sample;
  std::string resolution = "1024x1024";
  CovarianceMode covariance = CovarianceMode::kUnbiased;
};

FidReport fid_report(const FeatureSet& reference, const FeatureSet& generated, bool per_category,
                     CovarianceMode mode = CovarianceMode::kUnbiased);

struct CurationResult {
  std::vector<std::string> selected;
  /// category -> number of rows missing to reach the quota.
  std::map<std::string, std::size_t> shortfall;
};

/// Per category: keep rows with aesthetic >= min_aesthetic and
/// alignment >= min_alignment, rank by aesthetic (descending, id ascending on
/// ties) and take the first per_category_n. Output is grouped by category in
/// lexicographic order.
CurationResult curate_benchmark(const FeatureSet& candidates, std::size_t per_category_n,
                                double min_aesthetic, double min_alignment);

}  // namespace difflab

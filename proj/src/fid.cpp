// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#include "difflab/fid.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace difflab {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

// Symmetric PSD square root with eigenvalues clamped at 0.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw std::runtime_error("frechet_distance: eigensolver failed");
  const Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

void FeatureSet::validate() const {
  require(!rows.empty(), "feature set: no rows");
  const std::size_t d = dim();
  require(d >= 1, "feature set: empty feature vector");
  for (const auto& row : rows) {
    require(row.feat.size() == d, "feature set: row '" + row.id + "' has dimension " +
                                      std::to_string(row.feat.size()) + ", expected " + std::to_string(d));
    require(!row.category.empty(), "feature set: row '" + row.id + "' has an empty category");
  }
}

std::vector<std::string> FeatureSet::categories() const {
  std::set<std::string> cats;
  for (const auto& row : rows) cats.insert(row.category);
  return {cats.begin(), cats.end()};
}

GaussianStats gaussian_stats(std::span<const Vec> rows, CovarianceMode mode) {
  require(!rows.empty(), "gaussian_stats: empty set");
  const auto d = static_cast<Eigen::Index>(rows.front().size());
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd data(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    require(static_cast<Eigen::Index>(rows[i].size()) == d, "gaussian_stats: ragged rows");
    data.row(i) = Eigen::Map<const Eigen::RowVectorXd>(rows[i].data(), d);
  }

  GaussianStats stats;
  stats.count = rows.size();
  stats.mean = data.colwise().mean().transpose();
  if (n == 1) {
    stats.cov = Eigen::MatrixXd::Zero(d, d);
    stats.single_sample = true;
    return stats;
  }
  const Eigen::MatrixXd centered = data.rowwise() - stats.mean.transpose();
  const double denom = mode == CovarianceMode::kUnbiased ? static_cast<double>(n - 1) : static_cast<double>(n);
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
  stats.cov = 0.5 * (cov + cov.transpose());
  return stats;
}

GaussianStats gaussian_stats(const FeatureSet& set, const std::optional<std::string>& category,
                             CovarianceMode mode) {
  std::vector<Vec> rows;
  for (const auto& row : set.rows) {
    if (!category || row.category == *category) rows.push_back(row.feat);
  }
  require(!rows.empty(), category ? "gaussian_stats: no rows in category '" + *category + "'"
                                  : std::string("gaussian_stats: empty set"));
  return gaussian_stats(rows, mode);
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  require(a.mean.size() == b.mean.size() && a.cov.rows() == b.cov.rows(),
          "frechet_distance: dimension mismatch (" + std::to_string(a.mean.size()) + " vs " +
              std::to_string(b.mean.size()) + ")");
  const double mean_term = (a.mean - b.mean).squaredNorm();

  const Eigen::MatrixXd root_a = psd_sqrt(a.cov);
  const Eigen::MatrixXd inner = root_a * b.cov * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("frechet_distance: eigensolver failed");
  const double cross = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double fid = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  return std::max(0.0, fid);
}

FidReport fid_report(const FeatureSet& reference, const FeatureSet& generated, bool per_category,
                     CovarianceMode mode) {
  reference.validate();
  generated.validate();
  require(reference.dim() == generated.dim(), "fid_report: feature dimensions differ (" +
                                                  std::to_string(reference.dim()) + " vs " +
                                                  std::to_string(generated.dim()) + ")");
  FidReport report;
  report.covariance = mode;
  report.overall = frechet_distance(gaussian_stats(reference, std::nullopt, mode),
                                    gaussian_stats(generated, std::nullopt, mode));
  if (!per_category) return report;

  const auto ref_cats = reference.categories();
  const auto gen_cats = generated.categories();
  std::set<std::string> all(ref_cats.begin(), ref_cats.end());
  all.insert(gen_cats.begin(), gen_cats.end());
  for (const auto& cat : all) {
    CategoryCounts counts;
    for (const auto& r : reference.rows) counts.reference += r.category == cat;
    for (const auto& r : generated.rows) counts.generated += r.category == cat;
    report.counts[cat] = counts;
    if (counts.reference == 0 || counts.generated == 0) {
      report.absent.push_back(cat);
      continue;
    }
    const GaussianStats ra = gaussian_stats(reference, cat, mode);
    const GaussianStats gb = gaussian_stats(generated, cat, mode);
    if (ra.single_sample || gb.single_sample) report.single_sample.push_back(cat);
    report.per_category[cat] = frechet_distance(ra, gb);
  }
  require(!report.per_category.empty(), "fid_report: reference and generated sets share no category");
  return report;
}

CurationResult curate_benchmark(const FeatureSet& candidates, std::size_t per_category_n,
                                double min_aesthetic, double min_alignment) {
  std::map<std::string, std::vector<const FeatureRow*>> by_category;
  for (const auto& row : candidates.rows) {
    require(row.aesthetic.has_value() && row.alignment.has_value(),
            "curate_benchmark: row '" + row.id + "' lacks an aesthetic or alignment score");
    auto& bucket = by_category[row.category];
    if (*row.aesthetic >= min_aesthetic && *row.alignment >= min_alignment) bucket.push_back(&row);
  }

  CurationResult result;
  for (auto& [cat, rows] : by_category) {
    std::sort(rows.begin(), rows.end(), [](const FeatureRow* a, const FeatureRow* b) {
      if (*a->aesthetic != *b->aesthetic) return *a->aesthetic > *b->aesthetic;
      return a->id < b->id;
    });
    const std::size_t take = std::min(per_category_n, rows.size());
    for (std::size_t i = 0; i < take; ++i) result.selected.push_back(rows[i]->id);
    if (take < per_category_n) result.shortfall[cat] = per_category_n - take;
  }
  return result;
}

}  // namespace difflab

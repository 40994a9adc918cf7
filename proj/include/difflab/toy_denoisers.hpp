// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "difflab/rng.hpp"
#include "difflab/samplers.hpp"
#include "difflab/schedules.hpp"

namespace difflab {

/// Isotropic Gaussian N(mean, variance * I).
struct GaussianData {
  Vec mean;
  double variance = 1.0;
};

/// Equal mixture of the flat vectors +1_d and -1_d: a solid white or solid
/// black "image".
struct TwoPointData {
  std::size_t dim = 1;
};

/// Mixture of isotropic Gaussians with a shared variance.
struct GmmData {
  Vec weights;
  std::vector<Vec> means;
  double variance = 1.0;

  void validate() const;
  std::size_t dim() const { return means.empty() ? 0 : means.front().size(); }
};

/// D(x; sigma) = mu + var / (var + sigma^2) * (x - mu).
Denoiser gaussian_denoiser(GaussianData data);

/// D(x; sigma) = tanh(<x, 1> / sigma^2) * 1_d.
Denoiser two_point_denoiser(TwoPointData data);

/// Discrete form on x_t = a x0 + s eps: x0_hat = tanh(a <x, 1> / s^2) * 1_d.
/// At a = 0 this is the data mean, 0.
DiscreteOracle two_point_x0_oracle(TwoPointData data);
/// eps_hat = (x - a * x0_hat) / s.
DiscreteOracle two_point_eps_oracle(TwoPointData data);

/// Posterior-weighted mixture of the per-component Gaussian denoisers,
/// responsibilities evaluated in log space.
Denoiser gmm_denoiser(GmmData data);
Vec gmm_responsibilities(const GmmData& data, std::span<const double> x, double sigma);

struct LabeledSchedule {
  std::string label;
  std::variant<DdpmSchedule, SigmaGrid> schedule;
};

/// Coordinate means of samples drawn from pure noise under one schedule.
struct MeanRecoveryReport {
  std::string label;
  std::string kind;  // "ddpm" or "edm"
  Vec means;
  double avg_abs_mean = 0.0;
  double saturated_fraction = 0.0;  // share of |mean| >= saturation
};

struct MeanRecoveryConfig {
  std::size_t dim = 1024;
  std::size_t n_samples = 1000;
  std::uint64_t seed = 0;
  double saturation = 0.99;
  /// 0 = std::thread::hardware_concurrency().
  unsigned threads = 0;
};

/// For every schedule, draws n_samples outputs from pure noise with the
/// exact two-point oracle: DDPM schedules through the ancestral sampler,
/// EDM grids through deterministic Heun. Sample i uses
/// derive_seed(cfg.seed, i) under every schedule, so reports are paired.
std::vector<MeanRecoveryReport> run_mean_recovery_experiment(
    const MeanRecoveryConfig& cfg, const std::vector<LabeledSchedule>& schedules);

MeanRecoveryReport summarize_means(std::string label, std::string kind, Vec means,
                                   double saturation);

/// Linear DDPM (T=1000, 1e-4..0.02), its ZTSNR rescale, the default EDM grid
/// with `edm_steps` steps, and the same grid shifted by `edm_shift`.
std::vector<LabeledSchedule> default_mean_recovery_schedules(std::size_t edm_steps = 50,
                                                             double edm_shift = 16.0);

}  // namespace difflab

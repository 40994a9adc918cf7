// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "difflab/rng.hpp"

namespace difflab {

inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

/// Discrete DDPM noise schedule. Steps are 1-based in the public API
/// (t = 1..T); storage is 0-based.
///
/// alphas_cumprod is strictly decreasing with values in [0, 1]. betas lie in
/// (0, 1]; beta_T = 1 only for zero-terminal-SNR schedules.
class DdpmSchedule {
 public:
  static DdpmSchedule from_betas(std::vector<double> betas);
  static DdpmSchedule from_alphas_cumprod(std::vector<double> alphas_cumprod);

  std::size_t steps() const { return betas_.size(); }
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alphas_cumprod() const { return alphas_cumprod_; }

  double alpha_bar(std::size_t t) const;
  double beta(std::size_t t) const;
  /// Signal scale a_t = sqrt(alpha_bar_t).
  double signal_scale(std::size_t t) const;
  /// Noise scale s_t = sqrt(1 - alpha_bar_t).
  double noise_scale(std::size_t t) const;

 private:
  DdpmSchedule(std::vector<double> betas, std::vector<double> alphas_cumprod);
  void check_step(std::size_t t) const;

  std::vector<double> betas_;
  std::vector<double> alphas_cumprod_;
};

/// EDM sampling grid: sigmas[0..n-1] strictly decreasing from sigma_max to
/// sigma_min, followed by a terminal 0.
struct SigmaGrid {
  std::vector<double> sigmas;
  std::size_t n = 0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  double rho = 0.0;

  /// Throws std::invalid_argument if the invariants do not hold.
  void validate() const;
};

struct OffsetNoiseConfig {
  double weight = 0.1;
};

/// Log-normal training sigma distribution, sigma = exp(N(p_mean, p_std^2)).
struct TrainingSigmaDist {
  double p_mean = -1.2;
  double p_std = 1.2;
};

namespace edm_defaults {
inline constexpr double kSigmaMin = 0.002;
inline constexpr double kSigmaMax = 80.0;
inline constexpr double kRho = 7.0;
inline constexpr double kSigmaData = 0.5;
}  // namespace edm_defaults

DdpmSchedule ddpm_linear(std::size_t steps, double beta_start, double beta_end);

/// alpha_bar / (1 - alpha_bar); kInfiniteSnr when alpha_bar == 1.
double snr_from_alpha_bar(double alpha_bar);
double snr_at(const DdpmSchedule& sched, std::size_t t);
double terminal_snr(const DdpmSchedule& sched);

/// Affine rescale of a_t = sqrt(alpha_bar_t) so that a_T = 0 while a_1 is
/// kept: a'_t = (a_t - a_T) * a_1 / (a_1 - a_T).
DdpmSchedule rescale_zero_terminal_snr(const DdpmSchedule& sched);

/// sigma_i = (smax^(1/rho) + i/(n-1) * (smin^(1/rho) - smax^(1/rho)))^rho,
/// i = 0..n-1, then a terminal 0.
SigmaGrid edm_sigma_grid(std::size_t n, double sigma_min, double sigma_max, double rho);

double sample_training_sigma(Rng& rng, const TrainingSigmaDist& dist);

// Resolution shift. log-SNR moves by -2 ln(target/ref); for sigma-space
// inputs this is sigma' = sigma * target / ref.
double shift_sigma(double sigma, double ref_dim, double target_dim);
SigmaGrid shift_schedule(const SigmaGrid& grid, double ref_dim, double target_dim);
DdpmSchedule shift_schedule(const DdpmSchedule& sched, double ref_dim, double target_dim);

/// eps_iid + w * z * 1_d with a single shared z.
Vec make_offset_noise(Rng& rng, std::size_t dim, const OffsetNoiseConfig& cfg);

}  // namespace difflab

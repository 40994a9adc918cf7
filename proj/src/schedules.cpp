// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#include "difflab/schedules.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace difflab {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace

DdpmSchedule::DdpmSchedule(std::vector<double> betas, std::vector<double> alphas_cumprod)
    : betas_(std::move(betas)), alphas_cumprod_(std::move(alphas_cumprod)) {}

DdpmSchedule DdpmSchedule::from_betas(std::vector<double> betas) {
  require(!betas.empty(), "ddpm schedule: empty beta sequence");
  std::vector<double> ab(betas.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    const double b = betas[i];
    require(std::isfinite(b) && b > 0.0 && b <= 1.0,
            "ddpm schedule: beta[" + std::to_string(i + 1) + "] = " + std::to_string(b) +
                " outside (0, 1]");
    prod *= 1.0 - b;
    ab[i] = prod;
  }
  for (std::size_t i = 0; i + 1 < betas.size(); ++i) {
    require(betas[i] < 1.0, "ddpm schedule: beta = 1 is only allowed at the final step");
  }
  return DdpmSchedule(std::move(betas), std::move(ab));
}

DdpmSchedule DdpmSchedule::from_alphas_cumprod(std::vector<double> alphas_cumprod) {
  require(!alphas_cumprod.empty(), "ddpm schedule: empty alpha_bar sequence");
  std::vector<double> betas(alphas_cumprod.size());
  double prev = 1.0;
  for (std::size_t i = 0; i < alphas_cumprod.size(); ++i) {
    const double ab = alphas_cumprod[i];
    require(std::isfinite(ab) && ab >= 0.0 && ab <= 1.0,
            "ddpm schedule: alpha_bar[" + std::to_string(i + 1) + "] outside [0, 1]");
    require(ab < prev,
            "ddpm schedule: alpha_bar must be strictly decreasing (step " +
                std::to_string(i + 1) + ")");
    betas[i] = 1.0 - ab / prev;
    prev = ab;
  }
  return DdpmSchedule(std::move(betas), std::move(alphas_cumprod));
}

void DdpmSchedule::check_step(std::size_t t) const {
  if (t < 1 || t > steps()) {
    throw std::out_of_range("ddpm schedule: step " + std::to_string(t) + " outside [1, " +
                            std::to_string(steps()) + "]");
  }
}

double DdpmSchedule::alpha_bar(std::size_t t) const {
  check_step(t);
  return alphas_cumprod_[t - 1];
}

double DdpmSchedule::beta(std::size_t t) const {
  check_step(t);
  return betas_[t - 1];
}

double DdpmSchedule::signal_scale(std::size_t t) const { return std::sqrt(alpha_bar(t)); }

double DdpmSchedule::noise_scale(std::size_t t) const { return std::sqrt(1.0 - alpha_bar(t)); }

void SigmaGrid::validate() const {
  require(n >= 2 && sigmas.size() == n + 1, "sigma grid: expected n >= 2 sigmas plus terminal 0");
  require(sigmas.back() == 0.0, "sigma grid: terminal entry must be exactly 0");
  for (std::size_t i = 0; i < n; ++i) {
    require(std::isfinite(sigmas[i]) && sigmas[i] > 0.0, "sigma grid: nonpositive sigma");
    if (i > 0) require(sigmas[i] < sigmas[i - 1], "sigma grid: sigmas must strictly decrease");
  }
}

DdpmSchedule ddpm_linear(std::size_t steps, double beta_start, double beta_end) {
  require(steps >= 2, "ddpm_linear: need at least 2 steps");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "ddpm_linear: need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(steps);
  const double span = beta_end - beta_start;
  for (std::size_t i = 0; i < steps; ++i) {
    betas[i] = beta_start + span * static_cast<double>(i) / static_cast<double>(steps - 1);
  }
  betas.back() = beta_end;
  return DdpmSchedule::from_betas(std::move(betas));
}

double snr_from_alpha_bar(double alpha_bar) {
  if (alpha_bar >= 1.0) return kInfiniteSnr;
  return alpha_bar / (1.0 - alpha_bar);
}

double snr_at(const DdpmSchedule& sched, std::size_t t) {
  return snr_from_alpha_bar(sched.alpha_bar(t));
}

double terminal_snr(const DdpmSchedule& sched) { return snr_at(sched, sched.steps()); }

DdpmSchedule rescale_zero_terminal_snr(const DdpmSchedule& sched) {
  const auto& ab = sched.alphas_cumprod();
  const double a_first = std::sqrt(ab.front());
  const double a_last = std::sqrt(ab.back());
  if (a_last == 0.0) return sched;
  require(a_first > a_last, "rescale_zero_terminal_snr: degenerate schedule (a_1 == a_T)");

  std::vector<double> out(ab.size());
  const double scale = a_first / (a_first - a_last);
  for (std::size_t i = 0; i < ab.size(); ++i) {
    const double a = (std::sqrt(ab[i]) - a_last) * scale;
    out[i] = a * a;
  }
  out.front() = ab.front();
  out.back() = 0.0;
  return DdpmSchedule::from_alphas_cumprod(std::move(out));
}

SigmaGrid edm_sigma_grid(std::size_t n, double sigma_min, double sigma_max, double rho) {
  require(n >= 2, "edm_sigma_grid: need n >= 2");
  require(sigma_min > 0.0 && sigma_min < sigma_max, "edm_sigma_grid: need 0 < sigma_min < sigma_max");
  require(rho > 0.0, "edm_sigma_grid: need rho > 0");

  SigmaGrid grid{.sigmas = std::vector<double>(n + 1, 0.0),
                 .n = n,
                 .sigma_min = sigma_min,
                 .sigma_max = sigma_max,
                 .rho = rho};
  const double lo = std::pow(sigma_min, 1.0 / rho);
  const double hi = std::pow(sigma_max, 1.0 / rho);
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(n - 1);
    grid.sigmas[i] = std::pow(hi + frac * (lo - hi), rho);
  }
  grid.sigmas.front() = sigma_max;
  grid.sigmas[n - 1] = sigma_min;
  grid.validate();
  return grid;
}

double sample_training_sigma(Rng& rng, const TrainingSigmaDist& dist) {
  return std::exp(dist.p_mean + dist.p_std * rng.normal());
}

double shift_sigma(double sigma, double ref_dim, double target_dim) {
  require(ref_dim > 0.0 && target_dim > 0.0, "shift_schedule: dimensions must be positive");
  if (ref_dim == target_dim) return sigma;
  return sigma * (target_dim / ref_dim);
}

SigmaGrid shift_schedule(const SigmaGrid& grid, double ref_dim, double target_dim) {
  require(ref_dim > 0.0 && target_dim > 0.0, "shift_schedule: dimensions must be positive");
  if (ref_dim == target_dim) return grid;
  SigmaGrid out = grid;
  for (double& s : out.sigmas) s = shift_sigma(s, ref_dim, target_dim);
  out.sigma_min = shift_sigma(grid.sigma_min, ref_dim, target_dim);
  out.sigma_max = shift_sigma(grid.sigma_max, ref_dim, target_dim);
  return out;
}

DdpmSchedule shift_schedule(const DdpmSchedule& sched, double ref_dim, double target_dim) {
  require(ref_dim > 0.0 && target_dim > 0.0, "shift_schedule: dimensions must be positive");
  if (ref_dim == target_dim) return sched;
  // log-SNR' = log-SNR - 2 ln(target/ref), i.e. SNR' = SNR * f with f = (ref/target)^2.
  const double ratio = ref_dim / target_dim;
  const double factor = ratio * ratio;
  std::vector<double> out(sched.steps());
  for (std::size_t t = 1; t <= sched.steps(); ++t) {
    const double ab = sched.alpha_bar(t);
    // SNR'/(1+SNR') rewritten to stay finite as alpha_bar -> 1.
    out[t - 1] = ab * factor / (1.0 - ab + ab * factor);
  }
  return DdpmSchedule::from_alphas_cumprod(std::move(out));
}

Vec make_offset_noise(Rng& rng, std::size_t dim, const OffsetNoiseConfig& cfg) {
  require(dim >= 1, "make_offset_noise: dimension must be >= 1");
  require(cfg.weight >= 0.0, "make_offset_noise: weight must be >= 0");
  Vec eps = rng.normal_vec(dim);
  const double shared = cfg.weight * rng.normal();
  for (double& v : eps) v += shared;
  return eps;
}

}  // namespace difflab

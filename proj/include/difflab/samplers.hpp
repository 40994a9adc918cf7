// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>

#include "difflab/rng.hpp"
#include "difflab/schedules.hpp"

namespace difflab {

/// EDM preconditioning for noise level sigma and data std sigma_data:
///   c_skip  = sd^2 / (sigma^2 + sd^2)
///   c_out   = sigma * sd / sqrt(sigma^2 + sd^2)
///   c_in    = 1 / sqrt(sigma^2 + sd^2)
///   c_noise = ln(sigma) / 4
struct PrecondCoeffs {
  double c_skip = 0.0;
  double c_out = 0.0;
  double c_in = 0.0;
  double c_noise = 0.0;
};

PrecondCoeffs precond_coeffs(double sigma, double sigma_data);

/// D(x, sigma): estimate of the clean sample. Output has the input's size.
/// Implementations in this library are stateless and safe to call
/// concurrently.
using Denoiser = std::function<Vec(std::span<const double> x, double sigma)>;

/// Raw network F(c_in * x, c_noise).
using RawPredictor = std::function<Vec(std::span<const double> scaled_x, double c_noise)>;

/// D(x, sigma) = c_skip * x + c_out * F(c_in * x, c_noise).
Denoiser wrap_raw_network(RawPredictor raw, double sigma_data);

/// lambda(sigma) = (sigma^2 + sd^2) / (sigma * sd)^2.
double edm_loss_weight(double sigma, double sigma_data);

/// lambda(sigma) * ||D(x0 + sigma * eps, sigma) - x0||^2 with eps ~ N(0, I).
double edm_loss(const RawPredictor& raw, std::span<const double> x0, double sigma, Rng& rng,
                double sigma_data);
/// Same with caller-supplied noise.
double edm_loss(const RawPredictor& raw, std::span<const double> x0, double sigma,
                std::span<const double> eps, double sigma_data);

struct SamplerConfig {
  double s_churn = 0.0;
  double s_min = 0.0;
  double s_max = std::numeric_limits<double>::infinity();
  double s_noise = 1.0;
  bool deterministic = false;

  void validate() const;
};

struct TrajectoryPoint {
  std::size_t step = 0;
  double sigma = 0.0;
  double norm = 0.0;
  double mean = 0.0;
};

using TrajectoryObserver = std::function<void(const TrajectoryPoint&)>;

/// Integrates dx/dsigma = (x - D(x, sigma)) / sigma over the grid with
/// Heun's method; the final step into sigma = 0 is Euler. Without x_init
/// the start is drawn from N(0, sigma_max^2 I) of size `dim`.
Vec heun_sample(const Denoiser& denoiser, const SigmaGrid& grid, Rng& rng,
                const SamplerConfig& cfg, std::size_t dim,
                std::optional<Vec> x_init = std::nullopt,
                const TrajectoryObserver& observer = {});

// Discrete (DDPM) models take the state and a 1-based step index.
using DiscreteModel = std::function<Vec(std::span<const double> x, std::size_t t)>;

/// Step-agnostic model: (x, a_t, s_t) -> prediction.
using DiscreteOracle = std::function<Vec(std::span<const double> x, double a, double s)>;

DiscreteModel bind_schedule(DiscreteOracle oracle, const DdpmSchedule& sched);

Vec eps_from_x0(std::span<const double> x, std::span<const double> x0_hat, double a, double s);
/// Requires a > 0.
Vec x0_from_eps(std::span<const double> x, std::span<const double> eps_hat, double a, double s);

/// x0-prediction from an EDM denoiser: D(x / a_t, s_t / a_t). Requires a_t > 0.
DiscreteModel x0_model_from_denoiser(Denoiser denoiser, const DdpmSchedule& sched);
DiscreteModel eps_model_from_x0(DiscreteModel x0_model, const DdpmSchedule& sched);

struct AncestralStart {
  enum class Kind { kPureNoise, kForwardDiffused };

  Kind kind = Kind::kPureNoise;
  std::size_t dim = 0;
  Vec x0;

  static AncestralStart pure_noise(std::size_t dim) { return {Kind::kPureNoise, dim, {}}; }
  static AncestralStart forward_diffused(Vec x0) {
    const std::size_t d = x0.size();
    return {Kind::kForwardDiffused, d, std::move(x0)};
  }
};

/// Ancestral sampling with an eps-prediction model:
///   x_{t-1} = (x_t - beta_t / s_t * eps_hat) / sqrt(1 - beta_t) + sqrt(beta_tilde_t) z,
/// z = 0 at t = 1. Throws if the schedule has a zero-SNR step (alpha_t = 0),
/// where eps carries no information about x0.
Vec ddpm_ancestral_sample(const DiscreteModel& eps_model, const DdpmSchedule& sched, Rng& rng,
                          const AncestralStart& start);

/// Same sampler written on the posterior mean
///   mu = sqrt(ab_{t-1}) beta_t / (1 - ab_t) * x0_hat
///      + sqrt(alpha_t) (1 - ab_{t-1}) / (1 - ab_t) * x_t,
/// which stays defined at zero-SNR steps.
Vec ddpm_ancestral_sample_x0(const DiscreteModel& x0_model, const DdpmSchedule& sched, Rng& rng,
                             const AncestralStart& start);

}  // namespace difflab

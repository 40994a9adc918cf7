// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#include "difflab/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace difflab {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

void check_dim(const Vec& out, std::size_t expected, const char* who) {
  if (out.size() != expected) {
    throw std::runtime_error(std::string(who) + ": model returned " + std::to_string(out.size()) +
                             " values, expected " + std::to_string(expected));
  }
}

TrajectoryPoint summarize(std::size_t step, double sigma, std::span<const double> x) {
  double sq = 0.0;
  double sum = 0.0;
  for (double v : x) {
    sq += v * v;
    sum += v;
  }
  return {step, sigma, std::sqrt(sq), x.empty() ? 0.0 : sum / static_cast<double>(x.size())};
}

Vec initial_state(const DdpmSchedule& sched, Rng& rng, const AncestralStart& start) {
  require(start.dim >= 1, "ddpm_ancestral_sample: dimension must be >= 1");
  Vec x = rng.normal_vec(start.dim);
  if (start.kind == AncestralStart::Kind::kForwardDiffused) {
    require(start.x0.size() == start.dim, "ddpm_ancestral_sample: x0 size mismatch");
    const std::size_t T = sched.steps();
    const double a = sched.signal_scale(T);
    const double s = sched.noise_scale(T);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = a * start.x0[i] + s * x[i];
  }
  return x;
}

// Posterior variance beta_tilde_t = (1 - ab_{t-1}) / (1 - ab_t) * beta_t.
double posterior_variance(const DdpmSchedule& sched, std::size_t t) {
  const double ab_prev = t > 1 ? sched.alpha_bar(t - 1) : 1.0;
  return (1.0 - ab_prev) / (1.0 - sched.alpha_bar(t)) * sched.beta(t);
}

}  // namespace

PrecondCoeffs precond_coeffs(double sigma, double sigma_data) {
  require(sigma > 0.0 && sigma_data > 0.0, "precond_coeffs: sigma and sigma_data must be > 0");
  const double sd2 = sigma_data * sigma_data;
  const double total = sigma * sigma + sd2;
  const double root = std::sqrt(total);
  return {.c_skip = sd2 / total,
          .c_out = sigma * sigma_data / root,
          .c_in = 1.0 / root,
          .c_noise = std::log(sigma) / 4.0};
}

Denoiser wrap_raw_network(RawPredictor raw, double sigma_data) {
  require(sigma_data > 0.0, "wrap_raw_network: sigma_data must be > 0");
  return [raw = std::move(raw), sigma_data](std::span<const double> x, double sigma) {
    const PrecondCoeffs c = precond_coeffs(sigma, sigma_data);
    Vec scaled(x.begin(), x.end());
    for (double& v : scaled) v *= c.c_in;
    Vec f = raw(scaled, c.c_noise);
    check_dim(f, x.size(), "wrap_raw_network");
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = c.c_skip * x[i] + c.c_out * f[i];
    return f;
  };
}

double edm_loss_weight(double sigma, double sigma_data) {
  require(sigma > 0.0 && sigma_data > 0.0, "edm_loss_weight: sigma and sigma_data must be > 0");
  const double denom = sigma * sigma_data;
  return (sigma * sigma + sigma_data * sigma_data) / (denom * denom);
}

double edm_loss(const RawPredictor& raw, std::span<const double> x0, double sigma, Rng& rng,
                double sigma_data) {
  const Vec eps = rng.normal_vec(x0.size());
  return edm_loss(raw, x0, sigma, eps, sigma_data);
}

double edm_loss(const RawPredictor& raw, std::span<const double> x0, double sigma,
                std::span<const double> eps, double sigma_data) {
  require(sigma > 0.0, "edm_loss: sigma must be > 0");
  require(eps.size() == x0.size(), "edm_loss: noise size mismatch");
  const double weight = edm_loss_weight(sigma, sigma_data);
  Vec noisy(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) noisy[i] = x0[i] + sigma * eps[i];
  const Vec denoised = wrap_raw_network(raw, sigma_data)(noisy, sigma);
  double sq = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double r = denoised[i] - x0[i];
    sq += r * r;
  }
  return weight * sq;
}

void SamplerConfig::validate() const {
  require(s_churn >= 0.0, "sampler config: s_churn must be >= 0");
  require(s_min >= 0.0 && s_min <= s_max, "sampler config: need 0 <= s_min <= s_max");
  require(s_noise >= 0.0, "sampler config: s_noise must be >= 0");
}

Vec heun_sample(const Denoiser& denoiser, const SigmaGrid& grid, Rng& rng,
                const SamplerConfig& cfg, std::size_t dim, std::optional<Vec> x_init,
                const TrajectoryObserver& observer) {
  grid.validate();
  cfg.validate();

  Vec x;
  if (x_init) {
    require(dim == 0 || dim == x_init->size(), "heun_sample: x_init size does not match dim");
    x = std::move(*x_init);
  } else {
    require(dim >= 1, "heun_sample: dimension must be >= 1");
    x = rng.normal_vec(dim);
    for (double& v : x) v *= grid.sigmas.front();
  }
  const std::size_t d = x.size();
  const bool churn = !cfg.deterministic && cfg.s_churn > 0.0;
  const double gamma_max = std::min(cfg.s_churn / static_cast<double>(grid.n), std::sqrt(2.0) - 1.0);

  if (observer) observer(summarize(0, grid.sigmas.front(), x));

  Vec slope(d), next(d);
  for (std::size_t i = 0; i < grid.n; ++i) {
    const double sigma = grid.sigmas[i];
    const double sigma_next = grid.sigmas[i + 1];

    double sigma_hat = sigma;
    if (churn && sigma >= cfg.s_min && sigma <= cfg.s_max) {
      sigma_hat = sigma * (1.0 + gamma_max);
      const double extra = std::sqrt(sigma_hat * sigma_hat - sigma * sigma) * cfg.s_noise;
      for (double& v : x) v += extra * rng.normal();
    }

    const Vec den = denoiser(x, sigma_hat);
    check_dim(den, d, "heun_sample");
    const double h = sigma_next - sigma_hat;
    for (std::size_t k = 0; k < d; ++k) {
      slope[k] = (x[k] - den[k]) / sigma_hat;
      next[k] = x[k] + h * slope[k];
    }

    if (sigma_next > 0.0) {
      const Vec den2 = denoiser(next, sigma_next);
      check_dim(den2, d, "heun_sample");
      for (std::size_t k = 0; k < d; ++k) {
        const double slope2 = (next[k] - den2[k]) / sigma_next;
        next[k] = x[k] + h * 0.5 * (slope[k] + slope2);
      }
    }
    x.swap(next);
    if (observer) observer(summarize(i + 1, sigma_next, x));
  }
  return x;
}

DiscreteModel bind_schedule(DiscreteOracle oracle, const DdpmSchedule& sched) {
  return [oracle = std::move(oracle), sched](std::span<const double> x, std::size_t t) {
    return oracle(x, sched.signal_scale(t), sched.noise_scale(t));
  };
}

Vec eps_from_x0(std::span<const double> x, std::span<const double> x0_hat, double a, double s) {
  require(s > 0.0, "eps_from_x0: noise scale must be > 0");
  Vec eps(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) eps[i] = (x[i] - a * x0_hat[i]) / s;
  return eps;
}

Vec x0_from_eps(std::span<const double> x, std::span<const double> eps_hat, double a, double s) {
  require(a > 0.0, "x0_from_eps: signal scale must be > 0");
  Vec x0(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x0[i] = (x[i] - s * eps_hat[i]) / a;
  return x0;
}

DiscreteModel x0_model_from_denoiser(Denoiser denoiser, const DdpmSchedule& sched) {
  return [denoiser = std::move(denoiser), sched](std::span<const double> x, std::size_t t) {
    const double a = sched.signal_scale(t);
    require(a > 0.0, "x0_model_from_denoiser: zero-SNR step has no finite sigma");
    const double s = sched.noise_scale(t);
    Vec scaled(x.begin(), x.end());
    for (double& v : scaled) v /= a;
    return denoiser(scaled, s / a);
  };
}

DiscreteModel eps_model_from_x0(DiscreteModel x0_model, const DdpmSchedule& sched) {
  return [x0_model = std::move(x0_model), sched](std::span<const double> x, std::size_t t) {
    const Vec x0 = x0_model(x, t);
    return eps_from_x0(x, x0, sched.signal_scale(t), sched.noise_scale(t));
  };
}

Vec ddpm_ancestral_sample(const DiscreteModel& eps_model, const DdpmSchedule& sched, Rng& rng,
                          const AncestralStart& start) {
  for (double b : sched.betas()) {
    require(b < 1.0,
            "ddpm_ancestral_sample: schedule has a zero-SNR step; eps-prediction is undefined there "
            "(use ddpm_ancestral_sample_x0)");
  }
  Vec x = initial_state(sched, rng, start);
  const std::size_t d = x.size();
  for (std::size_t t = sched.steps(); t >= 1; --t) {
    const double beta = sched.beta(t);
    const double s = sched.noise_scale(t);
    const Vec eps = eps_model(x, t);
    check_dim(eps, d, "ddpm_ancestral_sample");
    const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
    const double coef = beta / s;
    const double noise = t > 1 ? std::sqrt(posterior_variance(sched, t)) : 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      x[k] = inv_sqrt_alpha * (x[k] - coef * eps[k]);
      if (t > 1) x[k] += noise * rng.normal();
    }
  }
  return x;
}

Vec ddpm_ancestral_sample_x0(const DiscreteModel& x0_model, const DdpmSchedule& sched, Rng& rng,
                             const AncestralStart& start) {
  Vec x = initial_state(sched, rng, start);
  const std::size_t d = x.size();
  for (std::size_t t = sched.steps(); t >= 1; --t) {
    const double ab = sched.alpha_bar(t);
    const double ab_prev = t > 1 ? sched.alpha_bar(t - 1) : 1.0;
    const double beta = sched.beta(t);
    const double c_x0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    const double c_xt = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
    const Vec x0 = x0_model(x, t);
    check_dim(x0, d, "ddpm_ancestral_sample_x0");
    const double noise = t > 1 ? std::sqrt(posterior_variance(sched, t)) : 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      x[k] = c_x0 * x0[k] + c_xt * x[k];
      if (t > 1) x[k] += noise * rng.normal();
    }
  }
  return x;
}

}  // namespace difflab

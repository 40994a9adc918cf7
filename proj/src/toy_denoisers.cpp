// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#include "difflab/toy_denoisers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace difflab {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

double coordinate_sum(std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0); }

// Runs body(i) for i in [0, n) over contiguous chunks. Each index is
// processed exactly once; results must be written to per-index slots.
template <typename Body>
void parallel_for(std::size_t n, unsigned threads, Body body) {
  unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          const std::size_t lo = w * chunk;
          const std::size_t hi = std::min(n, lo + chunk);
          for (std::size_t i = lo; i < hi; ++i) body(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void GmmData::validate() const {
  require(!weights.empty() && weights.size() == means.size(), "gmm: weights/means size mismatch");
  require(variance > 0.0, "gmm: variance must be > 0");
  double total = 0.0;
  for (double w : weights) {
    require(w > 0.0, "gmm: weights must be positive");
    total += w;
  }
  require(std::abs(total - 1.0) < 1e-9, "gmm: weights must sum to 1");
  for (const auto& m : means) require(m.size() == dim(), "gmm: component dimension mismatch");
}

Denoiser gaussian_denoiser(GaussianData data) {
  require(data.variance > 0.0, "gaussian data: variance must be > 0");
  return [data = std::move(data)](std::span<const double> x, double sigma) {
    require(sigma > 0.0, "gaussian_denoiser: sigma must be > 0");
    require(x.size() == data.mean.size(), "gaussian_denoiser: dimension mismatch");
    const double shrink = data.variance / (data.variance + sigma * sigma);
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = data.mean[i] + shrink * (x[i] - data.mean[i]);
    return out;
  };
}

Denoiser two_point_denoiser(TwoPointData data) {
  require(data.dim >= 1, "two-point data: dimension must be >= 1");
  return [data](std::span<const double> x, double sigma) {
    require(sigma > 0.0, "two_point_denoiser: sigma must be > 0");
    require(x.size() == data.dim, "two_point_denoiser: dimension mismatch");
    const double level = std::tanh(coordinate_sum(x) / (sigma * sigma));
    return Vec(x.size(), level);
  };
}

DiscreteOracle two_point_x0_oracle(TwoPointData data) {
  require(data.dim >= 1, "two-point data: dimension must be >= 1");
  return [data](std::span<const double> x, double a, double s) {
    require(s > 0.0, "two_point_x0_oracle: noise scale must be > 0");
    require(x.size() == data.dim, "two_point_x0_oracle: dimension mismatch");
    const double level = std::tanh(a * coordinate_sum(x) / (s * s));
    return Vec(x.size(), level);
  };
}

DiscreteOracle two_point_eps_oracle(TwoPointData data) {
  auto x0 = two_point_x0_oracle(data);
  return [x0 = std::move(x0)](std::span<const double> x, double a, double s) {
    return eps_from_x0(x, x0(x, a, s), a, s);
  };
}

Vec gmm_responsibilities(const GmmData& data, std::span<const double> x, double sigma) {
  require(sigma > 0.0, "gmm: sigma must be > 0");
  require(x.size() == data.dim(), "gmm: dimension mismatch");
  const double total_var = data.variance + sigma * sigma;
  Vec logits(data.weights.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = x[i] - data.means[k][i];
      sq += r * r;
    }
    logits[k] = std::log(data.weights[k]) - 0.5 * sq / total_var;
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double norm = 0.0;
  for (double& l : logits) {
    l = std::exp(l - top);
    norm += l;
  }
  for (double& l : logits) l /= norm;
  return logits;
}

Denoiser gmm_denoiser(GmmData data) {
  data.validate();
  return [data = std::move(data)](std::span<const double> x, double sigma) {
    const Vec resp = gmm_responsibilities(data, x, sigma);
    const double shrink = data.variance / (data.variance + sigma * sigma);
    Vec out(x.size(), 0.0);
    for (std::size_t k = 0; k < resp.size(); ++k) {
      const Vec& m = data.means[k];
      for (std::size_t i = 0; i < x.size(); ++i) out[i] += resp[k] * (m[i] + shrink * (x[i] - m[i]));
    }
    return out;
  };
}

MeanRecoveryReport summarize_means(std::string label, std::string kind, Vec means,
                                   double saturation) {
  MeanRecoveryReport report{.label = std::move(label), .kind = std::move(kind), .means = std::move(means)};
  if (report.means.empty()) return report;
  double abs_sum = 0.0;
  std::size_t saturated = 0;
  for (double m : report.means) {
    abs_sum += std::abs(m);
    if (std::abs(m) >= saturation) ++saturated;
  }
  const double n = static_cast<double>(report.means.size());
  report.avg_abs_mean = abs_sum / n;
  report.saturated_fraction = static_cast<double>(saturated) / n;
  return report;
}

std::vector<MeanRecoveryReport> run_mean_recovery_experiment(
    const MeanRecoveryConfig& cfg, const std::vector<LabeledSchedule>& schedules) {
  require(!schedules.empty(), "mean recovery: empty schedule list");
  require(cfg.dim >= 1, "mean recovery: dimension must be >= 1");
  require(cfg.n_samples >= 1, "mean recovery: need at least one sample");

  const TwoPointData data{cfg.dim};
  std::vector<MeanRecoveryReport> reports;
  reports.reserve(schedules.size());

  for (const auto& entry : schedules) {
    Vec means(cfg.n_samples);
    std::string kind;
    if (const auto* sched = std::get_if<DdpmSchedule>(&entry.schedule)) {
      kind = "ddpm";
      const DiscreteModel model = bind_schedule(two_point_x0_oracle(data), *sched);
      parallel_for(cfg.n_samples, cfg.threads, [&](std::size_t i) {
        Rng rng(derive_seed(cfg.seed, i));
        const Vec x = ddpm_ancestral_sample_x0(model, *sched, rng, AncestralStart::pure_noise(cfg.dim));
        means[i] = coordinate_sum(x) / static_cast<double>(cfg.dim);
      });
    } else {
      kind = "edm";
      const auto& grid = std::get<SigmaGrid>(entry.schedule);
      const Denoiser denoiser = two_point_denoiser(data);
      SamplerConfig sampler;
      sampler.deterministic = true;
      parallel_for(cfg.n_samples, cfg.threads, [&](std::size_t i) {
        Rng rng(derive_seed(cfg.seed, i));
        const Vec x = heun_sample(denoiser, grid, rng, sampler, cfg.dim);
        means[i] = coordinate_sum(x) / static_cast<double>(cfg.dim);
      });
    }
    reports.push_back(summarize_means(entry.label, kind, std::move(means), cfg.saturation));
  }
  return reports;
}

std::vector<LabeledSchedule> default_mean_recovery_schedules(std::size_t edm_steps, double edm_shift) {
  const DdpmSchedule linear = ddpm_linear(1000, 1e-4, 0.02);
  const SigmaGrid grid = edm_sigma_grid(edm_steps, edm_defaults::kSigmaMin, edm_defaults::kSigmaMax,
                                        edm_defaults::kRho);
  std::vector<LabeledSchedule> out;
  out.push_back({"ddpm-linear", linear});
  out.push_back({"ddpm-linear-ztsnr", rescale_zero_terminal_snr(linear)});
  out.push_back({"edm", grid});
  out.push_back({"edm-shifted", shift_schedule(grid, 1.0, edm_shift)});
  return out;
}

}  // namespace difflab

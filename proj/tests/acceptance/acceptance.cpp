// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>
#include <boost/math/distributions/binomial.hpp>

#include "difflab/bucketing.hpp"
#include "difflab/cli.hpp"
#include "difflab/fid.hpp"
#include "difflab/io.hpp"
#include "difflab/preference.hpp"
#include "difflab/samplers.hpp"
#include "difflab/schedules.hpp"
#include "difflab/toy_denoisers.hpp"

using namespace difflab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Check {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

bool run_criterion(int id, const std::string& title, double budget_s, const std::function<void(Check&)>& body) {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.failures.push_back(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0 && secs >= budget_s) c.failures.push_back("runtime " + fmt(secs) + " s >= " + fmt(budget_s) + " s");
  const bool ok = c.failures.empty();
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << title << " (" << fmt(secs) << " s)\n";
  for (const auto& n : c.notes) std::cout << "    " << n << "\n";
  for (const auto& f : c.failures) std::cout << "    failed: " << f << "\n";
  std::cout.flush();
  return ok;
}

// 1 -------------------------------------------------------------------------

void zero_terminal_snr(Check& c) {
  Rng rng(101);
  double worst_terminal = 0, worst_first = 0, worst_idem = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 10 + rng.index(1991);
    const double b0 = 1e-5 + 1e-3 * rng.uniform();
    const double b1 = b0 + (0.05 - b0) * rng.uniform();
    const DdpmSchedule s = ddpm_linear(T, b0, b1);
    const DdpmSchedule z = rescale_zero_terminal_snr(s);
    const DdpmSchedule zz = rescale_zero_terminal_snr(z);
    worst_terminal = std::max(worst_terminal, std::abs(terminal_snr(z)));
    worst_first = std::max(worst_first, std::abs(snr_at(z, 1) - snr_at(s, 1)) / snr_at(s, 1));
    for (std::size_t t = 1; t <= T; ++t) {
      worst_idem = std::max(worst_idem, std::abs(zz.alpha_bar(t) - z.alpha_bar(t)));
    }
  }
  c.note("max |terminal snr| " + fmt(worst_terminal) + ", max rel step-1 snr change " + fmt(worst_first) +
         ", max idempotence gap " + fmt(worst_idem));
  c.expect(worst_terminal <= 1e-12, "terminal snr");
  c.expect(worst_first <= 1e-9, "step-1 snr preserved");
  c.expect(worst_idem <= 1e-12, "idempotence");
}

// 2 -------------------------------------------------------------------------

void edm_grid(Check& c) {
  double worst = 0;
  int cases = 0;
  for (std::size_t n : {10u, 50u, 256u}) {
    for (double smin : {0.002, 0.02, 0.2}) {
      for (double smax : {20.0, 80.0, 500.0}) {
        for (double rho : {3.0, 7.0, 10.0}) {
          const SigmaGrid g = edm_sigma_grid(n, smin, smax, rho);
          ++cases;
          c.expect(g.sigmas.size() == n + 1 && g.sigmas.back() == 0.0, "terminal zero");
          c.expect(g.sigmas.front() == smax && g.sigmas[n - 1] == smin, "exact endpoints");
          for (std::size_t i = 1; i <= n; ++i) {
            if (!(g.sigmas[i] < g.sigmas[i - 1])) c.expect(false, "strictly decreasing");
          }
          const long double hi = std::pow(static_cast<long double>(smax), 1.0L / rho);
          const long double lo = std::pow(static_cast<long double>(smin), 1.0L / rho);
          for (std::size_t i = 0; i < n; ++i) {
            const long double f = static_cast<long double>(i) / static_cast<long double>(n - 1);
            const long double ref = std::pow(hi + f * (lo - hi), static_cast<long double>(rho));
            worst = std::max(worst, static_cast<double>(std::abs(g.sigmas[i] - ref) / ref));
          }
        }
      }
    }
  }
  c.note(std::to_string(cases) + " grids, max relative error vs closed form " + fmt(worst));
  c.expect(worst <= 1e-9, "closed-form match");
}

// 3 -------------------------------------------------------------------------

// Independent reduction: with two-point data every oracle output is a
// multiple of 1_d, so only u = <x,1>/sqrt(d) evolves nontrivially. Each
// update of x projects to a scalar recursion with N(0,1) noise on u.
double scalar_ddpm_mean(const DdpmSchedule& s, std::size_t d, Rng& rng) {
  const double sd = std::sqrt(static_cast<double>(d));
  double u = rng.normal();
  for (std::size_t t = s.steps(); t >= 1; --t) {
    const double ab = s.alpha_bar(t);
    const double ab_prev = t > 1 ? s.alpha_bar(t - 1) : 1.0;
    const double beta = 1.0 - ab / ab_prev;
    const double a = std::sqrt(ab);
    const double var = 1.0 - ab;
    const double x0 = a > 0 ? std::tanh(a * sd * u / var) : 0.0;  // per-coordinate value
    u = std::sqrt(ab_prev) * beta / var * sd * x0 + std::sqrt(1.0 - beta) * (1.0 - ab_prev) / var * u;
    if (t > 1) u += std::sqrt((1.0 - ab_prev) / var * beta) * rng.normal();
  }
  return u / sd;
}

double scalar_heun_mean(const SigmaGrid& g, std::size_t d, Rng& rng) {
  const double sd = std::sqrt(static_cast<double>(d));
  auto den = [&](double u, double sigma) { return sd * std::tanh(sd * u / (sigma * sigma)); };
  double u = g.sigmas.front() * rng.normal();
  for (std::size_t i = 0; i + 1 < g.sigmas.size(); ++i) {
    const double s = g.sigmas[i], sn = g.sigmas[i + 1];
    const double k1 = (u - den(u, s)) / s;
    double next = u + (sn - s) * k1;
    if (sn > 0) next = u + (sn - s) * 0.5 * (k1 + (next - den(next, sn)) / sn);
    u = next;
  }
  return u / sd;
}

double sign_test_p(std::size_t wins, std::size_t losses) {
  const std::size_t n = wins + losses;
  if (n == 0) return 1.0;
  if (wins == 0) return 1.0;
  // One-sided: P(X >= wins) for X ~ Bin(n, 1/2).
  return boost::math::cdf(boost::math::complement(boost::math::binomial(static_cast<double>(n), 0.5),
                                                  static_cast<double>(wins - 1)));
}

void muted_color(Check& c) {
  MeanRecoveryConfig cfg;
  cfg.dim = 1024;
  cfg.n_samples = 1000;
  cfg.seed = 20240501;
  const auto schedules = default_mean_recovery_schedules(50, 16.0);
  const auto reports = run_mean_recovery_experiment(cfg, schedules);
  for (const auto& r : reports) {
    c.note(r.label + ": avg|mean| " + fmt(r.avg_abs_mean) + ", fraction>=0.99 " + fmt(r.saturated_fraction));
  }
  const auto& plain = reports[0];
  const auto& fixed = reports[1];
  std::size_t wins = 0, losses = 0;
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    const double a = std::abs(fixed.means[i]), b = std::abs(plain.means[i]);
    if (a > b) ++wins;
    if (a < b) ++losses;
  }
  const double p = sign_test_p(wins, losses);
  c.note("paired sign test ztsnr vs plain: " + std::to_string(wins) + " wins, " + std::to_string(losses) +
         " losses, " + std::to_string(cfg.n_samples - wins - losses) + " ties, p = " + fmt(p));
  c.expect(fixed.avg_abs_mean > plain.avg_abs_mean, "avg|mean| ztsnr > plain");
  c.expect(p < 0.01, "sign test p < 0.01");

  const SigmaGrid& shifted = std::get<SigmaGrid>(schedules[3].schedule);
  const double leak = static_cast<double>(cfg.dim) / (shifted.sigma_max * shifted.sigma_max);
  c.note("shifted edm: d / sigma_max^2 = " + fmt(leak));
  c.expect(leak < 1e-3, "shifted grid leak < 1e-3");
  c.expect(reports[3].saturated_fraction >= 0.95, "shifted edm fraction >= 0.95");

  Rng oracle_rng(777);
  for (std::size_t k = 0; k < schedules.size(); ++k) {
    double sum = 0;
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
      const double m = std::holds_alternative<DdpmSchedule>(schedules[k].schedule)
                           ? scalar_ddpm_mean(std::get<DdpmSchedule>(schedules[k].schedule), cfg.dim, oracle_rng)
                           : scalar_heun_mean(std::get<SigmaGrid>(schedules[k].schedule), cfg.dim, oracle_rng);
      sum += std::abs(m);
    }
    const double oracle = sum / static_cast<double>(cfg.n_samples);
    c.note(schedules[k].label + ": scalar Monte Carlo oracle avg|mean| " + fmt(oracle));
    c.expect(std::abs(reports[k].avg_abs_mean - oracle) <= 0.1 * oracle, schedules[k].label + " within 10% of oracle");
  }
}

// 4 -------------------------------------------------------------------------

void heun_order(Check& c) {
  const double sd = 0.5, smax = 80.0;
  const std::size_t d = 4;
  const Denoiser den = gaussian_denoiser({Vec(d, 0.0), sd * sd});
  Rng init(44);
  Vec x_init = init.normal_vec(d);
  for (double& v : x_init) v *= smax;
  Vec exact = x_init;
  for (double& v : exact) v *= sd / std::sqrt(sd * sd + smax * smax);
  auto error = [&](std::size_t n) {
    Rng rng(0);
    SamplerConfig cfg;
    cfg.deterministic = true;
    const Vec x = heun_sample(den, edm_sigma_grid(n, 0.002, smax, 7.0), rng, cfg, d, x_init);
    double s = 0;
    for (std::size_t k = 0; k < d; ++k) s += (x[k] - exact[k]) * (x[k] - exact[k]);
    return std::sqrt(s);
  };
  for (std::size_t n : {32u, 64u, 128u}) {
    const double ratio = error(n) / error(2 * n);
    c.note("error(" + std::to_string(n) + ")/error(" + std::to_string(2 * n) + ") = " + fmt(ratio));
    c.expect(ratio >= 3.0 && ratio <= 5.0, "ratio in [3,5] at n=" + std::to_string(n));
  }
}

// 5 -------------------------------------------------------------------------

Eigen::MatrixXd denman_beavers_sqrt(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd y = a;
  Eigen::MatrixXd z = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  for (int i = 0; i < 100; ++i) {
    const Eigen::MatrixXd yn = 0.5 * (y + z.inverse());
    const Eigen::MatrixXd zn = 0.5 * (z + y.inverse());
    const double change = (yn - y).norm();
    y = yn;
    z = zn;
    if (change < 1e-15 * y.norm()) break;
  }
  return y;
}

FeatureSet random_features(Rng& rng, std::size_t n, std::size_t d, double scale, double shift) {
  FeatureSet s;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureRow r{"r" + std::to_string(i), "c", rng.normal_vec(d), {}, {}};
    for (std::size_t k = 0; k < d; ++k) r.feat[k] = scale * (1.0 + 0.5 * k) * r.feat[k] + shift * k;
    s.rows.push_back(std::move(r));
  }
  return s;
}

void fid_suite(Check& c) {
  Rng rng(55);
  const FeatureSet base = random_features(rng, 300, 16, 1.0, 0.0);
  const double identity = fid_report(base, base, false).overall;
  c.note("identity " + fmt(identity));
  c.expect(std::abs(identity) <= 1e-8, "identity -> 0");

  double worst_1d = 0;
  for (int i = 0; i < 100; ++i) {
    const double ma = rng.normal(), mb = rng.normal(), va = 0.01 + rng.uniform() * 5, vb = 0.01 + rng.uniform() * 5;
    GaussianStats a{Eigen::VectorXd::Constant(1, ma), Eigen::MatrixXd::Constant(1, 1, va), 2, false};
    GaussianStats b{Eigen::VectorXd::Constant(1, mb), Eigen::MatrixXd::Constant(1, 1, vb), 2, false};
    const double expect = (ma - mb) * (ma - mb) + (std::sqrt(va) - std::sqrt(vb)) * (std::sqrt(va) - std::sqrt(vb));
    worst_1d = std::max(worst_1d, std::abs(frechet_distance(a, b) - expect) / std::max(1.0, expect));
  }
  c.note("1-D closed form max rel error " + fmt(worst_1d));
  c.expect(worst_1d <= 1e-12, "1-D closed form");

  double worst_rot = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = gaussian_stats(random_features(rng, 200, 8, 1.0, 0.0));
    const auto b = gaussian_stats(random_features(rng, 200, 8, 1.4, 0.3));
    Eigen::MatrixXd m(8, 8);
    for (int i = 0; i < 64; ++i) m(i / 8, i % 8) = rng.normal();
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
    auto rot = [&](GaussianStats s) {
      s.mean = q * s.mean;
      s.cov = q * s.cov * q.transpose();
      return s;
    };
    worst_rot = std::max(worst_rot, std::abs(frechet_distance(rot(a), rot(b)) - frechet_distance(a, b)));
  }
  c.note("rotation invariance max gap " + fmt(worst_rot));
  c.expect(worst_rot <= 1e-6, "rotation invariance");

  double worst_oracle = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = gaussian_stats(random_features(rng, 100, 4, 1.0, 0.0));
    const auto b = gaussian_stats(random_features(rng, 100, 4, 0.5 + 0.1 * trial, 0.2));
    const double oracle = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() -
                          2.0 * denman_beavers_sqrt(a.cov * b.cov).trace();
    worst_oracle = std::max(worst_oracle, std::abs(frechet_distance(a, b) - oracle) / oracle);
  }
  c.note("D=4/N=100 oracle max rel error " + fmt(worst_oracle));
  c.expect(worst_oracle <= 1e-6, "oracle match");

  const auto a = gaussian_stats(random_features(rng, 100, 6, 1.0, 0.0));
  GaussianStats b = a;
  Eigen::VectorXd delta(6);
  for (int k = 0; k < 6; ++k) delta(k) = rng.normal();
  b.mean += delta;
  const double shift_gap = std::abs(frechet_distance(a, b) - delta.squaredNorm());
  c.note("mean-shift gap " + fmt(shift_gap));
  c.expect(shift_gap <= 1e-8, "mean shift = ||delta||^2");
}

// 6 -------------------------------------------------------------------------

Outcome rule_oracle(int a, int b, int raters) {
  if (raters < 7) return Outcome::kInvalid;
  if (a >= b + 2) return Outcome::kWinA;
  if (b >= a + 2) return Outcome::kWinB;
  return Outcome::kTie;
}

std::vector<Vote> votes_for(const std::string& pair, int a, int b) {
  std::vector<Vote> out;
  for (int i = 0; i < a + b; ++i) out.push_back({"s", pair, "r" + std::to_string(i), i < a ? Choice::kA : Choice::kB, "", 0});
  return out;
}

void preference_rules(Check& c) {
  const StudyRules rules;
  c.expect(score_pair(votes_for("p", 5, 2), rules).outcome == Outcome::kWinA, "5/2 -> win_A");
  c.expect(score_pair(votes_for("p", 4, 3), rules).outcome == Outcome::kTie, "4/3 -> tie");
  c.expect(score_pair(votes_for("p", 6, 0), rules).outcome == Outcome::kInvalid, "6 raters -> invalid");

  int checked = 0, mismatches = 0;
  for (int a = 0; a <= 15; ++a) {
    for (int b = 0; a + b <= 15; ++b) {
      for (int u = 0; u <= a + b; ++u) {
        ++checked;
        if (decide(a, b, u, rules) != rule_oracle(a, b, u)) ++mismatches;
      }
      ++checked;
      if (score_pair(votes_for("p", a, b), rules).outcome != rule_oracle(a, b, a + b)) ++mismatches;
    }
  }
  c.note(std::to_string(checked) + " vote-count cases, " + std::to_string(mismatches) + " mismatches");
  c.expect(mismatches == 0, "exhaustive rule agreement");

  // Planted study: 1000 pairs, 7 raters each, every vote is A with p = 0.8.
  const int pairs = 1000, raters = 7;
  const double p = 0.8;
  Rng rng(7);
  std::vector<json> records;
  for (int i = 0; i < pairs; ++i) {
    for (int r = 0; r < raters; ++r) {
      records.push_back({{"study", "planted"},
                         {"pair", "p" + std::to_string(i)},
                         {"rater", "r" + std::to_string(r)},
                         {"choice", rng.uniform() < p ? "A" : "B"},
                         {"ts", format_timestamp(1'700'000'000'000'000LL + (i * raters + r) * 1000LL)}});
    }
  }
  const IngestResult ingested = ingest_votes(records);
  const StudyReport report = study_report(ingested.votes, rules, "planted");

  // Monte Carlo oracle on independent draws, with the exact binomial value
  // alongside.
  Rng oracle_rng(8);
  const int sims = 2'000'000;
  std::size_t mc_a = 0, mc_b = 0;
  for (int i = 0; i < sims; ++i) {
    int a = 0;
    for (int r = 0; r < raters; ++r) a += oracle_rng.uniform() < p;
    const Outcome o = rule_oracle(a, raters - a, raters);
    mc_a += o == Outcome::kWinA;
    mc_b += o == Outcome::kWinB;
  }
  const double oracle_ratio = static_cast<double>(mc_a) / static_cast<double>(mc_b);
  const boost::math::binomial bin(raters, p);
  const double p_win_a = boost::math::cdf(boost::math::complement(bin, 4.0));
  const double p_win_b = boost::math::cdf(bin, 2.0);
  c.note("oracle ratio " + fmt(oracle_ratio) + " (exact " + fmt(p_win_a / p_win_b) + "), expected wins_B per study " +
         fmt(pairs * p_win_b));
  std::string got = "undefined";
  if (report.ratio.kind == PreferenceRatio::Kind::kInfinite) got = "inf";
  if (report.ratio.kind == PreferenceRatio::Kind::kFinite) got = fmt(report.ratio.value);
  c.note("planted study: wins_A " + std::to_string(report.wins_a) + ", wins_B " + std::to_string(report.wins_b) +
         ", ties " + std::to_string(report.ties) + ", ratio " + got);
  c.expect(report.ratio.kind == PreferenceRatio::Kind::kFinite &&
               std::abs(report.ratio.value - oracle_ratio) <= 0.15 * oracle_ratio,
           "planted ratio within 15% of oracle");
}

// 7 -------------------------------------------------------------------------

std::vector<BucketAssignment> synthetic(const std::vector<std::size_t>& counts) {
  std::vector<BucketAssignment> out;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    for (std::size_t i = 0; i < counts[b]; ++i) out.push_back({std::to_string(b) + ":" + std::to_string(i), b, 0, 0});
  }
  return out;
}

void bucketing_suite(Check& c) {
  const auto buckets = default_buckets();
  const auto portrait = assign_image({"p", 876, 1168, {}}, buckets);
  const auto landscape = assign_image({"l", 1168, 876, {}}, buckets);
  c.note("876x1168 -> " + buckets[portrait.bucket].label + ", 1168x876 -> " + buckets[landscape.bucket].label);
  c.expect(buckets[portrait.bucket].label == "3:4", "876x1168 -> 3:4");
  c.expect(buckets[landscape.bucket].label == "4:3", "1168x876 -> 4:3");

  Rng rng(70);
  std::size_t plans = 0, mixed = 0, over_repeat = 0;
  while (plans < 10000) {
    const std::size_t nb = 1 + rng.index(9);
    std::vector<std::size_t> counts(nb);
    for (auto& n : counts) n = rng.index(40);
    const auto assignments = synthetic(counts);
    const std::size_t batch = 1 + rng.index(8);
    const std::size_t max_repeat = 1 + rng.index(4);
    const std::size_t largest = *std::max_element(counts.begin(), counts.end());
    if (assignments.empty() || largest * max_repeat < batch) continue;
    const PlanStrategy strategy = rng.uniform() < 0.5 ? PlanStrategy::natural() : PlanStrategy::balanced(rng.uniform());
    const SamplingPlan plan = plan_epoch(assignments, nb, batch, strategy, max_repeat, rng);
    ++plans;
    for (const auto& b : plan.batches) {
      for (const auto& id : b.ids) {
        if (std::stoul(id.substr(0, id.find(':'))) != b.bucket) ++mixed;
      }
    }
    for (const auto& [id, n] : plan.repeats) over_repeat += n > max_repeat;
  }
  c.note(std::to_string(plans) + " fuzzed plans, " + std::to_string(mixed) + " foreign ids, " +
         std::to_string(over_repeat) + " repeat violations");
  c.expect(mixed == 0, "single-bucket batches");
  c.expect(over_repeat == 0, "max_repeat respected");

  const std::vector<std::size_t> counts{40000, 10000, 5000, 25000, 20000};
  const auto assignments = synthetic(counts);
  Rng plan_rng(71);
  const SamplingPlan bal = plan_epoch(assignments, counts.size(), 1, PlanStrategy::balanced(0.0), 10, plan_rng);
  const BucketStats bs = plan_stats(bal, assignments, counts.size());
  const SamplingPlan nat = plan_epoch(assignments, counts.size(), 1, PlanStrategy::natural(), 10, plan_rng);
  const BucketStats ns = plan_stats(nat, assignments, counts.size());
  c.note("balanced(0): " + std::to_string(bal.batches.size()) + " batches, L1 to uniform " + fmt(bs.l1_to_uniform));
  c.note("natural: " + std::to_string(nat.batches.size()) + " batches, L1 to counts " + fmt(ns.l1_to_natural));
  c.expect(bal.batches.size() >= 100000, "balanced run has 1e5 batches");
  c.expect(bs.l1_to_uniform < 0.02, "balanced(0) L1 < 0.02");
  c.expect(ns.l1_to_natural < 0.02, "natural L1 < 0.02");
}

// 8 -------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void determinism(Check& c) {
  const fs::path dir = fs::temp_directory_path() / ("difflab_accept_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto f = [&](const std::string& name) { return (dir / name).string(); };

  {
    std::ofstream meta(f("meta.csv"));
    meta << "id,width,height,category\n";
    Rng rng(80);
    for (int i = 0; i < 300; ++i) {
      meta << "img" << i << ',' << 256 + rng.index(2000) << ',' << 256 + rng.index(2000) << ",cat" << i % 3 << '\n';
    }
    Rng frng(81);
    for (const char* name : {"ref.jsonl", "gen.jsonl"}) {
      FeatureSet s;
      for (int i = 0; i < 60; ++i) {
        s.rows.push_back({std::string(name) + std::to_string(i), i % 2 ? "people" : "food", frng.normal_vec(8),
                          frng.uniform() * 10, frng.uniform()});
      }
      std::ofstream out(f(name));
      io::write_features_jsonl(out, s);
    }
    std::ofstream votes(f("votes.jsonl"));
    Rng vrng(82);
    for (int p = 0; p < 20; ++p) {
      for (int r = 0; r < 8; ++r) {
        votes << json{{"study", "det"}, {"pair", "p" + std::to_string(p)}, {"rater", "r" + std::to_string(r)},
                      {"choice", vrng.uniform() < 0.7 ? "A" : "B"}, {"ts", "2024-05-01T12:00:00Z"}}
                     .dump()
              << '\n';
      }
    }
    std::ofstream ratings(f("ratings.csv"));
    ratings << "id,source,rating,rater_count\n";
    for (int i = 0; i < 50; ++i) ratings << "it" << i << ',' << (i % 2 ? "web" : "stock") << ',' << vrng.index(10) << ',' << vrng.index(12) << '\n';
  }

  // Files written by a command are recorded in its output under `artifacts`.
  struct Cmd {
    std::vector<std::string> args;
    std::vector<std::string> artifacts;
  };
  const std::vector<Cmd> cmds{
      {{"--seed", "1", "schedule", "snr"}, {}},
      {{"--seed", "1", "schedule", "snr", "--ztsnr", "--json"}, {}},
      {{"--seed", "1", "schedule", "ztsnr", "--out", f("z.json")}, {"z.json"}},
      {{"--seed", "1", "schedule", "edm-grid", "--n", "40", "--csv"}, {}},
      {{"--seed", "1", "schedule", "shift", "--schedule", f("z.json"), "--json"}, {}},
      {{"--seed", "1", "schedule", "shift", "--edm", "--json"}, {}},
      {{"--seed", "3", "toy", "mean-recovery", "--d", "64", "--samples", "40", "--edm-steps", "20", "--json"}, {}},
      {{"--seed", "3", "toy", "mean-recovery", "--d", "64", "--samples", "40", "--edm-steps", "20"}, {}},
      {{"--seed", "3", "toy", "heun-demo", "--count", "5", "--churn", "10", "--samples-out", f("s.jsonl"),
        "--trajectory-out", f("t.csv")},
       {"s.jsonl", "t.csv"}},
      {{"--seed", "4", "buckets", "make", "--json"}, {}},
      {{"--seed", "4", "buckets", "assign", "--meta", f("meta.csv")}, {}},
      {{"--seed", "4", "buckets", "plan", "--meta", f("meta.csv"), "--out", f("plan.jsonl")}, {"plan.jsonl"}},
      {{"--seed", "4", "buckets", "plan", "--meta", f("meta.csv"), "--strategy", "natural", "--csv"}, {}},
      {{"--seed", "4", "buckets", "stats", "--meta", f("meta.csv"), "--plan", f("plan.jsonl")}, {}},
      {{"--seed", "5", "fid", "compute", "--ref", f("ref.jsonl"), "--gen", f("gen.jsonl"), "--per-category"}, {}},
      {{"--seed", "5", "fid", "curate", "--candidates", f("gen.jsonl"), "--per-category", "10"}, {}},
      {{"--seed", "6", "study", "report", "--votes", f("votes.jsonl")}, {}},
      {{"--seed", "6", "study", "curate", "--ratings", f("ratings.csv"), "--quota", "web=5", "--quota", "stock=5"}, {}},
  };
  std::size_t identical = 0;
  for (const auto& cmd : cmds) {
    std::string outputs[2];
    bool ok = true;
    for (int rep = 0; rep < 2; ++rep) {
      std::ostringstream out, err;
      const int code = cli::run(cmd.args, out, err);
      if (code != 0) {
        ok = false;
        c.expect(false, "exit " + std::to_string(code) + " for " + cmd.args[2] + " " + cmd.args[3] + ": " + err.str());
      }
      outputs[rep] = out.str() + "\x1f" + err.str();
      for (const auto& a : cmd.artifacts) outputs[rep] += "\x1f" + slurp(dir / a);
    }
    std::string label;
    for (std::size_t i = 2; i < cmd.args.size(); ++i) label += (i > 2 ? " " : "") + cmd.args[i];
    if (ok && outputs[0] == outputs[1]) {
      ++identical;
    } else {
      c.expect(false, "outputs differ: " + label);
    }
  }
  c.note(std::to_string(identical) + "/" + std::to_string(cmds.size()) +
         " invocations byte-identical across two runs (study serve is interactive and not covered)");
  fs::remove_all(dir);
}

}  // namespace

int main() {
  std::cout << "difflab acceptance suite\n";
  int failed = 0;
  failed += !run_criterion(1, "zero terminal SNR contract", 1.0, zero_terminal_snr);
  failed += !run_criterion(2, "EDM sigma grid", 1.0, edm_grid);
  failed += !run_criterion(3, "muted-color mean recovery", 60.0, muted_color);
  failed += !run_criterion(4, "Heun second-order convergence", 5.0, heun_order);
  failed += !run_criterion(5, "FID suite", 5.0, fid_suite);
  failed += !run_criterion(6, "preference rules", 10.0, preference_rules);
  failed += !run_criterion(7, "bucketing", 30.0, bucketing_suite);
  failed += !run_criterion(8, "CLI determinism", 0.0, determinism);
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criterion/criteria failed") << "\n";
  return failed == 0 ? 0 : 1;
}

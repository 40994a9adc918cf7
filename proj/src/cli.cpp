// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#include "difflab/cli.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"

#include "difflab/bucketing.hpp"
#include "difflab/fid.hpp"
#include "difflab/io.hpp"
#include "difflab/preference.hpp"
#include "difflab/samplers.hpp"
#include "difflab/schedules.hpp"
#include "difflab/toy_denoisers.hpp"
// After the Eigen users above: httplib.h pulls in <resolv.h>, which defines _res.
#include "difflab/study_service.hpp"
#include "httplib.h"

namespace difflab::cli {

namespace {

using io::json;

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  bool json = false;
  std::string csv_path;
  CLI::Option* csv_opt = nullptr;
  CLI::Option* seed_opt = nullptr;

  bool csv() const { return csv_opt->count() > 0; }
  bool seed_given() const { return seed_opt->count() > 0; }
};

class Context {
 public:
  Context(const Globals& g, std::ostream& out) : g_(g), out_(out) {}

  const Globals& globals() const { return g_; }

  // Writes a CSV artifact to --csv PATH, else --out, else stdout.
  void emit_csv(const std::string& text) const { emit(g_.csv_path.empty() ? g_.out : g_.csv_path, text); }
  // Writes a JSON/JSONL artifact to --out, else stdout.
  void emit_main(const std::string& text) const { emit(g_.out, text); }
  std::ostream& out() const { return out_; }

  static void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << text;
    if (!f) throw std::runtime_error("failed writing " + path);
  }

 private:
  void emit(const std::string& path, const std::string& text) const {
    if (path.empty()) {
      out_ << text;
    } else {
      write_file(path, text);
    }
  }

  const Globals& g_;
  std::ostream& out_;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

json read_json_file(const std::string& path) {
  auto in = open_input(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw io::FormatError(path + ": invalid JSON: " + e.what());
  }
}

// --- schedule ------------------------------------------------------------

struct ScheduleSource {
  std::vector<double> ddpm_linear{1000, 1e-4, 0.02};
  std::string schedule_file;
  CLI::Option* linear_opt = nullptr;
  CLI::Option* file_opt = nullptr;

  void add_to(CLI::App* cmd) {
    linear_opt = cmd->add_option("--ddpm-linear", ddpm_linear, "Linear DDPM schedule: T beta_start beta_end")
                     ->expected(3)
                     ->capture_default_str();
    file_opt = cmd->add_option("--schedule", schedule_file, "Schedule JSON file (kind ddpm)")->check(CLI::ExistingFile);
    linear_opt->excludes(file_opt);
  }

  DdpmSchedule load() const {
    if (file_opt->count() > 0) return io::schedule_from_json(read_json_file(schedule_file));
    const double t = ddpm_linear[0];
    if (t < 2 || t != std::floor(t) || t > 1e7) throw std::invalid_argument("--ddpm-linear: T must be an integer >= 2");
    return ddpm_linear_schedule(static_cast<std::size_t>(t));
  }

  std::string name() const {
    if (file_opt->count() > 0) return schedule_file;
    return "ddpm-linear";
  }

 private:
  DdpmSchedule ddpm_linear_schedule(std::size_t t) const { return difflab::ddpm_linear(t, ddpm_linear[1], ddpm_linear[2]); }
};

struct GridParams {
  std::size_t n = 50;
  double sigma_min = edm_defaults::kSigmaMin;
  double sigma_max = edm_defaults::kSigmaMax;
  double rho = edm_defaults::kRho;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--n", n, "Number of noise levels (excluding the terminal 0)")->capture_default_str();
    cmd->add_option("--sigma-min", sigma_min)->capture_default_str();
    cmd->add_option("--sigma-max", sigma_max)->capture_default_str();
    cmd->add_option("--rho", rho)->capture_default_str();
  }

  SigmaGrid make() const { return edm_sigma_grid(n, sigma_min, sigma_max, rho); }
};

std::string snr_json(const DdpmSchedule& sched) {
  json rows = json::array();
  for (std::size_t t = 1; t <= sched.steps(); ++t) {
    const double snr = snr_at(sched, t);
    rows.push_back({{"t", t},
                    {"alpha_bar", sched.alpha_bar(t)},
                    {"snr", snr},
                    {"log_snr", snr > 0 ? json(std::log(snr)) : json(nullptr)}});
  }
  return io::dump({{"rows", std::move(rows)}, {"terminal_snr", terminal_snr(sched)}});
}

void add_schedule_commands(CLI::App& app, const Context& ctx) {
  auto* schedule = app.add_subcommand("schedule", "Noise schedules: SNR curves, zero terminal SNR, EDM grids");
  schedule->require_subcommand(1);

  {
    auto* cmd = schedule->add_subcommand("snr", "SNR curve of a DDPM schedule (CSV t,alpha_bar,snr,log_snr)");
    auto src = std::make_shared<ScheduleSource>();
    auto ztsnr = std::make_shared<bool>(false);
    src->add_to(cmd);
    cmd->add_flag("--ztsnr", *ztsnr, "Rescale to zero terminal SNR first");
    cmd->callback([&ctx, src, ztsnr] {
      DdpmSchedule sched = src->load();
      if (*ztsnr) sched = rescale_zero_terminal_snr(sched);
      if (ctx.globals().json) {
        ctx.emit_main(snr_json(sched));
      } else {
        std::ostringstream os;
        io::write_snr_csv(os, sched);
        ctx.emit_csv(os.str());
      }
    });
  }
  {
    auto* cmd = schedule->add_subcommand("ztsnr", "Rescale a DDPM schedule to zero terminal SNR");
    auto src = std::make_shared<ScheduleSource>();
    src->add_to(cmd);
    cmd->callback([&ctx, src] {
      const DdpmSchedule sched = rescale_zero_terminal_snr(src->load());
      if (ctx.globals().csv()) {
        std::ostringstream os;
        io::write_snr_csv(os, sched);
        ctx.emit_csv(os.str());
      } else {
        ctx.emit_main(io::dump(io::schedule_json(sched, src->name() + "+ztsnr")));
      }
    });
  }
  {
    auto* cmd = schedule->add_subcommand("edm-grid", "EDM sigma grid");
    auto params = std::make_shared<GridParams>();
    params->add_to(cmd);
    cmd->callback([&ctx, params] {
      const SigmaGrid grid = params->make();
      if (ctx.globals().csv()) {
        std::ostringstream os;
        io::write_grid_csv(os, grid);
        ctx.emit_csv(os.str());
      } else {
        ctx.emit_main(io::dump(io::grid_json(grid)));
      }
    });
  }
  {
    auto* cmd = schedule->add_subcommand("shift", "Resolution shift of a DDPM schedule or EDM grid");
    auto src = std::make_shared<ScheduleSource>();
    auto params = std::make_shared<GridParams>();
    auto edm = std::make_shared<bool>(false);
    auto ref = std::make_shared<double>(64.0);
    auto target = std::make_shared<double>(1024.0);
    src->add_to(cmd);
    params->add_to(cmd);
    cmd->add_flag("--edm", *edm, "Shift an EDM grid built from --n/--sigma-min/--sigma-max/--rho");
    cmd->add_option("--ref", *ref, "Reference resolution")->capture_default_str();
    cmd->add_option("--target", *target, "Target resolution")->capture_default_str();
    cmd->callback([&ctx, src, params, edm, ref, target] {
      bool use_edm = *edm;
      std::optional<SigmaGrid> file_grid;
      if (src->file_opt->count() > 0) {
        const json j = read_json_file(src->schedule_file);
        if (j.is_object() && j.value("kind", "") == "edm") {
          file_grid = io::grid_from_json(j);
          use_edm = true;
        }
      }
      if (use_edm) {
        const SigmaGrid grid = shift_schedule(file_grid ? *file_grid : params->make(), *ref, *target);
        if (ctx.globals().csv()) {
          std::ostringstream os;
          io::write_grid_csv(os, grid);
          ctx.emit_csv(os.str());
        } else {
          ctx.emit_main(io::dump(io::grid_json(grid)));
        }
        return;
      }
      const DdpmSchedule sched = shift_schedule(src->load(), *ref, *target);
      if (ctx.globals().csv()) {
        std::ostringstream os;
        io::write_snr_csv(os, sched);
        ctx.emit_csv(os.str());
      } else {
        ctx.emit_main(io::dump(io::schedule_json(sched, src->name() + "+shift")));
      }
    });
  }
}

// --- toy -----------------------------------------------------------------

void add_toy_commands(CLI::App& app, const Context& ctx) {
  auto* toy = app.add_subcommand("toy", "Closed-form denoiser experiments");
  toy->require_subcommand(1);

  {
    auto* cmd = toy->add_subcommand("mean-recovery", "Flat-level recovery on two-point data under several schedules");
    auto cfg = std::make_shared<MeanRecoveryConfig>();
    auto edm_steps = std::make_shared<std::size_t>(50);
    auto edm_shift = std::make_shared<double>(16.0);
    cmd->add_option("--d", cfg->dim, "Data dimension")->capture_default_str();
    cmd->add_option("--samples", cfg->n_samples, "Samples per schedule")->capture_default_str();
    cmd->add_option("--saturation", cfg->saturation, "Threshold on |mean| for the saturated fraction")
        ->capture_default_str();
    cmd->add_option("--threads", cfg->threads, "Worker threads (0 = all cores)")->capture_default_str();
    cmd->add_option("--edm-steps", *edm_steps, "Noise levels in the EDM grids")->capture_default_str();
    cmd->add_option("--edm-shift", *edm_shift, "Resolution factor applied to the shifted EDM grid")
        ->capture_default_str();
    cmd->callback([&ctx, cfg, edm_steps, edm_shift] {
      MeanRecoveryConfig run = *cfg;
      run.seed = ctx.globals().seed;
      const auto reports = run_mean_recovery_experiment(run, default_mean_recovery_schedules(*edm_steps, *edm_shift));
      if (ctx.globals().csv()) {
        std::ostringstream os;
        os << "schedule,kind,avg_abs_mean,saturated_fraction\n";
        for (const auto& r : reports) {
          os << r.label << ',' << r.kind << ',' << io::format_double(r.avg_abs_mean) << ','
             << io::format_double(r.saturated_fraction) << '\n';
        }
        ctx.emit_csv(os.str());
        return;
      }
      if (ctx.globals().json || !ctx.globals().out.empty()) ctx.emit_main(io::dump(io::mean_recovery_json(reports, run)));
      if (!ctx.globals().json) ctx.out() << io::mean_recovery_table(reports, run.saturation);
    });
  }
  {
    auto* cmd = toy->add_subcommand("heun-demo", "Heun sampling of Gaussian data against the exact ODE solution");
    struct Params {
      std::size_t dim = 4;
      std::size_t steps = 32;
      std::size_t count = 1;
      double sigma_data = edm_defaults::kSigmaData;
      double churn = 0.0;
      std::string samples_out;
      std::string trajectory_out;
    };
    auto p = std::make_shared<Params>();
    cmd->add_option("--d", p->dim, "Data dimension")->capture_default_str();
    cmd->add_option("--steps", p->steps, "Noise levels in the grid")->capture_default_str();
    cmd->add_option("--count", p->count, "Number of samples")->capture_default_str();
    cmd->add_option("--sigma-data", p->sigma_data)->capture_default_str();
    cmd->add_option("--churn", p->churn, "S_churn; 0 gives the deterministic sampler")->capture_default_str();
    cmd->add_option("--samples-out", p->samples_out, "Write samples as JSONL {seed, x}");
    cmd->add_option("--trajectory-out", p->trajectory_out, "Write the first sample's trajectory as CSV");
    cmd->callback([&ctx, p] {
      if (p->count < 1) throw std::invalid_argument("--count must be >= 1");
      const SigmaGrid grid = edm_sigma_grid(p->steps, edm_defaults::kSigmaMin, edm_defaults::kSigmaMax,
                                            edm_defaults::kRho);
      const Denoiser denoiser = gaussian_denoiser({Vec(p->dim, 0.0), p->sigma_data * p->sigma_data});
      SamplerConfig cfg;
      cfg.s_churn = p->churn;
      cfg.deterministic = p->churn == 0.0;
      const double shrink = p->sigma_data / std::hypot(p->sigma_data, grid.sigma_max);

      json samples = json::array();
      std::ostringstream sample_lines;
      std::vector<TrajectoryPoint> trajectory;
      for (std::size_t i = 0; i < p->count; ++i) {
        const std::uint64_t seed = derive_seed(ctx.globals().seed, i);
        Rng rng(seed);
        Vec x_init = rng.normal_vec(p->dim);
        for (double& v : x_init) v *= grid.sigma_max;
        TrajectoryObserver observer;
        if (i == 0) observer = [&](const TrajectoryPoint& pt) { trajectory.push_back(pt); };
        const Vec x = heun_sample(denoiser, grid, rng, cfg, p->dim, x_init, observer);
        double err = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) err += std::pow(x[k] - x_init[k] * shrink, 2);
        json entry{{"seed", seed}, {"norm", std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0))}};
        entry["endpoint_error"] = cfg.deterministic ? json(std::sqrt(err)) : json(nullptr);
        samples.push_back(std::move(entry));
        io::write_sample_line(sample_lines, seed, x);
      }
      if (!p->samples_out.empty()) Context::write_file(p->samples_out, sample_lines.str());
      if (!p->trajectory_out.empty()) {
        std::ostringstream os;
        io::write_trajectory_csv(os, trajectory);
        Context::write_file(p->trajectory_out, os.str());
      }
      if (ctx.globals().csv()) {
        std::ostringstream os;
        io::write_trajectory_csv(os, trajectory);
        ctx.emit_csv(os.str());
        return;
      }
      ctx.emit_main(io::dump({{"dim", p->dim},
                              {"steps", p->steps},
                              {"sigma_data", p->sigma_data},
                              {"churn", p->churn},
                              {"samples", std::move(samples)}}));
    });
  }
}

// --- buckets -------------------------------------------------------------

struct BucketSource {
  std::string buckets_file;
  std::int64_t budget = kDefaultPixelBudget;
  int divisor = kDefaultDivisor;
  double max_log_ratio = kDefaultMaxLogRatio;

  void add_to(CLI::App* cmd, bool with_file) {
    if (with_file) cmd->add_option("--buckets", buckets_file, "Bucket list JSON (default: generated)")->check(CLI::ExistingFile);
    cmd->add_option("--budget", budget, "Pixel budget per bucket")->capture_default_str();
    cmd->add_option("--divisor", divisor, "Side lengths are multiples of this")->capture_default_str();
    cmd->add_option("--max-log-ratio", max_log_ratio, "Largest |ln(width/height)|")->capture_default_str();
  }

  std::vector<Bucket> load() const {
    if (!buckets_file.empty()) return io::buckets_from_json(read_json_file(buckets_file));
    return default_buckets(budget, divisor, max_log_ratio);
  }
};

std::vector<ImageMeta> read_meta(const std::string& path) {
  auto in = open_input(path);
  return io::read_image_meta_csv(in);
}

void add_bucket_commands(CLI::App& app, const Context& ctx) {
  auto* buckets = app.add_subcommand("buckets", "Aspect-ratio bucketing and balanced batch plans");
  buckets->require_subcommand(1);

  {
    auto* cmd = buckets->add_subcommand("make", "Generate the bucket list");
    auto src = std::make_shared<BucketSource>();
    src->add_to(cmd, false);
    cmd->callback([&ctx, src] {
      const auto list = src->load();
      if (ctx.globals().csv()) {
        std::ostringstream os;
        os << "index,width,height,label,ratio\n";
        for (std::size_t i = 0; i < list.size(); ++i) {
          os << i << ',' << list[i].width << ',' << list[i].height << ',' << list[i].label << ','
             << io::format_double(list[i].ratio()) << '\n';
        }
        ctx.emit_csv(os.str());
      } else {
        ctx.emit_main(io::dump(io::buckets_json(list)));
      }
    });
  }
  {
    auto* cmd = buckets->add_subcommand("assign", "Assign images to their nearest bucket");
    auto src = std::make_shared<BucketSource>();
    auto meta = std::make_shared<std::string>();
    src->add_to(cmd, true);
    cmd->add_option("--meta", *meta, "Image metadata CSV id,width,height[,category]")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->callback([&ctx, src, meta] {
      const auto list = src->load();
      const auto assignments = assign_images(read_meta(*meta), list);
      if (ctx.globals().csv()) {
        std::ostringstream os;
        os << "image,bucket,width,height,label,log_distance,crop_fraction\n";
        for (const auto& a : assignments) {
          const Bucket& b = list[a.bucket];
          os << io::csv_field(a.image_id) << ',' << a.bucket << ',' << b.width << ',' << b.height << ',' << b.label << ','
             << io::format_double(a.log_distance) << ',' << io::format_double(a.crop_fraction) << '\n';
        }
        ctx.emit_csv(os.str());
      } else {
        std::ostringstream os;
        io::write_assignments_jsonl(os, assignments, list);
        ctx.emit_main(os.str());
      }
    });
  }
  {
    auto* cmd = buckets->add_subcommand("plan", "Build one epoch of single-bucket batches (JSONL)");
    struct Params {
      std::string meta;
      std::string strategy = "balanced";
      double tau = 0.0;
      std::size_t batch_size = 4;
      std::size_t max_repeat = kDefaultMaxRepeat;
    };
    auto src = std::make_shared<BucketSource>();
    auto p = std::make_shared<Params>();
    src->add_to(cmd, true);
    cmd->add_option("--meta", p->meta, "Image metadata CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--strategy", p->strategy, "natural or balanced")
        ->check(CLI::IsMember({"natural", "balanced"}))
        ->capture_default_str();
    cmd->add_option("--tau", p->tau, "Exponent for balanced sampling, in [0, 1]")->capture_default_str();
    cmd->add_option("--batch-size", p->batch_size)->capture_default_str();
    cmd->add_option("--max-repeat", p->max_repeat, "Uses allowed per image per epoch")->capture_default_str();
    cmd->callback([&ctx, src, p] {
      const auto list = src->load();
      const auto assignments = assign_images(read_meta(p->meta), list);
      const PlanStrategy strategy = p->strategy == "natural" ? PlanStrategy::natural() : PlanStrategy::balanced(p->tau);
      Rng rng(ctx.globals().seed);
      const SamplingPlan plan = plan_epoch(assignments, list.size(), p->batch_size, strategy, p->max_repeat, rng);
      if (ctx.globals().csv()) {
        std::ostringstream os;
        os << "batch,bucket,width,height,ids\n";
        for (std::size_t i = 0; i < plan.batches.size(); ++i) {
          const Batch& b = plan.batches[i];
          os << i << ',' << b.bucket << ',' << list[b.bucket].width << ',' << list[b.bucket].height << ',';
          std::string ids;
          for (std::size_t k = 0; k < b.ids.size(); ++k) ids += (k ? ";" : "") + b.ids[k];
          os << io::csv_field(ids);
          os << '\n';
        }
        ctx.emit_csv(os.str());
      } else {
        std::ostringstream os;
        io::write_plan_jsonl(os, plan, list);
        ctx.emit_main(os.str());
      }
    });
  }
  {
    auto* cmd = buckets->add_subcommand("stats", "Bucket shares and balance of a plan");
    auto src = std::make_shared<BucketSource>();
    auto meta = std::make_shared<std::string>();
    auto plan_file = std::make_shared<std::string>();
    src->add_to(cmd, true);
    cmd->add_option("--meta", *meta, "Image metadata CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--plan", *plan_file, "Plan JSONL")->required()->check(CLI::ExistingFile);
    cmd->callback([&ctx, src, meta, plan_file] {
      const auto list = src->load();
      const auto assignments = assign_images(read_meta(*meta), list);
      auto in = open_input(*plan_file);
      const SamplingPlan plan = io::read_plan_jsonl(in);
      const BucketStats stats = plan_stats(plan, assignments, list.size());
      if (ctx.globals().csv()) {
        std::ostringstream os;
        os << "bucket,width,height,label,batches,share,natural_share\n";
        for (std::size_t b = 0; b < list.size(); ++b) {
          os << b << ',' << list[b].width << ',' << list[b].height << ',' << list[b].label << ','
             << stats.batch_counts[b] << ',' << io::format_double(stats.shares[b]) << ','
             << io::format_double(stats.natural_shares[b]) << '\n';
        }
        ctx.emit_csv(os.str());
      } else {
        ctx.emit_main(io::dump(io::bucket_stats_json(stats, list)));
      }
    });
  }
}

// --- fid -----------------------------------------------------------------

FeatureSet read_features(const std::string& path) {
  auto in = open_input(path);
  return io::read_features_jsonl(in);
}

void add_fid_commands(CLI::App& app, const Context& ctx) {
  auto* fid = app.add_subcommand("fid", "Frechet distance between feature sets and benchmark curation");
  fid->require_subcommand(1);

  {
    auto* cmd = fid->add_subcommand("compute", "FID between reference and generated features");
    struct Params {
      std::string ref, gen;
      bool per_category = false;
      bool biased = false;
    };
    auto p = std::make_shared<Params>();
    cmd->add_option("--ref", p->ref, "Reference features JSONL")->required()->check(CLI::ExistingFile);
    cmd->add_option("--gen", p->gen, "Generated features JSONL")->required()->check(CLI::ExistingFile);
    cmd->add_flag("--per-category", p->per_category, "Also report FID per category");
    cmd->add_flag("--biased", p->biased, "Divide covariances by N instead of N - 1");
    cmd->callback([&ctx, p] {
      const FidReport report = fid_report(read_features(p->ref), read_features(p->gen), p->per_category,
                                          p->biased ? CovarianceMode::kBiased : CovarianceMode::kUnbiased);
      if (ctx.globals().csv()) {
        std::ostringstream os;
        os << "category,fid,reference,generated\n";
        os << "overall," << io::format_double(report.overall) << ",,\n";
        for (const auto& [cat, v] : report.per_category) {
          const auto& c = report.counts.at(cat);
          os << io::csv_field(cat) << ',' << io::format_double(v) << ',' << c.reference << ',' << c.generated << '\n';
        }
        ctx.emit_csv(os.str());
      } else {
        ctx.emit_main(io::dump(io::fid_report_json(report)));
      }
    });
  }
  {
    auto* cmd = fid->add_subcommand("curate", "Select a per-category benchmark by aesthetic and alignment scores");
    struct Params {
      std::string candidates;
      std::size_t per_category = 100;
      double min_aesthetic = 0.0;
      double min_alignment = 0.0;
    };
    auto p = std::make_shared<Params>();
    cmd->add_option("--candidates", p->candidates, "Candidate features JSONL with scores")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--per-category", p->per_category, "Rows to keep per category")->capture_default_str();
    cmd->add_option("--min-aesthetic", p->min_aesthetic)->capture_default_str();
    cmd->add_option("--min-alignment", p->min_alignment)->capture_default_str();
    cmd->callback([&ctx, p] {
      const CurationResult result =
          curate_benchmark(read_features(p->candidates), p->per_category, p->min_aesthetic, p->min_alignment);
      if (ctx.globals().csv()) {
        std::ostringstream os;
        os << "id\n";
        for (const auto& id : result.selected) os << id << '\n';
        ctx.emit_csv(os.str());
      } else {
        ctx.emit_main(io::dump(io::curation_json(result)));
      }
    });
  }
}

// --- study ---------------------------------------------------------------

void add_study_commands(CLI::App& app, const Context& ctx, std::ostream& err) {
  auto* study = app.add_subcommand("study", "Pairwise preference studies");
  study->require_subcommand(1);

  {
    auto* cmd = study->add_subcommand("report", "Aggregate a vote log into a study report");
    struct Params {
      std::string votes;
      std::string study;
      std::string rejects_out;
      StudyRules rules;
    };
    auto p = std::make_shared<Params>();
    cmd->add_option("--votes", p->votes, "Vote log JSONL")->required()->check(CLI::ExistingFile);
    cmd->add_option("--study", p->study, "Study id (required when the log holds several)");
    cmd->add_option("--min-raters", p->rules.min_raters, "Unique raters needed per pair")->capture_default_str();
    cmd->add_option("--margin", p->rules.win_margin, "Vote margin needed for a win")->capture_default_str();
    cmd->add_option("--rejects-out", p->rejects_out, "Write rejected records as JSON");
    cmd->callback([&ctx, &err, p] {
      p->rules.validate();
      auto in = open_input(p->votes);
      const IngestResult ingested = ingest_vote_lines(in);
      if (!ingested.rejects.empty()) err << "warning: " << ingested.rejects.size() << " vote record(s) rejected\n";
      if (!p->rejects_out.empty()) Context::write_file(p->rejects_out, io::dump(io::rejects_json(ingested.rejects)));
      std::string id = p->study;
      if (id.empty()) {
        const auto ids = study_ids(ingested.votes);
        if (ids.size() > 1) throw std::invalid_argument("vote log holds several studies; pass --study");
        if (ids.size() == 1) id = ids.front();
      }
      const StudyReport report = study_report(ingested.votes, p->rules, id);
      if (ctx.globals().csv()) {
        std::ostringstream os;
        os << "pair,votes_A,votes_B,unique_raters,outcome\n";
        for (const auto& r : report.pairs) {
          os << io::csv_field(r.pair) << ',' << r.votes_a << ',' << r.votes_b << ',' << r.unique_raters << ',' << to_string(r.outcome)
             << '\n';
        }
        ctx.emit_csv(os.str());
      } else {
        ctx.emit_main(io::dump(io::study_report_json(report)));
      }
    });
  }
  {
    auto* cmd = study->add_subcommand("curate", "Select items per source from aggregated user ratings");
    struct Params {
      std::string ratings;
      std::vector<std::string> quotas;
      std::size_t min_raters = 0;
    };
    auto p = std::make_shared<Params>();
    cmd->add_option("--ratings", p->ratings, "CSV id,source,rating,rater_count")->required()->check(CLI::ExistingFile);
    cmd->add_option("--quota", p->quotas, "SOURCE=N, repeatable")->required();
    cmd->add_option("--min-raters", p->min_raters, "Minimum rater_count per item")->capture_default_str();
    cmd->callback([&ctx, p] {
      std::map<std::string, std::size_t> quotas;
      for (const auto& q : p->quotas) {
        const auto eq = q.rfind('=');
        if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--quota expects SOURCE=N, got '" + q + "'");
        std::size_t n = 0;
        try {
          std::size_t used = 0;
          const unsigned long long v = std::stoull(q.substr(eq + 1), &used);
          if (used != q.size() - eq - 1) throw std::invalid_argument("");
          n = static_cast<std::size_t>(v);
        } catch (const std::exception&) {
          throw std::invalid_argument("--quota expects SOURCE=N, got '" + q + "'");
        }
        quotas[q.substr(0, eq)] = n;
      }
      auto in = open_input(p->ratings);
      const auto items = io::read_rated_items_csv(in);
      ctx.emit_main(io::dump(io::rating_curation_json(curate_by_ratings(items, quotas, p->min_raters))));
    });
  }
  {
    auto* cmd = study->add_subcommand("serve", "Serve a study over HTTP");
    struct Params {
      std::string manifest;
      std::string votes;
      std::string host = "127.0.0.1";
      int port = 8080;
      std::string static_dir;
    };
    auto p = std::make_shared<Params>();
    cmd->add_option("--manifest", p->manifest, "Study manifest JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--votes", p->votes, "Vote log JSONL (appended)")->required();
    cmd->add_option("--host", p->host)->capture_default_str();
    cmd->add_option("--port", p->port)->capture_default_str()->check(CLI::Range(0, 65535));
    cmd->add_option("--static-dir", p->static_dir, "Directory served under /static/ (rater page)")
        ->check(CLI::ExistingDirectory);
    cmd->callback([&ctx, &err, p] {
      const std::uint64_t seed =
          ctx.globals().seed_given() ? ctx.globals().seed : (std::uint64_t{std::random_device{}()} << 32) ^ std::random_device{}();
      StudyService service(StudyManifest::load(p->manifest), p->votes, seed);
      httplib::Server server;
      mount_study_routes(server, service, p->static_dir);
      int port = p->port;
      if (port == 0) {
        port = server.bind_to_any_port(p->host);
        if (port < 0) throw std::runtime_error("cannot bind " + p->host);
      } else if (!server.bind_to_port(p->host, port)) {
        throw std::runtime_error("cannot bind " + p->host + ":" + std::to_string(port));
      }
      err << "serving study '" << service.manifest().study << "' on http://" << p->host << ':' << port << '\n';
      err.flush();
      if (!server.listen_after_bind()) throw std::runtime_error("server stopped unexpectedly");
    });
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"difflab: diffusion training-recipe laboratory", "difflab"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  g.seed_opt = app.add_option("--seed", g.seed, "Root seed for every randomized output")->capture_default_str();
  app.add_option("--out", g.out, "Write the main artifact to this file instead of stdout");
  auto* json_flag = app.add_flag("--json", g.json, "Emit JSON");
  g.csv_opt = app.add_option("--csv", g.csv_path, "Emit CSV, optionally to PATH")->expected(0, 1);
  json_flag->excludes(g.csv_opt);

  Context ctx(g, out);
  add_schedule_commands(app, ctx);
  add_toy_commands(app, ctx);
  add_bucket_commands(app, ctx);
  add_fid_commands(app, ctx);
  add_study_commands(app, ctx, err);
  for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
    sub->fallthrough();
    for (auto* leaf : sub->get_subcommands([](const CLI::App*) { return true; })) leaf->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"difflab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace difflab::cli

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "abcfit/abc_engine.hpp"
#include "abcfit/config.hpp"
#include "abcfit/curve_io.hpp"
#include "abcfit/metrics.hpp"
#include "abcfit/mlp.hpp"
#include "abcfit/serialization.hpp"

namespace abcfit {

namespace fs = std::filesystem;

inline double mean_square_level(const MobilityCurve& curve) {
  double mean = 0.0;
  for (double v : curve.values) mean += v;
  mean /= static_cast<double>(curve.values.size());
  return mean * mean;
}

// Accepted-trial counts per parameter over equal-width bins of `space`
// (equal width in log10 for log-scaled parameters).
struct PosteriorHistogram {
  SearchSpace space;
  std::size_t bins = 50;
  std::array<std::vector<std::size_t>, kNumParams> counts;
};

inline PosteriorHistogram posterior_histogram(std::span<const Trial> trials, const SearchSpace& space,
                                              std::size_t bins = 50) {
  if (bins < 1) throw InvalidInput("histogram needs at least one bin");
  space.validate();
  PosteriorHistogram h{space, bins, {}};
  for (auto& c : h.counts) c.assign(bins, 0);
  for (const auto& t : trials) {
    if (!t.accepted) continue;
    for (std::size_t p = 0; p < kNumParams; ++p) {
      const double x = std::clamp(t.theta[p], space[p].lo, space[p].hi);
      const double u = detail::unit_coordinate(x, space[p], space.log_scale[p]);
      const auto b = std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, u) * static_cast<double>(bins)));
      ++h.counts[p][b];
    }
  }
  return h;
}

inline std::string posterior_csv(const PosteriorHistogram& h) {
  std::string out = "parameter,bin,lo,hi,count\n";
  for (std::size_t p = 0; p < kNumParams; ++p) {
    for (std::size_t b = 0; b < h.bins; ++b) {
      const double n = static_cast<double>(h.bins);
      const double lo = detail::from_unit_coordinate(static_cast<double>(b) / n, h.space[p], h.space.log_scale[p]);
      const double hi = detail::from_unit_coordinate(static_cast<double>(b + 1) / n, h.space[p], h.space.log_scale[p]);
      out += std::string(kParamNames[p]) + ',' + std::to_string(b) + ',' + detail::format_decimal(lo) + ',' +
             detail::format_decimal(hi) + ',' + std::to_string(h.counts[p][b]) + '\n';
    }
  }
  return out;
}

inline void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw InvalidInput("cannot create output directory '" + dir.string() + "'");
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw InvalidInput("write failed for '" + path.string() + "'");
}

inline void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

// Trials plus curves per config.curve_output; sidecar curves go to curves/trial_NNNNNN.csv.
inline void write_trials(const fs::path& dir, const TrialStore& store, CurveOutput output) {
  std::ofstream out(dir / "trials.jsonl", std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + (dir / "trials.jsonl").string() + "'");
  write_trials_jsonl(out, store, output == CurveOutput::kInline);
  if (output != CurveOutput::kSidecar) return;
  ensure_directory(dir / "curves");
  for (const auto& t : store.trials()) {
    if (t.failed) continue;
    char name[32];
    std::snprintf(name, sizeof name, "trial_%06zu.csv", t.index);
    save_curve_csv((dir / "curves" / name).string(), t.curve);
  }
}

// Observed data interpolated onto the configured grid.
inline MobilityCurve prepare_observed(const MobilityCurve& data, const VoltageGrid& grid) {
  return data.grid == grid ? data : resample(data, grid);
}

inline Json fit_summary_json(const RunConfig& config, const MobilityCurve& observed, const FitResult& r) {
  std::size_t failed = 0;
  for (const auto& t : r.store.trials()) failed += t.failed;
  const double level = mean_square_level(observed);
  return Json{
      {"stage1", summary_json(r.stage1)},
      {"stage2", summary_json(r.stage2)},
      {"gb_estimate", named_params_json(r.gb_estimate)},
      {"gb_fitted", r.gb_fitted},
      {"metrics",
       Json{{"epsilon_threshold", config.abc.threshold(observed)},
            {"n_trials", r.store.size()},
            {"n_failed", failed},
            {"predicted_loss", r.predicted_loss},
            {"predicted_loss_relative", level > 0.0 ? Json(r.predicted_loss / level) : Json(nullptr)},
            {"stage2_space", space_json(r.stage2_space)}}},
      {"seeds",
       Json{{"master", config.seed},
            {"preliminary_stream", streams::kPreliminary},
            {"refined_stream", streams::kRefined},
            {"boosting", derive_seed(config.seed, streams::kBoosting)}}}};
}

inline FitResult fit_curve(const MobilityCurve& observed, const RunConfig& config) {
  return run_two_stage(observed, config.model.make(), config.fit_settings(), config.seed);
}

// Everything `fit` leaves in its run directory.
inline void write_fit_outputs(const fs::path& dir, const RunConfig& config, const MobilityCurve& observed,
                              const FitResult& r) {
  ensure_directory(dir);
  write_json(dir / "config-echo.json", run_config_json(config));
  write_trials(dir, r.store, config.curve_output);
  write_text(dir / "posterior.csv", posterior_csv(posterior_histogram(r.store.trials(), r.stage1_space)));
  write_json(dir / "summary.json", fit_summary_json(config, observed, r));
  save_curve_csv((dir / "predicted_curve.csv").string(), r.predicted_curve);
  save_curve_csv((dir / "observed_curve.csv").string(), observed);
  if (r.gb_fitted) write_json(dir / "gb_model.json", gb_json(r.gb));
}

inline const std::array<std::string, 3> kMethodNames{"inverse model", "shallow NN", "deep NN"};

struct RecoverExperiment {
  ParamVector theta_true;
  std::uint64_t fit_seed = 0;
  MobilityCurve observed;
  FitResult fit;
  std::array<ParamVector, 3> estimates;  // kMethodNames order
  std::array<ExperimentMetrics, 3> metrics;
  double seconds = 0.0;
};

// Network baselines trained on the fit's stored trials, plus optional fresh prior samples.
inline std::array<TrainedMlp, 2> train_baselines(const FitResult& fit, const RunConfig& config,
                                                 const ForwardModel& model, const VoltageGrid& grid,
                                                 std::uint64_t seed) {
  std::vector<Trial> trials(fit.store.trials().begin(), fit.store.trials().end());
  Rng extra(seed, 0x33);
  for (std::size_t i = 0; i < config.mlp.extra_samples; ++i) {
    Trial t;
    t.theta = sample_uniform(config.space, extra);
    try {
      t.curve = model(t.theta, grid);
    } catch (const ExternalModelError&) {
      continue;
    }
    trials.push_back(std::move(t));
  }
  const auto data = training_set(trials);
  return {mlp_train(data.curves, data.thetas, config.mlp.shallow.config(grid.size(), derive_seed(seed, 4)),
                    config.space),
          mlp_train(data.curves, data.thetas, config.mlp.deep.config(grid.size(), derive_seed(seed, 5)),
                    config.space)};
}

inline ExperimentMetrics score_estimate(const ForwardModel& model, const ParamVector& truth,
                                        const ParamVector& estimate, const VoltageGrid& grid) {
  return ExperimentMetrics{chi_squared(estimate, truth).raw, curve_mse_report(model, truth, estimate, grid)};
}

// One recovery experiment: theta* from the prior, simulated data, full fit,
// and both network baselines trained on the same trials.
inline RecoverExperiment run_recover_experiment(const RunConfig& config, std::size_t k) {
  const auto start = std::chrono::steady_clock::now();
  const auto model = config.model.make();
  const auto grid = config.grid.grid();
  RecoverExperiment e;
  Rng draw(config.seed, 1000 + k);
  e.theta_true = sample_uniform(config.space, draw);
  e.fit_seed = derive_seed(config.seed, k);
  e.observed = model(e.theta_true, grid);
  e.fit = run_two_stage(e.observed, model, config.fit_settings(), e.fit_seed);
  const auto nets = train_baselines(e.fit, config, model, grid, e.fit_seed);
  e.estimates = {e.fit.gb_estimate, mlp_forward(nets[0].net, e.observed.values),
                 mlp_forward(nets[1].net, e.observed.values)};
  for (std::size_t m = 0; m < 3; ++m) e.metrics[m] = score_estimate(model, e.theta_true, e.estimates[m], grid);
  e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return e;
}

inline ComparisonTable comparison_table(const std::vector<RecoverExperiment>& experiments) {
  std::vector<MethodResults> methods;
  for (std::size_t m = 0; m < 3; ++m) {
    MethodResults r{kMethodNames[m], {}};
    for (const auto& e : experiments) r.experiments.push_back(e.metrics[m]);
    methods.push_back(std::move(r));
  }
  return ComparisonTable(std::move(methods));
}

inline Json recover_experiment_json(const RecoverExperiment& e, std::size_t k) {
  Json methods = Json::object();
  for (std::size_t m = 0; m < 3; ++m)
    methods[kMethodNames[m]] = Json{{"estimate", named_params_json(e.estimates[m])},
                                    {"chi2", e.metrics[m].chi2},
                                    {"mse", e.metrics[m].mse}};
  return Json{{"experiment", k + 1},
              {"theta_true", named_params_json(e.theta_true)},
              {"fit_seed", e.fit_seed},
              {"mean_square_level", mean_square_level(e.observed)},
              {"stage1", summary_json(e.fit.stage1)},
              {"stage2", summary_json(e.fit.stage2)},
              {"methods", methods},
              {"seconds", e.seconds}};
}

// Per-experiment curves for the true and estimated parameters, one column per method.
inline std::string recover_curves_csv(const RecoverExperiment& e, const ForwardModel& model) {
  std::array<MobilityCurve, 3> curves;
  for (std::size_t m = 0; m < 3; ++m) curves[m] = model(e.estimates[m], e.observed.grid);
  std::string out = "vg,true,inverse_model,shallow_nn,deep_nn\n";
  for (std::size_t i = 0; i < e.observed.size(); ++i) {
    out += detail::format_decimal(e.observed.grid[i]) + ',' + detail::format_decimal(e.observed.values[i]);
    for (const auto& c : curves) out += ',' + detail::format_decimal(c.values[i]);
    out += '\n';
  }
  return out;
}

inline void write_recover_outputs(const fs::path& dir, const RunConfig& config,
                                  const std::vector<RecoverExperiment>& experiments) {
  ensure_directory(dir);
  write_json(dir / "config-echo.json", run_config_json(config));
  const auto table = comparison_table(experiments);
  write_text(dir / "comparison_table.csv", table.to_csv());
  write_text(dir / "comparison_table.txt", table.to_text());
  const auto model = config.model.make();
  Json all = Json::array();
  for (std::size_t k = 0; k < experiments.size(); ++k) {
    const auto& e = experiments[k];
    all.push_back(recover_experiment_json(e, k));
    const auto sub = dir / ("exp_" + std::to_string(k + 1));
    ensure_directory(sub);
    write_trials(sub, e.fit.store, config.curve_output);
    write_text(sub / "curves.csv", recover_curves_csv(e, model));
  }
  write_json(dir / "experiments.json", all);
}

}  // namespace abcfit

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "abcfit/abcfit.hpp"

namespace fs = std::filesystem;
using namespace abcfit;

namespace {

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  for (const auto& cell : detail::split_csv_line(text)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (cell.empty() || used != cell.size() || !std::isfinite(v))
      throw InvalidInput(std::string(what) + ": '" + cell + "' is not a number");
    out.push_back(v);
  }
  return out;
}

ParamVector parse_params(const std::string& text) {
  const auto v = parse_list(text, "params");
  if (v.size() != kNumParams)
    throw InvalidInput("params needs 5 comma-separated values (mu0,t0,d0,nt,et), got " + std::to_string(v.size()));
  ParamVector theta;
  for (std::size_t i = 0; i < kNumParams; ++i) theta[i] = v[i];
  return theta;
}

GridSpec parse_grid(const std::string& text) {
  const auto v = parse_list(text, "grid");
  if (v.size() != 3 || v[2] < 2 || v[2] != std::floor(v[2]))
    throw InvalidInput("grid must be lo,hi,n with an integer n >= 2");
  GridSpec g{v[0], v[1], static_cast<std::size_t>(v[2])};
  g.grid();
  return g;
}

RunConfig load_or_default(const std::string& path) {
  RunConfig c = path.empty() ? RunConfig{} : load_run_config(path);
  c.validate();
  return c;
}

fs::path output_dir(const std::string& flag, const RunConfig& config) {
  if (!flag.empty()) return flag;
  if (!config.output_dir.empty()) return config.output_dir;
  throw InvalidInput("no output directory: pass --out or set output_dir in the config");
}

int cmd_simulate(const std::string& params, const std::string& grid, const std::string& model,
                 const std::string& out) {
  const auto theta = parse_params(params);
  const auto curve = ModelSpec::parse(model).make()(theta, parse_grid(grid).grid());
  if (out == "-") {
    write_curve_csv(std::cout, curve);
  } else {
    save_curve_csv(out, curve);
  }
  return 0;
}

int cmd_fit(const std::string& data, const std::string& config_path, const std::string& out,
            const std::optional<std::uint64_t>& seed) {
  auto config = load_or_default(config_path);
  if (seed) config.seed = *seed;
  const auto dir = output_dir(out, config);
  ensure_directory(dir);
  const auto observed = prepare_observed(load_curve_csv(data), config.grid.grid());
  const auto result = fit_curve(observed, config);
  write_fit_outputs(dir, config, observed, result);
  std::printf("gb_estimate mu0=%.6g t0=%.6g d0=%.6g nt=%.6g et=%.6g loss=%.6g\n", result.gb_estimate[0],
              result.gb_estimate[1], result.gb_estimate[2], result.gb_estimate[3], result.gb_estimate[4],
              result.predicted_loss);
  return 0;
}

int cmd_evaluate(const std::string& truth, const std::string& pred, const std::string& model,
                 const std::string& grid, const std::string& out) {
  const auto t = parse_params(truth);
  const auto p = parse_params(pred);
  const auto chi = chi_squared(p, t);
  const double mse = curve_mse_report(ModelSpec::parse(model).make(), t, p, parse_grid(grid).grid());
  const std::string csv = "metric,value\nchi2," + detail::format_decimal(chi.raw) + "\nchi2_abs," +
                          detail::format_decimal(chi.abs_denominator) + "\nmse," + detail::format_decimal(mse) +
                          "\n";
  std::cout << csv;
  if (!out.empty()) write_text(out, csv);
  return 0;
}

int cmd_recover(std::size_t n, const std::string& config_path, const std::string& out) {
  if (n < 1) throw InvalidInput("--n-experiments must be >= 1");
  const auto config = load_or_default(config_path);
  const auto dir = output_dir(out, config);
  ensure_directory(dir);
  std::vector<RecoverExperiment> experiments;
  for (std::size_t k = 0; k < n; ++k) {
    experiments.push_back(run_recover_experiment(config, k));
    const auto& e = experiments.back();
    std::fprintf(stderr, "experiment %zu/%zu: inverse-model mse %.4g (%.1fs)\n", k + 1, n, e.metrics[0].mse,
                 e.seconds);
  }
  write_recover_outputs(dir, config, experiments);
  std::cout << comparison_table(experiments).to_text();
  return 0;
}

// Curves for trials read without inline curves: sidecar files when present,
// otherwise re-simulated with the configured model.
void restore_curves(std::vector<Trial>& trials, const fs::path& trials_dir, const RunConfig& config) {
  const auto grid = config.grid.grid();
  std::optional<ForwardModel> model;
  for (auto& t : trials) {
    if (t.failed) continue;
    if (t.curve.values.size() == grid.size()) {
      t.curve.grid = grid;
      continue;
    }
    char name[32];
    std::snprintf(name, sizeof name, "trial_%06zu.csv", t.index);
    const auto sidecar = trials_dir / "curves" / name;
    if (fs::exists(sidecar)) {
      t.curve = prepare_observed(load_curve_csv(sidecar.string()), grid);
      continue;
    }
    if (!model) model = config.model.make();
    t.curve = (*model)(t.theta, grid);
  }
}

int cmd_baseline(const std::string& arch, const std::string& data, const std::string& config_path,
                 const std::string& out) {
  const fs::path trials_path(data);
  std::string cfg = config_path;
  const auto echo = trials_path.parent_path() / "config-echo.json";
  if (cfg.empty() && fs::exists(echo)) cfg = echo.string();
  const auto config = load_or_default(cfg);

  std::ifstream in(trials_path);
  if (!in) throw FormatError("cannot open trials file '" + data + "'");
  auto trials = read_trials_jsonl(in);
  restore_curves(trials, trials_path.parent_path(), config);
  const auto set = training_set(trials);
  const auto& preset = arch == "shallow" ? config.mlp.shallow : config.mlp.deep;
  const auto mlp_config = preset.config(config.grid.n, derive_seed(config.seed, arch == "shallow" ? 4 : 5));
  const auto trained = mlp_train(set.curves, set.thetas, mlp_config, config.space);
  write_json(out, mlp_json(trained.net, mlp_config));
  std::printf("trained %s net on %zu trials, final loss %.6g\n", arch.c_str(), set.thetas.size(),
              trained.epoch_loss.empty() ? trained.initial_loss : trained.epoch_loss.back());
  return 0;
}

// Diagnostics stay on one line.
std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Likelihood-free inverse modelling of mobility curves"};
  app.require_subcommand(1);

  std::string params, grid = "1,30,30", model = "reference", out, data, config, truth, pred, arch;
  std::size_t n_experiments = 5;
  std::optional<std::uint64_t> seed;

  auto* simulate = app.add_subcommand("simulate", "Write the forward-model curve for one parameter vector");
  simulate->add_option("--params", params, "mu0,t0,d0,nt,et")->required();
  simulate->add_option("--grid", grid, "lo,hi,n")->capture_default_str();
  simulate->add_option("--model", model, "reference or external:<command>")->capture_default_str();
  simulate->add_option("--out", out, "output CSV ('-' for stdout)")->required();

  auto* fit = app.add_subcommand("fit", "Two-stage search and boosted-tree estimate for an observed curve");
  fit->add_option("--data", data, "observed curve CSV (vg,mobility)")->required();
  fit->add_option("--config", config, "run configuration JSON");
  fit->add_option("--out", out, "run directory");
  fit->add_option("--seed", seed, "override the configured master seed");

  auto* evaluate = app.add_subcommand("evaluate", "Chi-squared and curve MSE between two parameter vectors");
  evaluate->add_option("--true", truth, "mu0,t0,d0,nt,et")->required();
  evaluate->add_option("--pred", pred, "mu0,t0,d0,nt,et")->required();
  evaluate->add_option("--model", model, "reference or external:<command>")->capture_default_str();
  evaluate->add_option("--grid", grid, "lo,hi,n")->capture_default_str();
  evaluate->add_option("--out", out, "also write the metrics CSV here");

  auto* recover = app.add_subcommand("recover", "Recovery experiments against network baselines");
  recover->add_option("--n-experiments", n_experiments)->capture_default_str();
  recover->add_option("--config", config, "run configuration JSON");
  recover->add_option("--out", out, "run directory");

  auto* baseline = app.add_subcommand("baseline", "Train a network baseline on stored trials");
  baseline->add_option("--arch", arch)->required()->check(CLI::IsMember({"shallow", "deep"}));
  baseline->add_option("--data", data, "trials.jsonl")->required();
  baseline->add_option("--config", config, "run configuration (default: config-echo.json next to the trials)");
  baseline->add_option("--out", out, "model JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "abcfit: %s\n", e.what());
    return static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (simulate->parsed()) return cmd_simulate(params, grid, model, out);
    if (fit->parsed()) return cmd_fit(data, config, out, seed);
    if (evaluate->parsed()) return cmd_evaluate(truth, pred, model, grid, out);
    if (recover->parsed()) return cmd_recover(n_experiments, config, out);
    if (baseline->parsed()) return cmd_baseline(arch, data, config, out);
  } catch (const Error& e) {
    std::fprintf(stderr, "abcfit: %s\n", one_line(e.what()).c_str());
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "abcfit: internal error: %s\n", one_line(e.what()).c_str());
    return static_cast<int>(ExitCode::kInternal);
  }
  return static_cast<int>(ExitCode::kInternal);
}

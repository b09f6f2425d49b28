// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "abcfit/abcfit.hpp"
#include "cart_oracle.hpp"

using namespace abcfit;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const char* name, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void recovery_and_ranking() {
  const auto config = load_run_config(ABCFIT_RECOVER_CONFIG);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<RecoverExperiment> experiments;
  int recovered = 0;
  std::string per;
  for (std::size_t k = 0; k < 5; ++k) {
    experiments.push_back(run_recover_experiment(config, k));
    const auto& e = experiments.back();
    const double bound = 1e-2 * mean_square_level(e.observed);
    recovered += e.metrics[0].mse <= bound;
    per += fmt(" %.3g/%.3g", e.metrics[0].mse, bound);
  }
  const double elapsed = seconds_since(t0);
  report("recovery", recovered >= 4 && elapsed <= 300.0,
         fmt("%d/5 within 1e-2*(mean mu)^2 [mse/bound:%s], %.1fs (n_prelim=%zu n_refined=%zu seed=%llu)", recovered,
             per.c_str(), elapsed, config.abc.n_prelim, config.abc.n_refined,
             static_cast<unsigned long long>(config.seed)));

  const auto table = comparison_table(experiments);
  const double gb = table.mse_summary(0).mean, shallow = table.mse_summary(1).mean, deep = table.mse_summary(2).mean;
  report("ranking", gb <= shallow && gb <= deep,
         fmt("mean curve MSE inverse model %.4g, shallow NN %.4g, deep NN %.4g", gb, shallow, deep));
}

void stage_refinement() {
  AbcConfig abc;
  abc.n_prelim = 400;
  abc.n_refined = 400;
  const TpeConfig tpe;
  const auto grid = VoltageGrid::default_grid();
  std::vector<double> s1, s2;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng draw(seed, 77);
    const auto observed = simulate_reference(sample_uniform(default_space(), draw), grid);
    TrialStore store(seed);
    Rng rng1(seed, streams::kPreliminary), rng2(seed, streams::kRefined);
    run_stage(observed, default_space(), reference_model(), abc, tpe, Stage::kPreliminary, abc.n_prelim, rng1, store);
    const auto first = summarize(store.segment(Stage::kPreliminary), abc);
    run_stage(observed, refined_space(first, default_space()), reference_model(), abc, tpe, Stage::kRefined,
              abc.n_refined, rng2, store);
    s1.push_back(first.epsilon_best);
    s2.push_back(summarize(store.segment(Stage::kRefined), abc).epsilon_best);
  }
  const double m1 = median(s1), m2 = median(s2);
  report("stage-2 refinement", m2 <= m1,
         fmt("median best epsilon stage 1 %.4g, stage 2 %.4g over 20 seeds (%.1fs)", m1, m2, seconds_since(t0)));
}

void tpe_vs_uniform() {
  const auto grid = VoltageGrid::default_grid();
  const auto observed = simulate_reference(ParamVector{10, 300, 1e12, 1e10, -10}, grid);
  const TpeConfig tpe;
  int wins = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    double best[2];
    for (int s = 0; s < 2; ++s) {
      AbcConfig abc;
      abc.sampler = s == 0 ? SamplerKind::kTpe : SamplerKind::kUniform;
      TrialStore store(seed);
      Rng rng(seed, streams::kPreliminary);
      run_stage(observed, default_space(), reference_model(), abc, tpe, Stage::kPreliminary, 200, rng, store);
      best[s] = summarize(store.trials(), abc).epsilon_best;
    }
    wins += best[0] < best[1];
  }
  const double elapsed = seconds_since(t0);
  report("tpe vs uniform", wins >= 15 && elapsed <= 120.0,
         fmt("TPE lower best epsilon in %d/20 seed pairs at 200 trials, theta*=(10,300,1e12,1e10,-10) (%.1fs)", wins,
             elapsed));
}

void gb_correctness() {
  Rng rng(2024);
  int mismatches = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 2 + rng.index(49), p = 1 + rng.index(5);
    GbConfig cfg;
    cfg.n_rounds = 1;
    cfg.learning_rate = 1.0;
    cfg.max_depth = 1 + rng.index(6);
    cfg.min_leaf = 1 + rng.index(4);
    std::vector<std::vector<double>> rows(n, std::vector<double>(p));
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (auto& v : rows[i]) v = rng.uniform(-5, 5);
      y[i] = rng.normal() * 2.0 + rows[i][0] * rows[i][p - 1];
    }
    const auto x = FeatureMatrix::from_rows(rows);
    const auto model = fit_booster(x, y, cfg);
    double base = 0.0;
    for (double v : y) base += v;
    base /= static_cast<double>(n);
    std::vector<double> resid(n);
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) {
      resid[i] = y[i] - base;
      all[i] = i;
    }
    const auto tree = oracle::grow(rows, resid, all, 0, cfg.max_depth, cfg.min_leaf);
    for (std::size_t i = 0; i < n; ++i) mismatches += model.predict(x.row(i)) != base + oracle::predict(*tree, rows[i]);
    for (int q = 0; q < 10; ++q) {
      std::vector<double> probe(p);
      for (auto& v : probe) v = rng.uniform(-6, 6);
      mismatches += model.predict(probe) != base + oracle::predict(*tree, probe);
    }
  }

  const auto grid = VoltageGrid::default_grid();
  Rng data(5);
  FeatureMatrix curves(200, grid.size());
  std::vector<ParamVector> thetas;
  for (std::size_t i = 0; i < 200; ++i) {
    thetas.push_back(sample_uniform(default_space(), data));
    const auto c = simulate_reference(thetas.back(), grid);
    std::copy(c.values.begin(), c.values.end(), curves.row(i).begin());
  }
  const auto ensemble = gb_fit(curves, thetas, GbConfig{}, default_space());
  int increases = 0;
  for (const auto& t : ensemble.targets)
    for (std::size_t k = 1; k < t.train_loss.size(); ++k) increases += t.train_loss[k] > t.train_loss[k - 1];
  report("gb correctness", mismatches == 0 && increases == 0,
         fmt("%d prediction mismatches vs brute-force CART over 200 instances; %d loss increases over 5x%zu rounds",
             mismatches, increases, GbConfig{}.n_rounds));
}

void mlp_gradients() {
  Rng rng(31);
  double worst = 0.0;
  for (auto act : {Activation::kRelu, Activation::kTanh}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      MlpConfig cfg;
      cfg.layer_widths = {5, 8, 8, 3};
      cfg.activation = act;
      cfg.seed = seed;
      std::vector<double> x(5), y(3);
      for (auto& v : x) v = rng.normal();
      for (auto& v : y) v = rng.normal();
      worst = std::max(worst, gradient_check(make_mlp(cfg), x, y));
    }
  }
  report("mlp gradient check", worst <= 1e-4, fmt("max relative error %.3g on 3-layer nets", worst));
}

void metric_exactness() {
  const double chi = chi_squared(ParamVector{2, 300, 1e12, 1e10, -3}, ParamVector{1, 300, 1e12, 1e10, -3}).raw;
  const VoltageGrid g({1, 2, 3});
  const double l = loss(MobilityCurve{g, {1, 2, 3}}, MobilityCurve{g, {1, 2, 5}});
  const double self = chi_squared(ParamVector{3, 250, 5e13, 2e11, -7}, ParamVector{3, 250, 5e13, 2e11, -7}).raw;
  const bool ok = std::abs(chi - 1.0) <= 1e-12 && std::abs(l - 4.0 / 3.0) <= 1e-12 && self == 0.0;
  report("metric exactness", ok, fmt("chi2 %.17g (expect 1), loss %.17g (expect 4/3), chi2(x,x) %g", chi, l, self));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void determinism() {
  const auto dir = fs::temp_directory_path() / ("abcfit_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_curve_csv((dir / "obs.csv").string(),
                 simulate_reference(ParamVector{15, 280, 3e13, 4e11, -6}, VoltageGrid::default_grid()));
  std::ofstream(dir / "run.json") << R"({"seed": 11, "abc": {"n_prelim": 200, "n_refined": 200}})";
  int status[2];
  for (int i = 0; i < 2; ++i) {
    const std::string cmd = std::string("\"") + ABCFIT_CLI_PATH + "\" fit --data \"" + (dir / "obs.csv").string() +
                            "\" --config \"" + (dir / "run.json").string() + "\" --out \"" +
                            (dir / ("run" + std::to_string(i))).string() + "\" >/dev/null";
    const int s = std::system(cmd.c_str());
    status[i] = WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  }
  const auto a = slurp(dir / "run0" / "trials.jsonl"), b = slurp(dir / "run1" / "trials.jsonl");
  report("determinism", status[0] == 0 && status[1] == 0 && !a.empty() && a == b,
         fmt("exit codes %d/%d, trials.jsonl %zu bytes, identical=%s", status[0], status[1], a.size(),
             a == b ? "yes" : "no"));
  fs::remove_all(dir);
}

double trapezoid(const std::function<double(double)>& f, std::size_t n) {
  const double h = 1.0 / static_cast<double>(n);
  double acc = 0.5 * (f(0.0) + f(1.0));
  for (std::size_t i = 1; i < n; ++i) acc += f(static_cast<double>(i) * h);
  return acc * h;
}

void parzen_normalization() {
  Rng rng(4242);
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t k = 1 + rng.index(10);
    std::vector<double> c(k), h(k);
    for (std::size_t i = 0; i < k; ++i) {
      c[i] = rng.uniform();
      h[i] = std::exp(rng.uniform(std::log(0.01), std::log(1.0)));
    }
    const ParzenMixture mix(c, h, draw % 2 ? 1.0 / static_cast<double>(k + 1) : 0.0);
    worst = std::max(worst, std::abs(trapezoid([&](double x) { return mix.density(x); }, 200000) - 1.0));
  }
  report("parzen normalization", worst <= 1e-6, fmt("max |integral - 1| = %.3g over 100 draws", worst));
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, void (*)()>> criteria{
      {"metric exactness", metric_exactness}, {"parzen normalization", parzen_normalization},
      {"mlp gradient check", mlp_gradients},  {"gb correctness", gb_correctness},
      {"determinism", determinism},           {"tpe vs uniform", tpe_vs_uniform},
      {"stage-2 refinement", stage_refinement}, {"recovery", recovery_and_ranking}};
  for (const auto& [name, run] : criteria) {
    try {
      run();
    } catch (const std::exception& e) {
      report(name, false, std::string("threw: ") + e.what());
    }
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

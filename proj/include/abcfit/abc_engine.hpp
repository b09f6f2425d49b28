#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "abcfit/error.hpp"
#include "abcfit/feature_matrix.hpp"
#include "abcfit/forward_model.hpp"
#include "abcfit/gbt.hpp"
#include "abcfit/param_space.hpp"
#include "abcfit/random.hpp"
#include "abcfit/tpe.hpp"
#include "abcfit/trial_store.hpp"

namespace abcfit {

enum class SamplerKind { kTpe, kUniform };
enum class SummaryStatistic { kMse };

struct AbcConfig {
  std::size_t n_prelim = 1000;
  std::size_t n_refined = 1000;
  double epsilon0 = 1.0;  // squared mobility units
  // When set, the threshold is epsilon0 * mean(observed)^2 instead.
  bool epsilon0_relative = false;
  SummaryStatistic summary = SummaryStatistic::kMse;
  std::size_t min_accept_for_sigma = 10;
  SamplerKind sampler = SamplerKind::kTpe;

  void validate() const {
    if (n_prelim < 1 || n_refined < 1) throw InvalidInput("abc trial counts must be >= 1");
    if (!(epsilon0 > 0.0)) throw InvalidInput("abc.epsilon0 must be positive");
    if (min_accept_for_sigma < 1) throw InvalidInput("abc.min_accept_for_sigma must be >= 1");
  }

  double threshold(const MobilityCurve& observed) const {
    if (!epsilon0_relative) return epsilon0;
    double mean = 0.0;
    for (double v : observed.values) mean += v;
    mean /= static_cast<double>(observed.values.size());
    return epsilon0 * mean * mean;
  }
};

inline constexpr int kMaxConsecutiveModelFailures = 3;

// Mean squared difference between two curves on the same grid.
inline double loss(const MobilityCurve& observed, const MobilityCurve& simulated) {
  if (observed.grid != simulated.grid || observed.size() != simulated.size() ||
      observed.size() != observed.grid.size())
    throw InvalidInput("loss: curves are defined on different grids");
  double acc = 0.0;
  for (std::size_t j = 0; j < observed.size(); ++j) {
    const double d = observed.values[j] - simulated.values[j];
    acc += d * d;
  }
  return acc / static_cast<double>(observed.size());
}

// Runs one search stage of `count` trials and appends every trial to `store`.
inline void run_stage(const MobilityCurve& observed, const SearchSpace& space,
                      const ForwardModel& model, const AbcConfig& config,
                      const TpeConfig& tpe_config, Stage stage, std::size_t count, Rng& rng,
                      TrialStore& store) {
  config.validate();
  space.validate();
  observed.validate();
  store.set_space(stage, space);
  const std::size_t first = store.size();
  const double epsilon0 = config.threshold(observed);
  int consecutive_failures = 0;

  for (std::size_t k = 0; k < count; ++k) {
    const auto history = store.trials().subspan(first);
    const ParamVector theta = config.sampler == SamplerKind::kTpe
                                  ? suggest(history, space, tpe_config, rng)
                                  : sample_uniform(space, rng);
    Trial trial;
    trial.stage = stage;
    trial.theta = theta;
    try {
      trial.curve = model(theta, observed.grid);
      trial.epsilon = loss(observed, trial.curve);
      trial.accepted = trial.epsilon < epsilon0;
      consecutive_failures = 0;
    } catch (const ExternalModelError& e) {
      if (++consecutive_failures >= kMaxConsecutiveModelFailures)
        throw ExternalModelError("forward model failed " +
                                     std::to_string(kMaxConsecutiveModelFailures) +
                                     " consecutive times in the " +
                                     std::string(stage_name(stage)) + " stage",
                                 e.what());
      trial.curve = MobilityCurve{observed.grid, {}};
      trial.epsilon = std::numeric_limits<double>::infinity();
      trial.accepted = false;
      trial.failed = true;
    }
    store.append(std::move(trial));
  }
}

// Posterior statistics over accepted trials, falling back to the
// min_accept_for_sigma lowest-epsilon trials when too few were accepted.
inline PosteriorSummary summarize(std::span<const Trial> segment, const AbcConfig& config) {
  std::vector<const Trial*> ok;
  for (const auto& t : segment)
    if (!t.failed) ok.push_back(&t);
  if (ok.empty()) throw InvalidInput("summarize: no successful trials in segment");

  PosteriorSummary s;
  const Trial* best = ok.front();
  for (const Trial* t : ok)
    if (t->epsilon < best->epsilon) best = t;
  s.best = best->theta;
  s.epsilon_best = best->epsilon;

  std::vector<const Trial*> pool;
  for (const Trial* t : ok)
    if (t->accepted) pool.push_back(t);
  s.n_accepted = pool.size();
  if (pool.size() < config.min_accept_for_sigma) {
    pool = ok;
    std::stable_sort(pool.begin(), pool.end(), [](const Trial* a, const Trial* b) {
      return a->epsilon < b->epsilon;
    });
    pool.resize(std::min(pool.size(), config.min_accept_for_sigma));
  }

  const auto n = static_cast<double>(pool.size());
  for (std::size_t p = 0; p < kNumParams; ++p) {
    double mean = 0.0;
    for (const Trial* t : pool) mean += t->theta[p];
    mean /= n;
    double var = 0.0;
    for (const Trial* t : pool) var += (t->theta[p] - mean) * (t->theta[p] - mean);
    s.mean[p] = mean;
    s.std[p] = std::sqrt(var / n);
  }
  return s;
}

// Curves and parameters of every successful trial, as a training set.
struct TrainingSet {
  FeatureMatrix curves;
  std::vector<ParamVector> thetas;
};

inline TrainingSet training_set(std::span<const Trial> trials) {
  std::size_t n = 0, width = 0;
  for (const auto& t : trials)
    if (!t.failed) {
      ++n;
      width = t.curve.size();
    }
  TrainingSet set{FeatureMatrix(n, width), {}};
  set.thetas.reserve(n);
  std::size_t r = 0;
  for (const auto& t : trials) {
    if (t.failed) continue;
    if (t.curve.size() != width) throw InvalidInput("training set: trials use different grids");
    std::copy(t.curve.values.begin(), t.curve.values.end(), set.curves.row(r++).begin());
    set.thetas.push_back(t.theta);
  }
  return set;
}

// Which stored trials train the boosted-tree inverse model.
enum class GbTrainingSet { kAll, kRefined };

struct FitSettings {
  SearchSpace space = default_space();
  AbcConfig abc;
  TpeConfig tpe;
  GbConfig gb;
  GbTrainingSet gb_training = GbTrainingSet::kAll;
};

struct FitResult {
  TrialStore store;
  SearchSpace stage1_space;
  SearchSpace stage2_space;
  PosteriorSummary stage1;
  PosteriorSummary stage2;
  GbEnsemble gb;
  bool gb_fitted = false;
  ParamVector gb_estimate;
  MobilityCurve predicted_curve;
  double predicted_loss = 0.0;  // loss(observed, predicted_curve)
};

// RNG streams derived from the master seed.
namespace streams {
inline constexpr std::uint64_t kPreliminary = 1;
inline constexpr std::uint64_t kRefined = 2;
inline constexpr std::uint64_t kBoosting = 3;
}  // namespace streams

// Preliminary search over settings.space, refined search around its best
// trial, then a boosted-tree inverse model trained on the stored trials.
inline FitResult run_two_stage(const MobilityCurve& observed, const ForwardModel& model,
                               const FitSettings& settings, std::uint64_t seed) {
  settings.abc.validate();
  settings.tpe.validate();
  settings.gb.validate();
  settings.space.validate();

  FitResult result;
  result.store = TrialStore(seed);
  result.stage1_space = settings.space;

  Rng rng1(seed, streams::kPreliminary);
  run_stage(observed, settings.space, model, settings.abc, settings.tpe, Stage::kPreliminary,
            settings.abc.n_prelim, rng1, result.store);
  result.stage1 = summarize(result.store.segment(Stage::kPreliminary), settings.abc);

  result.stage2_space = refined_space(result.stage1, settings.space);
  Rng rng2(seed, streams::kRefined);
  run_stage(observed, result.stage2_space, model, settings.abc, settings.tpe, Stage::kRefined,
            settings.abc.n_refined, rng2, result.store);
  result.stage2 = summarize(result.store.segment(Stage::kRefined), settings.abc);

  auto data = training_set(settings.gb_training == GbTrainingSet::kAll
                               ? result.store.trials()
                               : result.store.segment(Stage::kRefined));
  const std::size_t needed = gb_min_samples(settings.gb);
  if (data.thetas.size() < needed) data = training_set(result.store.trials());
  if (data.thetas.size() >= needed) {
    result.gb = gb_fit(data.curves, data.thetas, settings.gb, settings.space,
                       derive_seed(seed, streams::kBoosting));
    result.gb_fitted = true;
    result.gb_estimate = gb_predict(result.gb, observed.values);
  } else {
    // too few trials to train on: report the lowest-loss trial instead
    result.gb_estimate = result.stage2.epsilon_best < result.stage1.epsilon_best ? result.stage2.best
                                                                                 : result.stage1.best;
  }
  result.predicted_curve = model(result.gb_estimate, observed.grid);
  result.predicted_loss = loss(observed, result.predicted_curve);
  return result;
}

}  // namespace abcfit

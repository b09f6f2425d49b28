#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "abcfit/error.hpp"
#include "abcfit/param_space.hpp"
#include "abcfit/random.hpp"
#include "abcfit/trial_store.hpp"

namespace abcfit {

struct TpeConfig {
  double gamma = 0.25;             // fraction of trials modelled as "good"
  std::size_t n_candidates = 24;   // draws from the good density per suggestion
  std::size_t n_startup = 20;      // uniform draws before the model kicks in
  double bandwidth_floor = 1e-3;   // unit-cube coordinates

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidInput("tpe.gamma must lie in (0, 1)");
    if (n_candidates < 1) throw InvalidInput("tpe.n_candidates must be >= 1");
    if (n_startup < 2) throw InvalidInput("tpe.n_startup must be >= 2");
    if (!(bandwidth_floor > 0.0)) throw InvalidInput("tpe.bandwidth_floor must be positive");
  }
};

struct GoodBadSplit {
  std::vector<const Trial*> good;
  std::vector<const Trial*> bad;
};

// Ranks trials by epsilon (earlier index first on ties); the first
// max(1, ceil(gamma n)) form the good set.
inline GoodBadSplit split_good_bad(std::vector<const Trial*> order, double gamma) {
  if (order.empty()) throw InvalidInput("split_good_bad: no trials");
  std::stable_sort(order.begin(), order.end(), [](const Trial* a, const Trial* b) {
    if (a->epsilon != b->epsilon) return a->epsilon < b->epsilon;
    return a->index < b->index;
  });
  const auto n = order.size();
  const std::size_t n_good =
      std::min(n, std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(gamma * n))));
  GoodBadSplit split;
  split.good.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_good));
  split.bad.assign(order.begin() + static_cast<std::ptrdiff_t>(n_good), order.end());
  return split;
}

inline GoodBadSplit split_good_bad(std::span<const Trial> trials, double gamma) {
  std::vector<const Trial*> order;
  order.reserve(trials.size());
  for (const auto& t : trials) order.push_back(&t);
  return split_good_bad(std::move(order), gamma);
}

// Weighted mixture of Gaussian kernels truncated to [0, 1], optionally mixed
// with a uniform component on [0, 1].
class ParzenMixture {
 public:
  ParzenMixture(std::vector<double> centers, std::vector<double> bandwidths,
                double uniform_weight = 0.0)
      : centers_(std::move(centers)), bandwidths_(std::move(bandwidths)) {
    if (centers_.size() != bandwidths_.size())
      throw InvalidInput("parzen: centers and bandwidths differ in length");
    if (centers_.empty() && uniform_weight <= 0.0) throw InvalidInput("parzen: no kernels");
    if (!(uniform_weight >= 0.0 && uniform_weight <= 1.0))
      throw InvalidInput("parzen: uniform weight outside [0, 1]");
    uniform_weight_ = centers_.empty() ? 1.0 : uniform_weight;
    kernel_weight_ = centers_.empty() ? 0.0 : (1.0 - uniform_weight_) / centers_.size();
    log_norm_.resize(centers_.size());
    for (std::size_t k = 0; k < centers_.size(); ++k) {
      const double h = bandwidths_[k];
      if (!(h > 0.0) || !std::isfinite(h)) throw InvalidInput("parzen: bandwidth must be positive");
      const double mass = normal_cdf((1.0 - centers_[k]) / h) - normal_cdf(-centers_[k] / h);
      // log of weight / (h sqrt(2 pi) mass)
      log_norm_[k] = std::log(kernel_weight_) - std::log(h) - 0.5 * std::log(2.0 * std::numbers::pi) -
                     std::log(mass);
    }
  }

  double log_density(double x) const {
    if (x < 0.0 || x > 1.0) return -std::numeric_limits<double>::infinity();
    double max_term = -std::numeric_limits<double>::infinity();
    thread_local std::vector<double> terms;
    terms.clear();
    if (uniform_weight_ > 0.0) terms.push_back(std::log(uniform_weight_));
    for (std::size_t k = 0; k < centers_.size(); ++k) {
      const double z = (x - centers_[k]) / bandwidths_[k];
      terms.push_back(log_norm_[k] - 0.5 * z * z);
    }
    for (double t : terms) max_term = std::max(max_term, t);
    if (!std::isfinite(max_term)) return max_term;
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - max_term);
    return max_term + std::log(sum);
  }

  double density(double x) const { return std::exp(log_density(x)); }

  double sample(Rng& rng) const {
    const double pick = rng.uniform();
    if (centers_.empty() || pick < uniform_weight_) return rng.uniform();
    const auto k = static_cast<std::size_t>(rng.index(centers_.size()));
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double x = centers_[k] + bandwidths_[k] * rng.normal();
      if (x >= 0.0 && x <= 1.0) return x;
    }
    return std::clamp(centers_[k], 0.0, 1.0);
  }

  static double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

 private:
  std::vector<double> centers_;
  std::vector<double> bandwidths_;
  std::vector<double> log_norm_;
  double uniform_weight_ = 0.0;
  double kernel_weight_ = 0.0;
};

// Equal-weight truncated-Gaussian mixture density on [0, 1].
inline double parzen_density(double x, std::span<const double> centers,
                             std::span<const double> bandwidths) {
  if (centers.empty()) throw InvalidInput("parzen_density: no centers");
  return ParzenMixture({centers.begin(), centers.end()}, {bandwidths.begin(), bandwidths.end()})
      .density(x);
}

// Bandwidth per center: distance to the nearest other center, never below the
// floor. A lone center gets half the unit interval.
inline std::vector<double> neighbor_bandwidths(std::span<const double> centers, double floor) {
  const std::size_t n = centers.size();
  std::vector<double> bw(n, 0.5);
  if (n < 2) return bw;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return centers[a] < centers[b]; });
  for (std::size_t r = 0; r < n; ++r) {
    double d = std::numeric_limits<double>::infinity();
    if (r > 0) d = std::min(d, centers[order[r]] - centers[order[r - 1]]);
    if (r + 1 < n) d = std::min(d, centers[order[r + 1]] - centers[order[r]]);
    bw[order[r]] = std::max(d, floor);
  }
  return bw;
}

// Proposes the next parameters for `space` given the evaluated history.
// Failed trials are ignored. History points outside `space` are clamped into it.
inline ParamVector suggest(std::span<const Trial> trials, const SearchSpace& space,
                           const TpeConfig& config, Rng& rng) {
  space.validate();
  config.validate();

  std::vector<const Trial*> usable;
  usable.reserve(trials.size());
  for (const auto& t : trials)
    if (!t.failed && std::isfinite(t.epsilon)) usable.push_back(&t);
  if (usable.size() < config.n_startup) return sample_uniform(space, rng);

  const auto split = split_good_bad(std::move(usable), config.gamma);
  std::vector<ParzenMixture> good_density, bad_density;
  good_density.reserve(kNumParams);
  bad_density.reserve(kNumParams);
  std::vector<UnitPoint> good_pts, bad_pts;
  for (const Trial* t : split.good) good_pts.push_back(to_unit(space.clamp(t->theta), space));
  for (const Trial* t : split.bad) bad_pts.push_back(to_unit(space.clamp(t->theta), space));

  for (std::size_t d = 0; d < kNumParams; ++d) {
    std::vector<double> gc, bc;
    for (const auto& p : good_pts) gc.push_back(p[d]);
    for (const auto& p : bad_pts) bc.push_back(p[d]);
    auto gbw = neighbor_bandwidths(gc, config.bandwidth_floor);
    auto bbw = neighbor_bandwidths(bc, config.bandwidth_floor);
    const double background = 1.0 / static_cast<double>(bc.size() + 1);
    good_density.emplace_back(std::move(gc), std::move(gbw));
    bad_density.emplace_back(std::move(bc), std::move(bbw), background);
  }

  UnitPoint best{};
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < config.n_candidates; ++c) {
    UnitPoint cand{};
    for (std::size_t d = 0; d < kNumParams; ++d) cand[d] = good_density[d].sample(rng);
    double score = 0.0;
    for (std::size_t d = 0; d < kNumParams; ++d)
      score += good_density[d].log_density(cand[d]) - bad_density[d].log_density(cand[d]);
    if (c == 0 || score > best_score) {
      best_score = score;
      best = cand;
    }
  }
  return from_unit(best, space);
}

}  // namespace abcfit

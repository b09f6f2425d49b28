#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "abcfit/error.hpp"
#include "abcfit/forward_model.hpp"
#include "abcfit/random.hpp"

namespace abcfit {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

// Per-parameter closed bounds of a uniform prior. With log_scale set for a
// parameter, sampling and unit-cube transforms act on log10 of that parameter.
struct SearchSpace {
  std::array<Interval, kNumParams> bounds{};
  std::array<bool, kNumParams> log_scale{};

  const Interval& operator[](std::size_t i) const { return bounds[i]; }
  Interval& operator[](std::size_t i) { return bounds[i]; }

  void validate() const {
    for (std::size_t i = 0; i < kNumParams; ++i) {
      const auto& b = bounds[i];
      const std::string name(kParamNames[i]);
      if (!std::isfinite(b.lo) || !std::isfinite(b.hi))
        throw InvalidInput("search space bound for " + name + " is not finite");
      if (!(b.lo < b.hi))
        throw InvalidInput("search space for " + name + " requires lower < upper");
      if (log_scale[i] && !(b.lo > 0.0))
        throw InvalidInput("log-scaled parameter " + name + " needs a positive lower bound");
    }
  }

  bool contains(const ParamVector& theta) const {
    for (std::size_t i = 0; i < kNumParams; ++i)
      if (!bounds[i].contains(theta[i])) return false;
    return true;
  }

  bool contains(const SearchSpace& inner) const {
    for (std::size_t i = 0; i < kNumParams; ++i)
      if (inner[i].lo < bounds[i].lo || inner[i].hi > bounds[i].hi) return false;
    return true;
  }

  ParamVector clamp(const ParamVector& theta) const {
    ParamVector out = theta;
    for (std::size_t i = 0; i < kNumParams; ++i) out[i] = std::clamp(out[i], bounds[i].lo, bounds[i].hi);
    return out;
  }

  friend bool operator==(const SearchSpace&, const SearchSpace&) = default;
};

inline SearchSpace default_space() {
  SearchSpace s;
  s.bounds = {Interval{1.0, 50.0}, Interval{50.0, 600.0}, Interval{1e12, 2.28e14},
              Interval{1e10, 1e13}, Interval{-10.0, -3.0}};
  return s;
}

// Lowest-loss parameters plus posterior moments of one search stage.
struct PosteriorSummary {
  ParamVector best;
  ParamVector mean;
  std::array<double, kNumParams> std{};
  std::size_t n_accepted = 0;
  double epsilon_best = 0.0;
};

namespace detail {
inline double unit_coordinate(double x, const Interval& b, bool log_scale) {
  if (log_scale) return (std::log10(x) - std::log10(b.lo)) / (std::log10(b.hi) - std::log10(b.lo));
  return (x - b.lo) / (b.hi - b.lo);
}

inline double from_unit_coordinate(double u, const Interval& b, bool log_scale) {
  double x;
  if (log_scale) {
    const double l = std::log10(b.lo), h = std::log10(b.hi);
    x = std::pow(10.0, l + u * (h - l));
  } else {
    x = b.lo + u * (b.hi - b.lo);
  }
  return std::clamp(x, b.lo, b.hi);
}
}  // namespace detail

using UnitPoint = std::array<double, kNumParams>;

inline UnitPoint to_unit(const ParamVector& theta, const SearchSpace& space) {
  UnitPoint u{};
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (!space[i].contains(theta[i]))
      throw RangeError("to_unit: " + std::string(kParamNames[i]) + " = " + std::to_string(theta[i]) +
                       " lies outside its search interval");
    u[i] = std::clamp(detail::unit_coordinate(theta[i], space[i], space.log_scale[i]), 0.0, 1.0);
  }
  return u;
}

inline ParamVector from_unit(const UnitPoint& point, const SearchSpace& space) {
  ParamVector theta;
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (!(point[i] >= 0.0 && point[i] <= 1.0))
      throw RangeError("from_unit: coordinate " + std::to_string(i) + " outside [0, 1]");
    theta[i] = detail::from_unit_coordinate(point[i], space[i], space.log_scale[i]);
  }
  return theta;
}

inline ParamVector sample_uniform(const SearchSpace& space, Rng& rng) {
  UnitPoint u{};
  for (auto& x : u) x = rng.uniform();
  return from_unit(u, space);
}

// Refined prior around the best preliminary parameters: [best - std, best + std]
// per parameter, intersected with the original bounds. An empty or vanishing
// interval falls back to a window of 10% of the original width centred at best.
inline SearchSpace refined_space(const PosteriorSummary& summary, const SearchSpace& original) {
  SearchSpace out = original;
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const Interval& orig = original[i];
    const double best = summary.best[i];
    const double sd = summary.std[i];
    if (!std::isfinite(sd) || !std::isfinite(best))
      throw InvalidInput("refined_space: non-finite posterior summary");
    const double w = orig.width();

    Interval r{std::max(best - sd, orig.lo), std::min(best + sd, orig.hi)};
    if (!(r.hi > r.lo) || r.width() < 1e-9 * w) {
      r = Interval{std::max(best - 0.05 * w, orig.lo), std::min(best + 0.05 * w, orig.hi)};
    }
    // best itself sits outside the original bounds only when supplied externally
    if (!(r.hi > r.lo)) r = orig;
    out[i] = r;
  }
  return out;
}

}  // namespace abcfit

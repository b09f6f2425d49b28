#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abcfit/error.hpp"

namespace abcfit {

inline constexpr std::size_t kNumParams = 5;

inline constexpr std::array<std::string_view, kNumParams> kParamNames = {"mu0", "t0", "d0", "nt",
                                                                          "et"};

// The five model parameters, in fixed order:
//   mu0  band mobility, cm^2/(V s)
//   t0   characteristic temperature, K
//   d0   density scale, cm^-2
//   nt   trap density, cm^-2
//   et   trap-energy factor (dimensionless exponent)
struct ParamVector {
  std::array<double, kNumParams> values{};

  ParamVector() = default;
  ParamVector(double mu0, double t0, double d0, double nt, double et)
      : values{mu0, t0, d0, nt, et} {}

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  double mu0() const { return values[0]; }
  double t0() const { return values[1]; }
  double d0() const { return values[2]; }
  double nt() const { return values[3]; }
  double et() const { return values[4]; }

  bool finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

// Strictly increasing list of gate voltages (V).
class VoltageGrid {
 public:
  VoltageGrid() = default;

  explicit VoltageGrid(std::vector<double> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw InvalidInput("voltage grid needs at least 2 points");
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!std::isfinite(points_[i])) throw InvalidInput("voltage grid contains a non-finite point");
      if (i > 0 && !(points_[i] > points_[i - 1]))
        throw InvalidInput("voltage grid must be strictly increasing");
    }
  }

  // n points evenly spaced on [lo, hi], endpoints included.
  static VoltageGrid uniform(double lo, double hi, std::size_t n) {
    if (n < 2) throw InvalidInput("voltage grid needs at least 2 points");
    if (!(hi > lo)) throw InvalidInput("voltage grid requires hi > lo");
    std::vector<double> pts(n);
    for (std::size_t i = 0; i < n; ++i)
      pts[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    pts.back() = hi;
    return VoltageGrid(std::move(pts));
  }

  // 30 points on [1, 30] V.
  static VoltageGrid default_grid() { return uniform(1.0, 30.0, 30); }

  std::span<const double> points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  double operator[](std::size_t i) const { return points_[i]; }

  friend bool operator==(const VoltageGrid&, const VoltageGrid&) = default;

 private:
  std::vector<double> points_;
};

struct MobilityCurve {
  VoltageGrid grid;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }

  void validate() const {
    if (values.size() != grid.size())
      throw InvalidInput("mobility curve length does not match its grid");
    for (double v : values)
      if (!std::isfinite(v) || v < 0.0)
        throw InvalidInput("mobility values must be finite and non-negative");
  }
};

// A forward model maps (theta, grid) to a curve on exactly that grid.
using ForwardModel = std::function<MobilityCurve(const ParamVector&, const VoltageGrid&)>;

namespace reference {
inline constexpr double kOperatingTemperature = 300.0;  // K
inline constexpr double kCapacitance = 2.0e11;          // cm^-2 V^-1

inline double threshold_voltage(const ParamVector& theta) {
  return theta.nt() * std::exp(theta.et()) / kCapacitance;
}
}  // namespace reference

// Built-in analytic TFT-style model:
//   V_T = nt exp(et) / C'
//   u   = max(C' (V_g - V_T) / d0, 0)
//   mu  = mu0 (u / (1 + u))^(t0 / T_op)
// mu0 is a pure prefactor, and (nt, et) only enter through nt exp(et).
inline MobilityCurve simulate_reference(const ParamVector& theta, const VoltageGrid& grid) {
  if (grid.empty()) throw InvalidInput("simulate_reference: empty voltage grid");
  if (!theta.finite()) throw InvalidInput("simulate_reference: non-finite parameters");
  if (!(theta.d0() > 0.0)) throw InvalidInput("simulate_reference: d0 must be positive");

  const double vt = reference::threshold_voltage(theta);
  const double exponent = theta.t0() / reference::kOperatingTemperature;
  MobilityCurve curve{grid, std::vector<double>(grid.size())};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double u = std::max(reference::kCapacitance * (grid[i] - vt) / theta.d0(), 0.0);
    const double shape = std::pow(u / (1.0 + u), exponent);
    curve.values[i] = theta.mu0() * shape;
  }
  return curve;
}

inline ForwardModel reference_model() { return &simulate_reference; }

// Piecewise-linear resampling of a curve onto another grid. Every target point
// must lie within the source grid's span.
inline MobilityCurve resample(const MobilityCurve& curve, const VoltageGrid& target) {
  curve.validate();
  const auto src = curve.grid.points();
  if (target.empty()) throw InvalidInput("resample: empty target grid");
  if (target[0] < src.front() || target[target.size() - 1] > src.back())
    throw InvalidInput("resample: target grid extends beyond the observed voltage range [" +
                       std::to_string(src.front()) + ", " + std::to_string(src.back()) + "]");
  if (curve.grid == target) return curve;

  MobilityCurve out{target, std::vector<double>(target.size())};
  std::size_t j = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double x = target[i];
    while (j + 2 < src.size() && src[j + 1] < x) ++j;
    const double x0 = src[j], x1 = src[j + 1];
    const double y0 = curve.values[j], y1 = curve.values[j + 1];
    const double t = (x - x0) / (x1 - x0);
    out.values[i] = std::max(0.0, y0 + t * (y1 - y0));
  }
  return out;
}

}  // namespace abcfit

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "abcfit/abc_engine.hpp"
#include "abcfit/error.hpp"
#include "abcfit/forward_model.hpp"

namespace abcfit {

// sum (O - E)^2 / E over the five parameters in raw units, plus the variant
// with |E| in the denominator (E_t is negative, so `raw` can be negative).
struct ChiSquared {
  double raw = 0.0;
  double abs_denominator = 0.0;
};

inline ChiSquared chi_squared(const ParamVector& observed, const ParamVector& expected) {
  ChiSquared c;
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const double e = expected[i];
    if (e == 0.0)
      throw InvalidInput("chi_squared: expected " + std::string(kParamNames[i]) + " is zero");
    const double d = observed[i] - e;
    c.raw += d * d / e;
    c.abs_denominator += d * d / std::abs(e);
  }
  return c;
}

// Curve-space error between the true and predicted parameters.
inline double curve_mse_report(const ForwardModel& model, const ParamVector& theta_true,
                               const ParamVector& theta_pred, const VoltageGrid& grid) {
  return loss(model(theta_true, grid), model(theta_pred, grid));
}

struct ExperimentMetrics {
  double chi2 = 0.0;
  double mse = 0.0;
};

struct MethodResults {
  std::string method;
  std::vector<ExperimentMetrics> experiments;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(var / static_cast<double>(v.size()));
  return m;
}

// chi-squared and MSE per method and experiment, with mean and spread rows.
class ComparisonTable {
 public:
  explicit ComparisonTable(std::vector<MethodResults> methods) : methods_(std::move(methods)) {
    if (methods_.empty()) throw InvalidInput("comparison table needs at least one method");
    n_exp_ = methods_.front().experiments.size();
    if (n_exp_ == 0) throw InvalidInput("comparison table needs at least one experiment");
    for (const auto& m : methods_)
      if (m.experiments.size() != n_exp_)
        throw InvalidInput("comparison table: method '" + m.method +
                           "' has a different number of experiments");
  }

  std::size_t experiments() const { return n_exp_; }
  const std::vector<MethodResults>& methods() const { return methods_; }

  MeanStd chi2_summary(std::size_t method) const { return summary(method, &ExperimentMetrics::chi2); }
  MeanStd mse_summary(std::size_t method) const { return summary(method, &ExperimentMetrics::mse); }

  // Header "metric,experiment,method,value"; experiment is 1-based, then "mean" and "std".
  std::string to_csv() const {
    std::ostringstream os;
    os << "metric,experiment,method,value\n";
    for (const auto* metric : {"chi2", "mse"}) {
      const auto field = metric[0] == 'c' ? &ExperimentMetrics::chi2 : &ExperimentMetrics::mse;
      for (std::size_t e = 0; e < n_exp_; ++e)
        for (const auto& m : methods_)
          os << metric << ',' << e + 1 << ',' << m.method << ',' << fmt(m.experiments[e].*field) << '\n';
      for (std::size_t k = 0; k < methods_.size(); ++k) {
        const auto s = summary(k, field);
        os << metric << ",mean," << methods_[k].method << ',' << fmt(s.mean) << '\n';
        os << metric << ",std," << methods_[k].method << ',' << fmt(s.std) << '\n';
      }
    }
    return os.str();
  }

  std::string to_text() const {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Metrics"};
    for (const auto& m : methods_) header.push_back(m.method);
    rows.push_back(header);
    for (std::size_t e = 0; e < n_exp_; ++e) {
      for (const auto* metric : {"χ²", "MSE"}) {
        const auto field = metric[0] == 'M' ? &ExperimentMetrics::mse : &ExperimentMetrics::chi2;
        std::vector<std::string> row{std::string(metric) + " (Exp " + std::to_string(e + 1) + ")"};
        for (const auto& m : methods_) row.push_back(fmt_short(m.experiments[e].*field));
        rows.push_back(row);
      }
    }
    for (const auto* metric : {"χ²", "MSE"}) {
      const auto field = metric[0] == 'M' ? &ExperimentMetrics::mse : &ExperimentMetrics::chi2;
      std::vector<std::string> row{std::string(metric) + " mean (± S.D.)"};
      for (std::size_t k = 0; k < methods_.size(); ++k) {
        const auto s = summary(k, field);
        row.push_back(fmt_short(s.mean) + " (± " + fmt_short(s.std) + ")");
      }
      rows.push_back(row);
    }

    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& r : rows)
      for (std::size_t c = 0; c < r.size(); ++c) widths[c] = std::max(widths[c], display_width(r[c]));
    std::ostringstream os;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < rows[i].size(); ++c) {
        if (c) os << "  ";
        os << rows[i][c] << std::string(widths[c] - display_width(rows[i][c]), ' ');
      }
      os << '\n';
      if (i == 0) {
        std::size_t total = 0;
        for (auto w : widths) total += w + 2;
        os << std::string(total - 2, '-') << '\n';
      }
    }
    return os.str();
  }

 private:
  MeanStd summary(std::size_t method, double ExperimentMetrics::*field) const {
    std::vector<double> v;
    for (const auto& e : methods_.at(method).experiments) v.push_back(e.*field);
    return mean_std(v);
  }

  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
  }
  static std::string fmt_short(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
  }
  // Code points, for alignment of UTF-8 labels.
  static std::size_t display_width(const std::string& s) {
    std::size_t n = 0;
    for (unsigned char ch : s)
      if ((ch & 0xC0) != 0x80) ++n;
    return n;
  }

  std::vector<MethodResults> methods_;
  std::size_t n_exp_ = 0;
};

}  // namespace abcfit

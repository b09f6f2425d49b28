#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abcfit/error.hpp"
#include "abcfit/feature_matrix.hpp"
#include "abcfit/forward_model.hpp"
#include "abcfit/param_space.hpp"
#include "abcfit/random.hpp"

namespace abcfit {

struct GbConfig {
  std::size_t n_rounds = 300;
  double learning_rate = 0.05;
  std::size_t max_depth = 4;
  std::size_t min_leaf = 5;
  double subsample = 1.0;

  void validate() const {
    if (n_rounds < 1) throw InvalidInput("gb.n_rounds must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0))
      throw InvalidInput("gb.learning_rate must lie in (0, 1]");
    if (max_depth < 1) throw InvalidInput("gb.max_depth must be >= 1");
    if (min_leaf < 1) throw InvalidInput("gb.min_leaf must be >= 1");
    if (!(subsample > 0.0 && subsample <= 1.0)) throw InvalidInput("gb.subsample must lie in (0, 1]");
  }
};

// Internal nodes have feature >= 0 and send x[feature] <= threshold left.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw InvalidInput("regression tree without nodes");
  }

  double predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf())
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes_[i].feature)] <=
                                           nodes_[i].threshold
                                       ? nodes_[i].left
                                       : nodes_[i].right);
    return nodes_[i].value;
  }

  std::size_t depth() const { return depth_from(0); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

 private:
  std::size_t depth_from(std::size_t i) const {
    const auto& n = nodes_[i];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth_from(static_cast<std::size_t>(n.left)),
                        depth_from(static_cast<std::size_t>(n.right)));
  }

  std::vector<TreeNode> nodes_;
};

namespace detail {

using SampleIndex = std::uint32_t;
using SortedColumns = std::vector<std::vector<SampleIndex>>;

// Per-feature sample order by (value, index).
inline SortedColumns presort_columns(const FeatureMatrix& x) {
  SortedColumns cols(x.cols());
  for (std::size_t f = 0; f < x.cols(); ++f) {
    auto& order = cols[f];
    order.resize(x.rows());
    std::iota(order.begin(), order.end(), SampleIndex{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](SampleIndex a, SampleIndex b) { return x(a, f) < x(b, f); });
  }
  return cols;
}

// Greedy CART on squared error. A split needs gain above 1e-12 times the
// node's sum of squared residuals; that bound sits well above rounding noise.
class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, std::span<const double> residuals, const GbConfig& config)
      : x_(x), r_(residuals), config_(config) {}

  RegressionTree build(std::vector<SampleIndex> members, SortedColumns cols) {
    nodes_.clear();
    grow(std::move(members), std::move(cols), 0);
    return RegressionTree(std::move(nodes_));
  }

 private:
  int grow(std::vector<SampleIndex> members, SortedColumns cols, std::size_t depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const std::size_t n = members.size();
    double sum = 0.0, sumsq = 0.0;
    for (auto i : members) {
      sum += r_[i];
      sumsq += r_[i] * r_[i];
    }
    nodes_[static_cast<std::size_t>(id)].value = sum / static_cast<double>(n);
    if (depth >= config_.max_depth || n < 2 * config_.min_leaf) return id;

    const double parent_term = sum * sum / static_cast<double>(n);
    // gains within `tie` of the best are ties, which keep the earlier (feature, threshold)
    const double tie = 1e-12 * sumsq;
    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    for (std::size_t f = 0; f < cols.size(); ++f) {
      const auto& order = cols[f];
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left_sum += r_[order[k]];
        const std::size_t nl = k + 1, nr = n - nl;
        if (nl < config_.min_leaf) continue;
        if (nr < config_.min_leaf) break;
        const double a = x_(order[k], f), b = x_(order[k + 1], f);
        if (!(a < b)) continue;
        const double right_sum = sum - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(nr) - parent_term;
        if (gain > best_gain + tie) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = midpoint(a, b);
        }
      }
    }
    if (best_feature < 0) return id;

    const auto bf = static_cast<std::size_t>(best_feature);
    auto goes_left = [&](SampleIndex i) { return x_(i, bf) <= best_threshold; };
    std::vector<SampleIndex> lm, rm;
    for (auto i : members) (goes_left(i) ? lm : rm).push_back(i);
    SortedColumns lc(cols.size()), rc(cols.size());
    for (std::size_t f = 0; f < cols.size(); ++f) {
      lc[f].reserve(lm.size());
      rc[f].reserve(rm.size());
      for (auto i : cols[f]) (goes_left(i) ? lc[f] : rc[f]).push_back(i);
    }
    cols.clear();
    members.clear();
    const int left = grow(std::move(lm), std::move(lc), depth + 1);
    const int right = grow(std::move(rm), std::move(rc), depth + 1);
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = left;
    node.right = right;
    return id;
  }

  // Midpoint that stays strictly below b so that b routes right.
  static double midpoint(double a, double b) {
    const double m = a + 0.5 * (b - a);
    return m < b ? m : a;
  }

  const FeatureMatrix& x_;
  std::span<const double> r_;
  const GbConfig& config_;
  std::vector<TreeNode> nodes_;
};

// Restricts presorted columns to a sorted subset of samples.
inline SortedColumns restrict_columns(const SortedColumns& cols, std::span<const SampleIndex> subset,
                                      std::size_t n_rows) {
  std::vector<char> in(n_rows, 0);
  for (auto i : subset) in[i] = 1;
  SortedColumns out(cols.size());
  for (std::size_t f = 0; f < cols.size(); ++f) {
    out[f].reserve(subset.size());
    for (auto i : cols[f])
      if (in[i]) out[f].push_back(i);
  }
  return out;
}

inline void check_training_input(const FeatureMatrix& x, std::size_t n_targets) {
  if (x.rows() == 0 || x.cols() == 0) throw InvalidInput("tree fitting needs at least one sample and feature");
  if (x.rows() != n_targets) throw InvalidInput("feature rows and targets differ in count");
  if (!x.all_finite()) throw InvalidInput("non-finite feature value");
}

}  // namespace detail

// Single regression tree on (features, residuals).
inline RegressionTree fit_tree(const FeatureMatrix& features, std::span<const double> residuals,
                               const GbConfig& config) {
  config.validate();
  detail::check_training_input(features, residuals.size());
  std::vector<detail::SampleIndex> members(features.rows());
  std::iota(members.begin(), members.end(), detail::SampleIndex{0});
  return detail::TreeBuilder(features, residuals, config)
      .build(std::move(members), detail::presort_columns(features));
}

// Squared-error gradient boosting for one scalar target.
struct BoostedRegressor {
  double base = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;
  std::vector<double> train_loss;  // training MSE after each round

  double predict(std::span<const double> x) const {
    double y = base;
    for (const auto& t : trees) y += learning_rate * t.predict(x);
    return y;
  }
};

inline BoostedRegressor fit_booster(const FeatureMatrix& x, std::span<const double> y,
                                    const GbConfig& config, std::uint64_t seed = 0) {
  config.validate();
  detail::check_training_input(x, y.size());
  for (double v : y)
    if (!std::isfinite(v)) throw InvalidInput("non-finite regression target");

  const std::size_t n = x.rows();
  BoostedRegressor model;
  model.learning_rate = config.learning_rate;
  model.base = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);

  const auto sorted = detail::presort_columns(x);
  std::vector<double> pred(n, model.base), residual(n);
  Rng rng(seed, 0x6b);
  const std::size_t m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.subsample * static_cast<double>(n))));
  std::vector<detail::SampleIndex> all(n);
  std::iota(all.begin(), all.end(), detail::SampleIndex{0});

  model.trees.reserve(config.n_rounds);
  model.train_loss.reserve(config.n_rounds);
  for (std::size_t round = 0; round < config.n_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - pred[i];
    detail::TreeBuilder builder(x, residual, config);
    RegressionTree tree;
    if (m >= n) {
      tree = builder.build(all, sorted);
    } else {
      // partial Fisher-Yates draw without replacement
      std::vector<detail::SampleIndex> perm = all;
      for (std::size_t k = 0; k < m; ++k) std::swap(perm[k], perm[k + rng.index(n - k)]);
      perm.resize(m);
      std::sort(perm.begin(), perm.end());
      auto cols = detail::restrict_columns(sorted, perm, n);
      tree = builder.build(std::move(perm), std::move(cols));
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] += config.learning_rate * tree.predict(x.row(i));
      const double e = y[i] - pred[i];
      loss += e * e;
    }
    model.train_loss.push_back(loss / static_cast<double>(n));
    model.trees.push_back(std::move(tree));
  }
  return model;
}

enum class TargetTransform { kIdentity, kLog10 };

inline TargetTransform default_transform(std::size_t param) {
  return (param == 2 || param == 3) ? TargetTransform::kLog10 : TargetTransform::kIdentity;
}

inline double forward_transform(TargetTransform t, double v) {
  if (t == TargetTransform::kLog10) {
    if (!(v > 0.0)) throw InvalidInput("log10 target transform needs positive values");
    return std::log10(v);
  }
  return v;
}

inline double inverse_transform(TargetTransform t, double v) {
  return t == TargetTransform::kLog10 ? std::pow(10.0, v) : v;
}

// One boosted ensemble per model parameter, mapping a mobility curve to theta.
struct GbEnsemble {
  GbConfig config;
  std::size_t feature_count = 0;
  std::array<TargetTransform, kNumParams> transforms{};
  std::array<BoostedRegressor, kNumParams> targets;
  SearchSpace clamp_space;
};

inline std::size_t gb_min_samples(const GbConfig& config) {
  return std::max<std::size_t>(2 * config.min_leaf, 10);
}

inline GbEnsemble gb_fit(const FeatureMatrix& curves, std::span<const ParamVector> thetas,
                         const GbConfig& config, const SearchSpace& clamp_space,
                         std::uint64_t seed = 0) {
  config.validate();
  clamp_space.validate();
  const std::size_t needed = gb_min_samples(config);
  if (curves.rows() < needed)
    throw InvalidInput("gb_fit needs at least " + std::to_string(needed) + " samples, got " +
                       std::to_string(curves.rows()));
  detail::check_training_input(curves, thetas.size());

  GbEnsemble model;
  model.config = config;
  model.feature_count = curves.cols();
  model.clamp_space = clamp_space;
  std::vector<double> target(thetas.size());
  for (std::size_t p = 0; p < kNumParams; ++p) {
    model.transforms[p] = default_transform(p);
    for (std::size_t i = 0; i < thetas.size(); ++i)
      target[i] = forward_transform(model.transforms[p], thetas[i][p]);
    model.targets[p] = fit_booster(curves, target, config, derive_seed(seed, p));
  }
  return model;
}

inline ParamVector gb_predict(const GbEnsemble& model, std::span<const double> curve) {
  if (curve.size() != model.feature_count)
    throw InvalidInput("gb_predict: curve has " + std::to_string(curve.size()) +
                       " points, model expects " + std::to_string(model.feature_count));
  ParamVector theta;
  for (std::size_t p = 0; p < kNumParams; ++p)
    theta[p] = inverse_transform(model.transforms[p], model.targets[p].predict(curve));
  return model.clamp_space.clamp(theta);
}

}  // namespace abcfit

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <vector>

namespace oracle {

// Brute-force CART used as an oracle: no presorting, every candidate split of
// every node is rescored from scratch.
struct Node {
  int feature = -1;
  double threshold = 0.0;
  double value = 0.0;
  std::unique_ptr<Node> left, right;
};

inline double sse(const std::vector<std::size_t>& idx, const std::vector<double>& r) {
  double m = 0.0;
  for (auto i : idx) m += r[i];
  m /= static_cast<double>(idx.size());
  double s = 0.0;
  for (auto i : idx) s += (r[i] - m) * (r[i] - m);
  return s;
}

inline std::unique_ptr<Node> grow(const std::vector<std::vector<double>>& x, const std::vector<double>& r,
                                  const std::vector<std::size_t>& idx, std::size_t depth,
                                  std::size_t max_depth, std::size_t min_leaf) {
  auto node = std::make_unique<Node>();
  double sum = 0.0, sumsq = 0.0;
  for (auto i : idx) {
    sum += r[i];
    sumsq += r[i] * r[i];
  }
  node->value = sum / static_cast<double>(idx.size());
  if (depth >= max_depth || idx.size() < 2 * min_leaf) return node;

  const double parent = sse(idx, r);
  const double tie = 1e-12 * sumsq;
  double best = 0.0;
  int best_f = -1;
  double best_t = 0.0;
  for (std::size_t f = 0; f < x[0].size(); ++f) {
    std::vector<double> vals;
    for (auto i : idx) vals.push_back(x[i][f]);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      const double t = vals[k] + 0.5 * (vals[k + 1] - vals[k]);
      std::vector<std::size_t> l, rr;
      for (auto i : idx) (x[i][f] <= t ? l : rr).push_back(i);
      if (l.size() < min_leaf || rr.size() < min_leaf) continue;
      const double gain = parent - sse(l, r) - sse(rr, r);
      if (gain > best + tie) {
        best = gain;
        best_f = static_cast<int>(f);
        best_t = t;
      }
    }
  }
  if (best_f < 0) return node;
  std::vector<std::size_t> l, rr;
  for (auto i : idx) (x[i][static_cast<std::size_t>(best_f)] <= best_t ? l : rr).push_back(i);
  node->feature = best_f;
  node->threshold = best_t;
  node->left = grow(x, r, l, depth + 1, max_depth, min_leaf);
  node->right = grow(x, r, rr, depth + 1, max_depth, min_leaf);
  return node;
}

inline double predict(const Node& n, const std::vector<double>& x) {
  if (n.feature < 0) return n.value;
  return predict(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? *n.left : *n.right, x);
}

}  // namespace oracle

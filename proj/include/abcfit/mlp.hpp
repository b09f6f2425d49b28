#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "abcfit/error.hpp"
#include "abcfit/feature_matrix.hpp"
#include "abcfit/forward_model.hpp"
#include "abcfit/gbt.hpp"
#include "abcfit/param_space.hpp"
#include "abcfit/random.hpp"

namespace abcfit {

enum class Activation { kRelu, kTanh };

struct MlpConfig {
  // Input width first, output width last; every adjacent pair is one dense layer.
  std::vector<std::size_t> layer_widths;
  Activation activation = Activation::kRelu;  // hidden layers only
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double step_size = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (layer_widths.size() < 2) throw InvalidInput("mlp needs at least input and output widths");
    for (auto w : layer_widths)
      if (w < 1) throw InvalidInput("mlp layer widths must be >= 1");
    if (epochs < 1) throw InvalidInput("mlp.epochs must be >= 1");
    if (batch_size < 1) throw InvalidInput("mlp.batch_size must be >= 1");
    if (!(step_size > 0.0)) throw InvalidInput("mlp.step_size must be positive");
  }

  // `dense_layers` weight layers of which all but the last are hidden.
  static MlpConfig preset(std::size_t inputs, std::size_t dense_layers, std::size_t hidden_width,
                          std::size_t epochs) {
    MlpConfig c;
    c.layer_widths.push_back(inputs);
    for (std::size_t i = 0; i + 1 < dense_layers; ++i) c.layer_widths.push_back(hidden_width);
    c.layer_widths.push_back(kNumParams);
    c.epochs = epochs;
    return c;
  }
  static MlpConfig shallow(std::size_t inputs) { return preset(inputs, 3, 64, 150); }
  static MlpConfig deep(std::size_t inputs) { return preset(inputs, 29, 64, 30); }
};

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in_width, std::size_t out_width)
      : in(in_width), out(out_width), weights(in_width * out_width), bias(out_width) {}
};

// Standardizes a column to zero mean and unit spread; spread 1 for constant columns.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const FeatureMatrix& m) {
    Standardizer s{std::vector<double>(m.cols()), std::vector<double>(m.cols(), 1.0)};
    const auto n = static_cast<double>(m.rows());
    for (std::size_t c = 0; c < m.cols(); ++c) {
      double mu = 0.0;
      for (std::size_t r = 0; r < m.rows(); ++r) mu += m(r, c);
      mu /= n;
      double var = 0.0;
      for (std::size_t r = 0; r < m.rows(); ++r) var += (m(r, c) - mu) * (m(r, c) - mu);
      const double sd = std::sqrt(var / n);
      s.mean[c] = mu;
      s.scale[c] = sd > 0.0 && std::isfinite(sd) ? sd : 1.0;
    }
    return s;
  }

  static Standardizer identity(std::size_t width) {
    return {std::vector<double>(width, 0.0), std::vector<double>(width, 1.0)};
  }
};

struct Mlp {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::kRelu;
  Standardizer features;
  Standardizer targets;  // in transformed target space
  std::vector<TargetTransform> transforms;
  SearchSpace clamp_space = default_space();

  std::size_t input_width() const { return layers.front().in; }
  std::size_t output_width() const { return layers.back().out; }

  void validate() const {
    if (layers.empty()) throw InvalidInput("mlp without layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.weights.size() != l.in * l.out || l.bias.size() != l.out)
        throw InvalidInput("mlp layer " + std::to_string(i) + " has inconsistent shapes");
      if (i > 0 && layers[i - 1].out != l.in)
        throw InvalidInput("mlp layers " + std::to_string(i - 1) + " and " + std::to_string(i) +
                           " are incompatible");
    }
    if (features.mean.size() != input_width() || features.scale.size() != input_width())
      throw InvalidInput("mlp feature normalization width mismatch");
    if (targets.mean.size() != output_width() || targets.scale.size() != output_width() ||
        transforms.size() != output_width())
      throw InvalidInput("mlp target normalization width mismatch");
    for (double s : features.scale)
      if (!(s > 0.0)) throw InvalidInput("mlp normalization scales must be positive");
    for (double s : targets.scale)
      if (!(s > 0.0)) throw InvalidInput("mlp normalization scales must be positive");
  }

  // Bare network: normalized input to normalized output.
  std::vector<double> forward_normalized(std::span<const double> x) const {
    std::vector<double> a(x.begin(), x.end()), z;
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const auto& l = layers[li];
      z.assign(l.out, 0.0);
      for (std::size_t o = 0; o < l.out; ++o) {
        const double* w = &l.weights[o * l.in];
        double acc = l.bias[o];
        for (std::size_t i = 0; i < l.in; ++i) acc += w[i] * a[i];
        z[o] = acc;
      }
      if (li + 1 < layers.size())
        for (double& v : z) v = activate(v);
      a.swap(z);
    }
    return a;
  }

  double activate(double v) const {
    return activation == Activation::kRelu ? std::max(v, 0.0) : std::tanh(v);
  }
  // Derivative expressed through the activation output.
  double activate_grad(double out) const {
    return activation == Activation::kRelu ? (out > 0.0 ? 1.0 : 0.0) : 1.0 - out * out;
  }
};

// Builds an untrained net with scaled-uniform initial weights and zero biases.
inline Mlp make_mlp(const MlpConfig& config) {
  config.validate();
  Mlp net;
  net.activation = config.activation;
  Rng rng(config.seed, 0x11);
  for (std::size_t i = 0; i + 1 < config.layer_widths.size(); ++i) {
    DenseLayer l(config.layer_widths[i], config.layer_widths[i + 1]);
    const bool hidden = i + 2 < config.layer_widths.size();
    const double gain = hidden && config.activation == Activation::kRelu ? 2.0 : 1.0;
    const double limit = std::sqrt(3.0 * gain / static_cast<double>(l.in));
    for (double& w : l.weights) w = rng.uniform(-limit, limit);
    net.layers.push_back(std::move(l));
  }
  net.features = Standardizer::identity(net.input_width());
  net.targets = Standardizer::identity(net.output_width());
  net.transforms.assign(net.output_width(), TargetTransform::kIdentity);
  return net;
}

struct MlpGradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;

  explicit MlpGradients(const Mlp& net) {
    for (const auto& l : net.layers) {
      weights.emplace_back(l.weights.size(), 0.0);
      bias.emplace_back(l.bias.size(), 0.0);
    }
  }
  void zero() {
    for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
  }
};

// Per-sample loss sum_k (yhat_k - y_k)^2 on normalized values. Gradients are
// multiplied by `scale` and accumulated into `grads`.
inline double accumulate_gradients(const Mlp& net, std::span<const double> x,
                                   std::span<const double> y, MlpGradients& grads,
                                   double scale = 1.0) {
  const std::size_t L = net.layers.size();
  thread_local std::vector<std::vector<double>> acts;
  acts.resize(L + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t li = 0; li < L; ++li) {
    const auto& l = net.layers[li];
    auto& out = acts[li + 1];
    out.assign(l.out, 0.0);
    const auto& in = acts[li];
    for (std::size_t o = 0; o < l.out; ++o) {
      const double* w = &l.weights[o * l.in];
      double acc = l.bias[o];
      for (std::size_t i = 0; i < l.in; ++i) acc += w[i] * in[i];
      out[o] = li + 1 < L ? net.activate(acc) : acc;
    }
  }

  double loss = 0.0;
  thread_local std::vector<double> delta, prev;
  const auto& yhat = acts[L];
  delta.assign(yhat.size(), 0.0);
  for (std::size_t k = 0; k < yhat.size(); ++k) {
    const double d = yhat[k] - y[k];
    loss += d * d;
    delta[k] = 2.0 * d;
  }
  for (std::size_t li = L; li-- > 0;) {
    const auto& l = net.layers[li];
    const auto& in = acts[li];
    auto& gw = grads.weights[li];
    auto& gb = grads.bias[li];
    for (std::size_t o = 0; o < l.out; ++o) {
      const double d = delta[o] * scale;
      if (d == 0.0) continue;
      gb[o] += d;
      double* g = &gw[o * l.in];
      for (std::size_t i = 0; i < l.in; ++i) g[i] += d * in[i];
    }
    if (li == 0) break;
    prev.assign(l.in, 0.0);
    for (std::size_t o = 0; o < l.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* w = &l.weights[o * l.in];
      for (std::size_t i = 0; i < l.in; ++i) prev[i] += w[i] * d;
    }
    for (std::size_t i = 0; i < l.in; ++i) prev[i] *= net.activate_grad(in[i]);
    delta.swap(prev);
  }
  return loss;
}

inline double sample_loss(const Mlp& net, std::span<const double> x, std::span<const double> y) {
  const auto yhat = net.forward_normalized(x);
  double loss = 0.0;
  for (std::size_t k = 0; k < yhat.size(); ++k) loss += (yhat[k] - y[k]) * (yhat[k] - y[k]);
  return loss;
}

// Largest relative disagreement between backpropagated and central-difference
// gradients over every weight and bias. Magnitudes below 1e-6 are compared
// absolutely.
inline double gradient_check(Mlp net, std::span<const double> x, std::span<const double> y,
                             double step = 1e-6) {
  MlpGradients grads(net);
  accumulate_gradients(net, x, y, grads);
  double worst = 0.0;
  auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + step;
    const double up = sample_loss(net, x, y);
    param = saved - step;
    const double down = sample_loss(net, x, y);
    param = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  };
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    auto& l = net.layers[li];
    for (std::size_t i = 0; i < l.weights.size(); ++i) check(l.weights[i], grads.weights[li][i]);
    for (std::size_t i = 0; i < l.bias.size(); ++i) check(l.bias[i], grads.bias[li][i]);
  }
  return worst;
}

struct TrainedMlp {
  Mlp net;
  double initial_loss = 0.0;        // normalized-target MSE before the first update
  std::vector<double> epoch_loss;   // normalized-target MSE after each epoch
};

namespace detail {
inline double dataset_mse(const Mlp& net, const FeatureMatrix& x, const FeatureMatrix& y) {
  double acc = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) acc += sample_loss(net, x.row(r), y.row(r));
  return acc / static_cast<double>(x.rows() * y.cols());
}
}  // namespace detail

// Adam on the mean squared error of standardized targets. `transforms` (one per
// target column, identity when empty) are applied before standardization.
inline TrainedMlp train_network(const FeatureMatrix& inputs, const FeatureMatrix& targets,
                                const MlpConfig& config,
                                std::vector<TargetTransform> transforms = {}) {
  config.validate();
  if (inputs.rows() != targets.rows()) throw InvalidInput("mlp: inputs and targets differ in rows");
  if (inputs.rows() < config.batch_size)
    throw InvalidInput("mlp: need at least batch_size (" + std::to_string(config.batch_size) +
                       ") samples, got " + std::to_string(inputs.rows()));
  if (inputs.cols() != config.layer_widths.front() || targets.cols() != config.layer_widths.back())
    throw InvalidInput("mlp: data widths do not match layer_widths");
  if (!inputs.all_finite() || !targets.all_finite()) throw InvalidInput("mlp: non-finite training data");
  if (transforms.empty()) transforms.assign(targets.cols(), TargetTransform::kIdentity);
  if (transforms.size() != targets.cols()) throw InvalidInput("mlp: one transform per target needed");

  TrainedMlp result{make_mlp(config), 0.0, {}};
  Mlp& net = result.net;
  net.transforms = transforms;

  FeatureMatrix ty(targets.rows(), targets.cols());
  for (std::size_t r = 0; r < targets.rows(); ++r)
    for (std::size_t c = 0; c < targets.cols(); ++c)
      ty(r, c) = forward_transform(transforms[c], targets(r, c));
  net.features = Standardizer::fit(inputs);
  net.targets = Standardizer::fit(ty);

  FeatureMatrix xn(inputs.rows(), inputs.cols()), yn(ty.rows(), ty.cols());
  for (std::size_t r = 0; r < inputs.rows(); ++r) {
    for (std::size_t c = 0; c < inputs.cols(); ++c)
      xn(r, c) = (inputs(r, c) - net.features.mean[c]) / net.features.scale[c];
    for (std::size_t c = 0; c < ty.cols(); ++c)
      yn(r, c) = (ty(r, c) - net.targets.mean[c]) / net.targets.scale[c];
  }

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  MlpGradients grads(net), m(net), v(net);
  m.zero();
  v.zero();
  std::uint64_t t = 0;
  Rng rng(config.seed, 0x22);
  std::vector<std::size_t> order(inputs.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});

  result.initial_loss = detail::dataset_mse(net, xn, yn);
  const double out_width = static_cast<double>(targets.cols());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / (static_cast<double>(stop - start) * out_width);
      grads.zero();
      for (std::size_t k = start; k < stop; ++k)
        accumulate_gradients(net, xn.row(order[k]), yn.row(order[k]), grads, scale);
      ++t;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
      auto update = [&](std::vector<double>& p, std::vector<double>& g, std::vector<double>& mm,
                        std::vector<double>& vv) {
        for (std::size_t i = 0; i < p.size(); ++i) {
          mm[i] = kBeta1 * mm[i] + (1.0 - kBeta1) * g[i];
          vv[i] = kBeta2 * vv[i] + (1.0 - kBeta2) * g[i] * g[i];
          p[i] -= config.step_size * (mm[i] / c1) / (std::sqrt(vv[i] / c2) + kEps);
        }
      };
      for (std::size_t li = 0; li < net.layers.size(); ++li) {
        update(net.layers[li].weights, grads.weights[li], m.weights[li], v.weights[li]);
        update(net.layers[li].bias, grads.bias[li], m.bias[li], v.bias[li]);
      }
    }
    const double epoch_loss = detail::dataset_mse(net, xn, yn);
    if (!std::isfinite(epoch_loss)) throw TrainingDiverged(static_cast<int>(epoch));
    result.epoch_loss.push_back(epoch_loss);
  }
  return result;
}

// Trains a curve-to-parameter network; d0 and nt are learnt in log10 units.
inline TrainedMlp mlp_train(const FeatureMatrix& curves, std::span<const ParamVector> thetas,
                            const MlpConfig& config, const SearchSpace& clamp_space) {
  clamp_space.validate();
  if (curves.rows() != thetas.size()) throw InvalidInput("mlp: curves and thetas differ in count");
  FeatureMatrix y(thetas.size(), kNumParams);
  for (std::size_t r = 0; r < thetas.size(); ++r)
    for (std::size_t p = 0; p < kNumParams; ++p) y(r, p) = thetas[r][p];
  std::vector<TargetTransform> transforms(kNumParams);
  for (std::size_t p = 0; p < kNumParams; ++p) transforms[p] = default_transform(p);
  auto trained = train_network(curves, y, config, std::move(transforms));
  trained.net.clamp_space = clamp_space;
  return trained;
}

inline ParamVector mlp_forward(const Mlp& net, std::span<const double> curve) {
  if (net.output_width() != kNumParams) throw InvalidInput("mlp_forward: net does not output 5 parameters");
  if (curve.size() != net.input_width())
    throw InvalidInput("mlp_forward: curve has " + std::to_string(curve.size()) +
                       " points, net expects " + std::to_string(net.input_width()));
  std::vector<double> x(curve.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = (curve[i] - net.features.mean[i]) / net.features.scale[i];
  const auto out = net.forward_normalized(x);
  ParamVector theta;
  for (std::size_t p = 0; p < kNumParams; ++p) {
    const double v = out[p] * net.targets.scale[p] + net.targets.mean[p];
    theta[p] = inverse_transform(net.transforms[p], v);
    if (!std::isfinite(theta[p])) theta[p] = net.clamp_space[p].hi;
  }
  return net.clamp_space.clamp(theta);
}

}  // namespace abcfit

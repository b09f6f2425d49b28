#pragma once

// JSON / JSONL encodings of trials, summaries and fitted models.

#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "abcfit/abc_engine.hpp"
#include "abcfit/error.hpp"
#include "abcfit/gbt.hpp"
#include "abcfit/mlp.hpp"
#include "abcfit/param_space.hpp"
#include "abcfit/trial_store.hpp"

namespace abcfit {

using Json = nlohmann::ordered_json;

inline constexpr int kModelFormatVersion = 1;

inline Json param_json(const ParamVector& theta) {
  return Json::array({theta[0], theta[1], theta[2], theta[3], theta[4]});
}

inline ParamVector param_from_json(const Json& j) {
  if (!j.is_array() || j.size() != kNumParams) throw FormatError("expected an array of 5 numbers");
  ParamVector theta;
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (!j[i].is_number()) throw FormatError("expected an array of 5 numbers");
    theta[i] = j[i].get<double>();
  }
  return theta;
}

inline Json named_params_json(const ParamVector& theta) {
  Json j = Json::object();
  for (std::size_t i = 0; i < kNumParams; ++i) j[std::string(kParamNames[i])] = theta[i];
  return j;
}

inline Json space_json(const SearchSpace& s) {
  Json j = Json::object();
  for (std::size_t i = 0; i < kNumParams; ++i)
    j[std::string(kParamNames[i])] = Json::array({s[i].lo, s[i].hi});
  Json logs = Json::array();
  for (std::size_t i = 0; i < kNumParams; ++i)
    if (s.log_scale[i]) logs.push_back(std::string(kParamNames[i]));
  j["log_scale"] = logs;
  return j;
}

inline SearchSpace space_from_json(const Json& j) {
  if (!j.is_object()) throw FormatError("search space must be an object");
  SearchSpace s = default_space();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "log_scale") {
      if (!it->is_array()) throw FormatError("log_scale must be a list of parameter names");
      s.log_scale = {};
      for (const auto& name : *it) {
        bool found = false;
        for (std::size_t i = 0; i < kNumParams; ++i)
          if (name.is_string() && name.get<std::string>() == kParamNames[i]) s.log_scale[i] = found = true;
        if (!found) throw InvalidInput("log_scale: unknown parameter " + name.dump());
      }
      continue;
    }
    std::size_t idx = kNumParams;
    for (std::size_t i = 0; i < kNumParams; ++i)
      if (it.key() == kParamNames[i]) idx = i;
    if (idx == kNumParams) throw InvalidInput("search space: unknown parameter '" + it.key() + "'");
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number())
      throw FormatError("search space bounds for " + it.key() + " must be [lower, upper]");
    s[idx] = Interval{(*it)[0].get<double>(), (*it)[1].get<double>()};
  }
  s.validate();
  return s;
}

inline Json summary_json(const PosteriorSummary& s) {
  Json j = Json::object();
  j["best"] = named_params_json(s.best);
  j["mean"] = named_params_json(s.mean);
  Json sd = Json::object();
  for (std::size_t i = 0; i < kNumParams; ++i) sd[std::string(kParamNames[i])] = s.std[i];
  j["std"] = sd;
  j["n_accepted"] = s.n_accepted;
  j["epsilon_best"] = s.epsilon_best;
  return j;
}

enum class CurveOutput { kNone, kInline, kSidecar };

// One trial per line: index, stage, theta, epsilon, accepted (plus "failed"
// for failed trials and "curve" when inlined).
inline std::string trial_jsonl(const Trial& t, bool inline_curve) {
  Json j = Json::object();
  j["index"] = t.index;
  j["stage"] = std::string(stage_name(t.stage));
  j["theta"] = param_json(t.theta);
  if (std::isfinite(t.epsilon))
    j["epsilon"] = t.epsilon;
  else
    j["epsilon"] = nullptr;
  j["accepted"] = t.accepted;
  if (t.failed) j["failed"] = true;
  if (inline_curve && !t.failed) j["curve"] = t.curve.values;
  return j.dump();
}

inline void write_trials_jsonl(std::ostream& out, const TrialStore& store, bool inline_curves) {
  for (const auto& t : store.trials()) out << trial_jsonl(t, inline_curves) << '\n';
}

// Reads trials back. Curves come back only when inlined; otherwise the curve
// is left empty and its grid unset.
inline std::vector<Trial> read_trials_jsonl(std::istream& in, const VoltageGrid* grid = nullptr) {
  std::vector<Trial> trials;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const Json j = Json::parse(line);
      Trial t;
      t.index = j.at("index").get<std::size_t>();
      t.stage = parse_stage(j.at("stage").get<std::string>());
      t.theta = param_from_json(j.at("theta"));
      t.epsilon = j.at("epsilon").is_null() ? std::numeric_limits<double>::infinity()
                                            : j.at("epsilon").get<double>();
      t.accepted = j.at("accepted").get<bool>();
      t.failed = j.value("failed", false);
      if (j.contains("curve")) {
        auto values = j["curve"].get<std::vector<double>>();
        if (grid && values.size() == grid->size()) t.curve = MobilityCurve{*grid, std::move(values)};
        else t.curve.values = std::move(values);
      }
      trials.push_back(std::move(t));
    } catch (const Json::exception& e) {
      throw FormatError(std::string("malformed trial record: ") + e.what(), lineno);
    } catch (const FormatError& e) {
      throw FormatError(e.what(), lineno);
    }
  }
  return trials;
}

inline std::string transform_name(TargetTransform t) {
  return t == TargetTransform::kLog10 ? "log10" : "identity";
}

inline TargetTransform transform_from_name(const std::string& s) {
  if (s == "log10") return TargetTransform::kLog10;
  if (s == "identity") return TargetTransform::kIdentity;
  throw FormatError("unknown target transform '" + s + "'");
}

inline Json gb_config_json(const GbConfig& c) {
  return Json{{"n_rounds", c.n_rounds},
              {"learning_rate", c.learning_rate},
              {"max_depth", c.max_depth},
              {"min_leaf", c.min_leaf},
              {"subsample", c.subsample}};
}

// Trees are stored as parallel arrays; leaves carry feature -1.
inline Json tree_json(const RegressionTree& tree) {
  Json feature = Json::array(), threshold = Json::array(), left = Json::array(),
       right = Json::array(), value = Json::array();
  for (const auto& n : tree.nodes()) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
  }
  return Json{{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
              {"value", value}};
}

inline RegressionTree tree_from_json(const Json& j, std::size_t feature_count) {
  const auto feature = j.at("feature").get<std::vector<int>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<int>>();
  const auto right = j.at("right").get<std::vector<int>>();
  const auto value = j.at("value").get<std::vector<double>>();
  const auto n = feature.size();
  if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n || n == 0)
    throw FormatError("tree arrays differ in length");
  std::vector<TreeNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i] = TreeNode{feature[i], threshold[i], left[i], right[i], value[i]};
    if (feature[i] >= 0) {
      if (static_cast<std::size_t>(feature[i]) >= feature_count)
        throw FormatError("tree feature index out of range");
      // children always follow their parent
      if (left[i] <= static_cast<int>(i) || right[i] <= static_cast<int>(i) ||
          static_cast<std::size_t>(left[i]) >= n || static_cast<std::size_t>(right[i]) >= n)
        throw FormatError("tree child index out of range");
    }
  }
  return RegressionTree(std::move(nodes));
}

inline Json gb_json(const GbEnsemble& model) {
  Json targets = Json::array();
  for (std::size_t p = 0; p < kNumParams; ++p) {
    const auto& t = model.targets[p];
    Json trees = Json::array();
    for (const auto& tree : t.trees) trees.push_back(tree_json(tree));
    targets.push_back(Json{{"parameter", std::string(kParamNames[p])},
                           {"transform", transform_name(model.transforms[p])},
                           {"base", t.base},
                           {"learning_rate", t.learning_rate},
                           {"train_loss", t.train_loss},
                           {"trees", trees}});
  }
  return Json{{"format", "abcfit-gb-ensemble"},
              {"version", kModelFormatVersion},
              {"config", gb_config_json(model.config)},
              {"feature_count", model.feature_count},
              {"clamp_space", space_json(model.clamp_space)},
              {"targets", targets}};
}

inline GbEnsemble gb_from_json(const Json& j) {
  try {
    if (j.at("format") != "abcfit-gb-ensemble") throw FormatError("not a boosted-tree model");
    if (j.at("version") != kModelFormatVersion) throw FormatError("unsupported model version");
    GbEnsemble m;
    const auto& c = j.at("config");
    m.config.n_rounds = c.at("n_rounds").get<std::size_t>();
    m.config.learning_rate = c.at("learning_rate").get<double>();
    m.config.max_depth = c.at("max_depth").get<std::size_t>();
    m.config.min_leaf = c.at("min_leaf").get<std::size_t>();
    m.config.subsample = c.at("subsample").get<double>();
    m.feature_count = j.at("feature_count").get<std::size_t>();
    m.clamp_space = space_from_json(j.at("clamp_space"));
    const auto& targets = j.at("targets");
    if (!targets.is_array() || targets.size() != kNumParams) throw FormatError("expected 5 targets");
    for (std::size_t p = 0; p < kNumParams; ++p) {
      const auto& t = targets[p];
      m.transforms[p] = transform_from_name(t.at("transform").get<std::string>());
      m.targets[p].base = t.at("base").get<double>();
      m.targets[p].learning_rate = t.at("learning_rate").get<double>();
      m.targets[p].train_loss = t.at("train_loss").get<std::vector<double>>();
      for (const auto& tree : t.at("trees")) m.targets[p].trees.push_back(tree_from_json(tree, m.feature_count));
    }
    return m;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed boosted-tree model: ") + e.what());
  }
}

inline std::string activation_name(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

inline Activation activation_from_name(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw InvalidInput("unknown activation '" + s + "'");
}

inline Json mlp_json(const Mlp& net, const MlpConfig& config) {
  Json layers = Json::array();
  for (const auto& l : net.layers)
    layers.push_back(Json{{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"bias", l.bias}});
  Json transforms = Json::array();
  for (auto t : net.transforms) transforms.push_back(transform_name(t));
  return Json{{"format", "abcfit-mlp"},
              {"version", kModelFormatVersion},
              {"config",
               Json{{"layer_widths", config.layer_widths},
                    {"activation", activation_name(config.activation)},
                    {"epochs", config.epochs},
                    {"batch_size", config.batch_size},
                    {"step_size", config.step_size},
                    {"seed", config.seed}}},
              {"activation", activation_name(net.activation)},
              {"feature_mean", net.features.mean},
              {"feature_std", net.features.scale},
              {"target_mean", net.targets.mean},
              {"target_std", net.targets.scale},
              {"target_transforms", transforms},
              {"clamp_space", space_json(net.clamp_space)},
              {"layers", layers}};
}

inline Mlp mlp_from_json(const Json& j) {
  try {
    if (j.at("format") != "abcfit-mlp") throw FormatError("not an MLP model");
    if (j.at("version") != kModelFormatVersion) throw FormatError("unsupported model version");
    Mlp net;
    net.activation = activation_from_name(j.at("activation").get<std::string>());
    net.features.mean = j.at("feature_mean").get<std::vector<double>>();
    net.features.scale = j.at("feature_std").get<std::vector<double>>();
    net.targets.mean = j.at("target_mean").get<std::vector<double>>();
    net.targets.scale = j.at("target_std").get<std::vector<double>>();
    for (const auto& t : j.at("target_transforms")) net.transforms.push_back(transform_from_name(t.get<std::string>()));
    net.clamp_space = space_from_json(j.at("clamp_space"));
    for (const auto& l : j.at("layers")) {
      DenseLayer layer;
      layer.in = l.at("in").get<std::size_t>();
      layer.out = l.at("out").get<std::size_t>();
      layer.weights = l.at("weights").get<std::vector<double>>();
      layer.bias = l.at("bias").get<std::vector<double>>();
      net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed MLP model: ") + e.what());
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("inconsistent MLP model: ") + e.what());
  }
}

}  // namespace abcfit

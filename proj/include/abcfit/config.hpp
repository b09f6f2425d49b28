#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "abcfit/abc_engine.hpp"
#include "abcfit/error.hpp"
#include "abcfit/external_model.hpp"
#include "abcfit/forward_model.hpp"
#include "abcfit/mlp.hpp"
#include "abcfit/serialization.hpp"

namespace abcfit {

struct GridSpec {
  double lo = 1.0;
  double hi = 30.0;
  std::size_t n = 30;

  VoltageGrid grid() const { return VoltageGrid::uniform(lo, hi, n); }
};

struct ModelSpec {
  enum class Kind { kReference, kExternal };
  Kind kind = Kind::kReference;
  std::string command;

  ForwardModel make() const {
    if (kind == Kind::kReference) return reference_model();
    return external_model(command);
  }

  // "reference" or "external:<command>".
  static ModelSpec parse(const std::string& s) {
    if (s == "reference") return {};
    const std::string prefix = "external:";
    if (s.rfind(prefix, 0) == 0 && s.size() > prefix.size())
      return ModelSpec{Kind::kExternal, s.substr(prefix.size())};
    throw InvalidInput("model must be 'reference' or 'external:<command>', got '" + s + "'");
  }
};

// Fixed-architecture baseline: `dense_layers` weight layers, hidden ones of equal width.
struct MlpPreset {
  std::size_t dense_layers = 3;
  std::size_t hidden_width = 64;
  std::size_t epochs = 150;
  std::size_t batch_size = 32;
  double step_size = 1e-3;
  Activation activation = Activation::kRelu;

  MlpConfig config(std::size_t inputs, std::uint64_t seed) const {
    MlpConfig c = MlpConfig::preset(inputs, dense_layers, hidden_width, epochs);
    c.batch_size = batch_size;
    c.step_size = step_size;
    c.activation = activation;
    c.seed = seed;
    return c;
  }

  void validate(const char* name) const {
    if (dense_layers < 1) throw InvalidInput(std::string("mlp.") + name + ".dense_layers must be >= 1");
    if (hidden_width < 1) throw InvalidInput(std::string("mlp.") + name + ".hidden_width must be >= 1");
    config(2, 0).validate();
  }
};

struct BaselineConfig {
  MlpPreset shallow{3, 64, 150, 32, 1e-3, Activation::kRelu};
  MlpPreset deep{29, 64, 30, 32, 1e-3, Activation::kRelu};
  // Fresh uniform-prior samples added to the trial data.
  std::size_t extra_samples = 0;
};

struct RunConfig {
  std::uint64_t seed = 42;
  GridSpec grid;
  ModelSpec model;
  SearchSpace space = default_space();
  AbcConfig abc;
  TpeConfig tpe;
  GbConfig gb;
  GbTrainingSet gb_training = GbTrainingSet::kAll;
  BaselineConfig mlp;
  CurveOutput curve_output = CurveOutput::kNone;
  std::string output_dir;

  void validate() const {
    grid.grid();
    space.validate();
    abc.validate();
    tpe.validate();
    gb.validate();
    mlp.shallow.validate("shallow");
    mlp.deep.validate("deep");
    if (model.kind == ModelSpec::Kind::kExternal && model.command.empty())
      throw InvalidInput("external model needs a command");
  }

  FitSettings fit_settings() const { return FitSettings{space, abc, tpe, gb, gb_training}; }
};

namespace detail {

// Rejects keys outside `allowed` so that typos surface instead of silently
// falling back to defaults.
inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidInput(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw InvalidInput("unknown key '" + it.key() + "' in " + (where.empty() ? "config" : where));
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw InvalidInput(std::string("config key '") + key + "' has the wrong type");
  }
}

inline MlpPreset preset_from_json(const Json& j, MlpPreset p, const std::string& where) {
  check_keys(j, {"dense_layers", "hidden_width", "epochs", "batch_size", "step_size", "activation"}, where);
  read(j, "dense_layers", p.dense_layers);
  read(j, "hidden_width", p.hidden_width);
  read(j, "epochs", p.epochs);
  read(j, "batch_size", p.batch_size);
  read(j, "step_size", p.step_size);
  if (j.contains("activation")) p.activation = activation_from_name(j["activation"].get<std::string>());
  return p;
}

inline Json preset_json(const MlpPreset& p) {
  return Json{{"dense_layers", p.dense_layers}, {"hidden_width", p.hidden_width},
              {"epochs", p.epochs},             {"batch_size", p.batch_size},
              {"step_size", p.step_size},       {"activation", activation_name(p.activation)}};
}

}  // namespace detail

inline RunConfig run_config_from_json(const Json& j) {
  using detail::check_keys;
  using detail::read;
  RunConfig c;
  check_keys(j, {"seed", "grid", "model", "space", "abc", "tpe", "gb", "mlp", "curve_output", "output_dir"}, "");
  read(j, "seed", c.seed);
  read(j, "output_dir", c.output_dir);
  if (j.contains("grid")) {
    check_keys(j["grid"], {"lo", "hi", "n"}, "grid");
    read(j["grid"], "lo", c.grid.lo);
    read(j["grid"], "hi", c.grid.hi);
    read(j["grid"], "n", c.grid.n);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, {"kind", "command"}, "model");
    const auto kind = m.value("kind", std::string("reference"));
    if (kind == "reference") {
      c.model = ModelSpec{};
    } else if (kind == "external") {
      c.model = ModelSpec{ModelSpec::Kind::kExternal, m.value("command", std::string())};
    } else {
      throw InvalidInput("model.kind must be 'reference' or 'external'");
    }
  }
  if (j.contains("space") && !j["space"].is_null()) c.space = space_from_json(j["space"]);
  if (j.contains("abc")) {
    const auto& a = j["abc"];
    check_keys(a, {"n_prelim", "n_refined", "epsilon0", "epsilon0_relative", "summary",
                   "min_accept_for_sigma", "sampler"}, "abc");
    read(a, "n_prelim", c.abc.n_prelim);
    read(a, "n_refined", c.abc.n_refined);
    read(a, "epsilon0", c.abc.epsilon0);
    read(a, "epsilon0_relative", c.abc.epsilon0_relative);
    read(a, "min_accept_for_sigma", c.abc.min_accept_for_sigma);
    if (a.contains("summary") && a["summary"] != "mse")
      throw InvalidInput("abc.summary: only 'mse' is supported");
    if (a.contains("sampler")) {
      const auto s = a["sampler"].get<std::string>();
      if (s == "tpe") c.abc.sampler = SamplerKind::kTpe;
      else if (s == "uniform") c.abc.sampler = SamplerKind::kUniform;
      else throw InvalidInput("abc.sampler must be 'tpe' or 'uniform'");
    }
  }
  if (j.contains("tpe")) {
    const auto& t = j["tpe"];
    check_keys(t, {"gamma", "n_candidates", "n_startup", "bandwidth_floor"}, "tpe");
    read(t, "gamma", c.tpe.gamma);
    read(t, "n_candidates", c.tpe.n_candidates);
    read(t, "n_startup", c.tpe.n_startup);
    read(t, "bandwidth_floor", c.tpe.bandwidth_floor);
  }
  if (j.contains("gb")) {
    const auto& g = j["gb"];
    check_keys(g, {"n_rounds", "learning_rate", "max_depth", "min_leaf", "subsample", "training_set"}, "gb");
    read(g, "n_rounds", c.gb.n_rounds);
    read(g, "learning_rate", c.gb.learning_rate);
    read(g, "max_depth", c.gb.max_depth);
    read(g, "min_leaf", c.gb.min_leaf);
    read(g, "subsample", c.gb.subsample);
    if (g.contains("training_set")) {
      const auto s = g["training_set"].get<std::string>();
      if (s == "all") c.gb_training = GbTrainingSet::kAll;
      else if (s == "refined") c.gb_training = GbTrainingSet::kRefined;
      else throw InvalidInput("gb.training_set must be 'all' or 'refined'");
    }
  }
  if (j.contains("mlp")) {
    const auto& m = j["mlp"];
    check_keys(m, {"shallow", "deep", "extra_samples"}, "mlp");
    if (m.contains("shallow")) c.mlp.shallow = detail::preset_from_json(m["shallow"], c.mlp.shallow, "mlp.shallow");
    if (m.contains("deep")) c.mlp.deep = detail::preset_from_json(m["deep"], c.mlp.deep, "mlp.deep");
    read(m, "extra_samples", c.mlp.extra_samples);
  }
  if (j.contains("curve_output")) {
    const auto s = j["curve_output"].get<std::string>();
    if (s == "none") c.curve_output = CurveOutput::kNone;
    else if (s == "inline") c.curve_output = CurveOutput::kInline;
    else if (s == "sidecar") c.curve_output = CurveOutput::kSidecar;
    else throw InvalidInput("curve_output must be 'none', 'inline' or 'sidecar'");
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return run_config_from_json(j);
}

// Effective configuration with every default written out.
inline Json run_config_json(const RunConfig& c) {
  Json model = c.model.kind == ModelSpec::Kind::kReference
                   ? Json{{"kind", "reference"}}
                   : Json{{"kind", "external"}, {"command", c.model.command}};
  const char* curve_output = c.curve_output == CurveOutput::kNone     ? "none"
                             : c.curve_output == CurveOutput::kInline ? "inline"
                                                                      : "sidecar";
  return Json{
      {"seed", c.seed},
      {"grid", Json{{"lo", c.grid.lo}, {"hi", c.grid.hi}, {"n", c.grid.n}}},
      {"model", model},
      {"space", space_json(c.space)},
      {"abc", Json{{"n_prelim", c.abc.n_prelim},
                   {"n_refined", c.abc.n_refined},
                   {"epsilon0", c.abc.epsilon0},
                   {"epsilon0_relative", c.abc.epsilon0_relative},
                   {"summary", "mse"},
                   {"min_accept_for_sigma", c.abc.min_accept_for_sigma},
                   {"sampler", c.abc.sampler == SamplerKind::kTpe ? "tpe" : "uniform"}}},
      {"tpe", Json{{"gamma", c.tpe.gamma},
                   {"n_candidates", c.tpe.n_candidates},
                   {"n_startup", c.tpe.n_startup},
                   {"bandwidth_floor", c.tpe.bandwidth_floor}}},
      {"gb", [&] {
         Json g = gb_config_json(c.gb);
         g["training_set"] = c.gb_training == GbTrainingSet::kAll ? "all" : "refined";
         return g;
       }()},
      {"mlp", Json{{"shallow", detail::preset_json(c.mlp.shallow)},
                   {"deep", detail::preset_json(c.mlp.deep)},
                   {"extra_samples", c.mlp.extra_samples}}},
      {"curve_output", curve_output},
      {"output_dir", c.output_dir}};
}

}  // namespace abcfit

#pragma once

// Experiment configuration, read from JSON.
//
// Every key is optional except "experiment"; unknown keys are rejected so a
// typo never silently falls back to a default. See configs/*.json and the
// README for the full key tree.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "synmem/energy.hpp"
#include "synmem/passes.hpp"
#include "synmem/stores.hpp"
#include "synmem/train.hpp"

namespace synmem {

enum class Experiment { FcSweep, ConvSweep, DensityLeakGrid, TrainFrontier };

constexpr std::string_view experiment_name(Experiment e) {
  switch (e) {
    case Experiment::FcSweep: return "fc-sweep";
    case Experiment::ConvSweep: return "conv-sweep";
    case Experiment::DensityLeakGrid: return "density-leak-grid";
    case Experiment::TrainFrontier: return "train-frontier";
  }
  return "?";
}

inline std::optional<Experiment> parse_experiment(std::string_view s) {
  for (Experiment e : {Experiment::FcSweep, Experiment::ConvSweep, Experiment::DensityLeakGrid,
                       Experiment::TrainFrontier})
    if (experiment_name(e) == s) return e;
  return std::nullopt;
}

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  Experiment kind = Experiment::FcSweep;
  std::uint64_t seed = 1;
  std::vector<int> bit_widths;
  std::vector<Scheme> schemes;
  energy::FcLayer fc;
  energy::ConvLayer conv;
  std::vector<double> densities;
  std::vector<double> leak_fractions;
  int grid_bits = 8;
  BackwardMode backward_mode = BackwardMode::Batched;
  int bitmap_word_bits = 32;

  /// Constants overriding the calibrated defaults, then optional anchors to
  /// re-solve logic energy and write scale against.
  energy::CostModel cost_model = energy::CostModel::calibrated();
  energy::Anchors anchors{};

  snn::TrainConfig train;  // per-cell precision is filled in by the frontier
  bool full_scale = false;
  std::size_t jobs = 0;    // 0 = hardware concurrency

  std::string output;
  nlohmann::json source;   // parsed document, for the manifest hash
};

/// Defaults that depend on the experiment kind.
inline void apply_kind_defaults(ExperimentConfig& c) {
  switch (c.kind) {
    case Experiment::FcSweep:
      c.bit_widths = {2, 3, 4, 5, 6, 7, 8};
      c.schemes = {Scheme::Crossbar, Scheme::Csr, Scheme::Bitmap};
      break;
    case Experiment::ConvSweep:
      c.bit_widths = {2, 3, 4, 5, 6, 7, 8};
      c.schemes = {Scheme::Csr, Scheme::Functional};
      break;
    case Experiment::DensityLeakGrid:
      c.bit_widths = {8};
      c.schemes = {Scheme::Crossbar, Scheme::Csr, Scheme::Bitmap};
      c.densities = energy::linspace(0.05, 1.0, 10);
      c.leak_fractions = energy::linspace(0.0, 0.9, 10);
      break;
    case Experiment::TrainFrontier:
      c.bit_widths = {2, 3, 4, 5, 6};
      c.schemes = {Scheme::Crossbar, Scheme::Bitmap, Scheme::Csr};
      break;
  }
}

namespace detail {

/// 1-based line and column of a byte offset.
inline std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t k = 0; k < byte && k < text.size(); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

/// Walks a JSON object, recording which keys were read and pointing errors at
/// the line where the offending key first appears in the source text.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string path, std::string_view text)
      : j_(j), path_(std::move(path)), text_(text) {
    if (!j_.is_object()) fail(path_.empty() ? "/" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(key, std::string("wrong type: ") + e.what());
    }
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    return Reader(j_.at(key), path_ + "/" + key, text_);
  }

  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    std::ostringstream os;
    os << "config error at " << path_ << "/" << key;
    const auto pos = text_.find("\"" + key + "\"");
    if (pos != std::string_view::npos) {
      const auto [line, col] = line_col(text_, pos);
      os << " (line " << line << ", column " << col << ")";
    }
    os << ": " << msg;
    throw ConfigError(os.str());
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail(k, "unknown key");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::string_view text_;
  std::set<std::string> seen_;
};

inline std::vector<double> read_axis(Reader& r, const std::string& key, std::vector<double> fallback) {
  if (!r.has(key)) return fallback;
  const auto& v = r.raw(key);
  if (v.is_array()) {
    std::vector<double> out;
    try {
      out = v.get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      r.fail(key, "expected a list of numbers");
    }
    return out;
  }
  Reader axis(v, "/" + key, {});
  double lo = 0.0, hi = 0.0;
  std::size_t n = 0;
  axis.get("lo", lo);
  axis.get("hi", hi);
  axis.get("n", n);
  axis.finish();
  if (n < 2) r.fail(key, "axis needs n >= 2");
  return energy::linspace(lo, hi, n);
}

inline void read_cost_model(Reader r, ExperimentConfig& c) {
  auto& m = c.cost_model;
  r.get("read_scale", m.read_scale);
  r.get("read_capacity", m.read_capacity);
  r.get("write_scale", m.write_scale);
  r.get("write_capacity", m.write_capacity);
  r.get("leak_scale", m.leak_scale);
  r.get("logic_energy", m.logic_energy);
  r.get("round_capacity_pow2", m.round_capacity_pow2);
  r.get("bitmap_word_bits", c.bitmap_word_bits);
  if (r.has("anchors")) {
    Reader a = r.child("anchors");
    double f = 0.0, b = 0.0;
    if (a.has("conv_forward_ratio")) {
      a.get("conv_forward_ratio", f);
      c.anchors.conv_forward_ratio = f;
    }
    if (a.has("conv_backward_ratio")) {
      a.get("conv_backward_ratio", b);
      c.anchors.conv_backward_ratio = b;
    }
    a.get("weight_bits", c.anchors.weight_bits);
    a.finish();
  }
  r.finish();
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("cost model: ") + e.what());
  }
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + p.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline nlohmann::json parse_text(const std::string& text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte ? e.byte - 1 : 0);
    std::ostringstream os;
    os << origin << ":" << line << ":" << col << ": JSON syntax error: " << e.what();
    throw ConfigError(os.str());
  }
}

}  // namespace detail

/// Parses a config document. `base_dir` resolves a relative cost-model path.
inline ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>",
                                     const std::filesystem::path& base_dir = {}) {
  ExperimentConfig c;
  c.source = detail::parse_text(text, origin);
  detail::Reader r(c.source, "", text);

  std::string kind;
  if (!r.has("experiment")) throw ConfigError(origin + ": missing required key \"experiment\"");
  r.get("experiment", kind);
  const auto e = parse_experiment(kind);
  if (!e) r.fail("experiment", "unknown experiment '" + kind + "'");
  c.kind = *e;
  apply_kind_defaults(c);

  r.get("seed", c.seed);
  r.get("bit_widths", c.bit_widths);
  r.get("jobs", c.jobs);
  r.get("output", c.output);
  r.get("full_scale", c.full_scale);

  if (r.has("schemes")) {
    std::vector<std::string> names;
    r.get("schemes", names);
    c.schemes.clear();
    for (const auto& n : names) {
      try {
        c.schemes.push_back(parse_scheme(n));
      } catch (const std::invalid_argument& ex) {
        r.fail("schemes", ex.what());
      }
    }
  }
  if (r.has("backward_mode")) {
    std::string m;
    r.get("backward_mode", m);
    try {
      c.backward_mode = parse_backward_mode(m);
    } catch (const std::invalid_argument& ex) {
      r.fail("backward_mode", ex.what());
    }
  }

  if (r.has("fc")) {
    auto f = r.child("fc");
    f.get("n_pre", c.fc.n_pre);
    f.get("n_post", c.fc.n_post);
    f.get("density", c.fc.density);
    f.finish();
  }
  if (r.has("conv")) {
    auto g = r.child("conv");
    auto& geo = c.conv.geometry;
    g.get("in_h", geo.in_h);
    g.get("in_w", geo.in_w);
    g.get("k_h", geo.k_h);
    g.get("k_w", geo.k_w);
    g.get("c_in", geo.c_in);
    g.get("c_out", geo.c_out);
    g.finish();
  }
  if (r.has("grid")) {
    auto g = r.child("grid");
    c.densities = detail::read_axis(g, "densities", c.densities);
    c.leak_fractions = detail::read_axis(g, "leak_fractions", c.leak_fractions);
    g.get("weight_bits", c.grid_bits);
    g.finish();
  }

  if (r.has("cost_model")) {
    const auto& cm = r.raw("cost_model");
    if (cm.is_string()) {
      std::filesystem::path p = cm.get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      if (!std::filesystem::exists(p)) r.fail("cost_model", "cost model file '" + p.string() + "' does not exist");
      const std::string cm_text = detail::read_file(p);
      const auto doc = detail::parse_text(cm_text, p.string());
      detail::read_cost_model(detail::Reader(doc, "", cm_text), c);
    } else {
      detail::read_cost_model(detail::Reader(cm, "/cost_model", text), c);
    }
  }

  if (r.has("train")) {
    auto t = r.child("train");
    auto& tc = c.train;
    t.get("layers", tc.task.layers);
    t.get("steps", tc.task.steps);
    t.get("rate_lo", tc.task.rate_lo);
    t.get("rate_hi", tc.task.rate_hi);
    t.get("target_p", tc.task.target_p);
    t.get("pattern_period", tc.task.pattern_period);
    t.get("tau_vr", tc.task.tau_vr);
    t.get("epochs", tc.epochs);
    t.get("learning_rate", tc.learning_rate);
    t.get("quantized_learning_rate", tc.quantized_learning_rate);
    t.get("init_gain", tc.init_gain);
    t.get("error_bits", tc.error_bits);
    t.get("membrane_bits", tc.membrane_bits);
    if (t.has("lif")) {
      auto l = t.child("lif");
      l.get("alpha", tc.lif.alpha);
      l.get("beta", tc.lif.beta);
      l.get("gamma", tc.lif.gamma);
      l.get("delta", tc.lif.delta);
      l.get("theta", tc.lif.theta);
      l.get("surrogate_sharpness", tc.lif.surrogate_sharpness);
      l.finish();
    }
    t.finish();
  }
  r.finish();
  return c;
}

/// Applies the --full-scale switch: the full-size training network.
inline void apply_full_scale(ExperimentConfig& c) {
  c.full_scale = true;
  const auto seed = c.train.task.seed;
  c.train.task = snn::TaskConfig::full_scale();
  c.train.task.seed = seed;
  c.train.epochs = 10000;
}

/// Checks cross-field invariants; throws ConfigError.
inline void validate(const ExperimentConfig& c) {
  auto bad = [](const std::string& m) { throw ConfigError("config error: " + m); };
  if (c.bit_widths.empty()) bad("bit_widths must not be empty");
  if (c.schemes.empty()) bad("schemes must not be empty");
  for (int b : c.bit_widths)
    if (b < 2 || b > 32) bad("bit widths must lie in [2, 32]");
  if (c.bitmap_word_bits < 1 || c.bitmap_word_bits > 64) bad("bitmap_word_bits must lie in [1, 64]");
  try {
    c.conv.geometry.validate();
    c.train.lif.validate();
  } catch (const std::invalid_argument& e) {
    bad(e.what());
  }
  if (c.fc.n_pre == 0 || c.fc.n_post == 0) bad("fc dims must be >= 1");
  if (!(c.fc.density >= 0.0 && c.fc.density <= 1.0)) bad("fc density must lie in [0, 1]");

  auto only = [&](std::initializer_list<Scheme> allowed) {
    for (Scheme s : c.schemes)
      if (std::find(allowed.begin(), allowed.end(), s) == allowed.end())
        bad("scheme " + std::string(scheme_name(s)) + " is not valid for " + std::string(experiment_name(c.kind)));
  };
  switch (c.kind) {
    case Experiment::FcSweep: only({Scheme::Crossbar, Scheme::Csr, Scheme::Bitmap}); break;
    case Experiment::ConvSweep: only({Scheme::Crossbar, Scheme::Csr, Scheme::Functional}); break;
    case Experiment::DensityLeakGrid:
      only({Scheme::Crossbar, Scheme::Csr, Scheme::Bitmap});
      if (c.densities.size() < 2 || c.leak_fractions.size() < 2) bad("grid axes need at least 2 points");
      for (double d : c.densities)
        if (!(d >= 0.0 && d <= 1.0)) bad("grid densities must lie in [0, 1]");
      for (double f : c.leak_fractions)
        if (!(f >= 0.0 && f < 1.0)) bad("grid leak fractions must lie in [0, 1)");
      break;
    case Experiment::TrainFrontier:
      only({Scheme::Crossbar, Scheme::Csr, Scheme::Bitmap});
      if (c.train.task.layers.size() < 2) bad("train.layers needs at least two entries");
      for (auto n : c.train.task.layers)
        if (n == 0) bad("train.layers entries must be >= 1");
      if (c.train.task.steps == 0) bad("train.steps must be >= 1");
      if (!(c.train.task.tau_vr > 0.0)) bad("train.tau_vr must be > 0");
      if (!(c.train.task.rate_lo >= 0.0 && c.train.task.rate_lo <= c.train.task.rate_hi && c.train.task.rate_hi <= 1.0))
        bad("train rates must satisfy 0 <= rate_lo <= rate_hi <= 1");
      for (int b : c.bit_widths)
        if (b < 2 || b > 16) bad("frontier bit widths must lie in [2, 16]");
      break;
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  ExperimentConfig c = parse_config(text, path.string(), path.parent_path());
  validate(c);
  return c;
}

}  // namespace synmem

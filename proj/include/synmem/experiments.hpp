#pragma once

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "synmem/config.hpp"
#include "synmem/energy.hpp"
#include "synmem/passes.hpp"
#include "synmem/train.hpp"

namespace synmem {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kCsvSchemaVersion = 1;

// ---------------------------------------------------------------------------
// CSV schemas

enum class ColumnType { Text, Int, Real, Flag };

struct CsvSchema {
  std::string name;
  std::vector<std::pair<std::string, ColumnType>> columns;

  std::string header() const {
    std::string h;
    for (const auto& [n, t] : columns) h += (h.empty() ? "" : ",") + n;
    return h;
  }
  std::string banner() const {
    return "# synmem-csv v" + std::to_string(kCsvSchemaVersion) + " " + name + "; energies in model-relative pJ";
  }
};

inline const CsvSchema& sweep_schema(Experiment kind) {
  using T = ColumnType;
  static const std::vector<std::pair<std::string, ColumnType>> cols{
      {"scheme", T::Text},          {"b_w", T::Int},          {"forward_pJ", T::Real},
      {"backward_pJ", T::Real},     {"leak_pJ", T::Real},     {"total_pJ", T::Real},
      {"winner", T::Flag},          {"storage_bits", T::Int}, {"forward_reads", T::Int},
      {"backward_reads", T::Int},   {"backward_weight_reads", T::Int},
      {"backward_writes", T::Int},  {"logic_evals", T::Int}};
  static const CsvSchema fc{"fc-sweep", cols}, conv{"conv-sweep", cols};
  return kind == Experiment::ConvSweep ? conv : fc;
}

inline const CsvSchema& grid_schema() {
  using T = ColumnType;
  static const CsvSchema s{"density-leak-grid",
                           {{"density", T::Real},
                            {"leak_fraction", T::Real},
                            {"scheme", T::Text},
                            {"active_pJ", T::Real},
                            {"leak_pJ", T::Real},
                            {"total_pJ", T::Real},
                            {"winner", T::Flag},
                            {"winner_scheme", T::Text},
                            {"order_of_magnitude", T::Int}}};
  return s;
}

inline const CsvSchema& frontier_schema() {
  using T = ColumnType;
  static const CsvSchema s{"train-frontier",
                           {{"scheme", T::Text},
                            {"b_w", T::Int},
                            {"epochs", T::Int},
                            {"initial_vr", T::Real},
                            {"final_vr", T::Real},
                            {"best_vr", T::Real},
                            {"total_pJ", T::Real},
                            {"forward_pJ", T::Real},
                            {"backward_pJ", T::Real},
                            {"mean_sparsity", T::Real},
                            {"final_sparsity", T::Real},
                            {"diverged", T::Flag}}};
  return s;
}

inline const CsvSchema& curve_schema() {
  using T = ColumnType;
  static const CsvSchema s{"learning-curve",
                           {{"epoch", T::Int},
                            {"vr_distance", T::Real},
                            {"fwd_pJ", T::Real},
                            {"bwd_pJ", T::Real},
                            {"sparsity", T::Real}}};
  return s;
}

inline const CsvSchema* schema_by_name(std::string_view name) {
  for (const CsvSchema* s : {&sweep_schema(Experiment::FcSweep), &sweep_schema(Experiment::ConvSweep), &grid_schema(),
                             &frontier_schema(), &curve_schema()})
    if (s->name == name) return s;
  return nullptr;
}

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checks banner, header, field counts and field types. Returns the number of
/// data rows.
inline std::size_t validate_csv(const std::string& text, const CsvSchema& schema) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0, rows = 0;
  auto fail = [&](const std::string& m) {
    throw CsvError(schema.name + " csv, line " + std::to_string(lineno) + ": " + m);
  };
  if (!std::getline(in, line) || (++lineno, line != schema.banner())) fail("missing or wrong schema banner");
  if (!std::getline(in, line) || (++lineno, line != schema.header())) fail("header does not match schema");
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) fail("empty line");
    std::vector<std::string> fields;
    std::string f;
    std::istringstream ls(line);
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != schema.columns.size())
      fail("expected " + std::to_string(schema.columns.size()) + " fields, got " + std::to_string(fields.size()));
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const auto& v = fields[k];
      const auto& [name, type] = schema.columns[k];
      bool ok = !v.empty();
      if (ok && type == ColumnType::Int) {
        std::size_t pos = 0;
        try {
          (void)std::stoll(v, &pos);
        } catch (const std::exception&) {
          ok = false;
        }
        ok = ok && pos == v.size();
      } else if (ok && type == ColumnType::Real) {
        std::size_t pos = 0;
        try {
          (void)std::stod(v, &pos);
        } catch (const std::exception&) {
          ok = false;
        }
        ok = ok && pos == v.size();
      } else if (ok && type == ColumnType::Flag) {
        ok = v == "0" || v == "1";
      }
      if (!ok) fail("bad value '" + v + "' in column " + name);
    }
    ++rows;
  }
  if (!text.empty() && text.back() != '\n') fail("missing trailing newline");
  return rows;
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const CsvSchema& s) { os_ << s.banner() << '\n' << s.header() << '\n'; }
  template <typename... Ts>
  void row(const Ts&... fields) {
    bool first = true;
    ((os_ << (first ? "" : ",") << field(fields), first = false), ...);
    os_ << '\n';
  }
  std::string str() const { return os_.str(); }

 private:
  static std::string field(const std::string& s) { return s; }
  static std::string field(std::string_view s) { return std::string(s); }
  static std::string field(const char* s) { return s; }
  static std::string field(double v) { return num(v); }
  static std::string field(bool v) { return v ? "1" : "0"; }
  template <typename I>
    requires std::is_integral_v<I>
  static std::string field(I v) {
    return std::to_string(v);
  }
  std::ostringstream os_;
};

/// Runs fn(k) for k in [0, n) on up to `jobs` threads. Results are placed by
/// index, so the output order never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k; (k = next++) < n;) fn(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Files produced by one command, in write order.
struct RunOutput {
  std::vector<std::pair<std::string, std::string>> files;
  std::size_t cells = 0;
  std::size_t diverged_cells = 0;

  const std::string& file(const std::string& name) const {
    for (const auto& [n, c] : files)
      if (n == name) return c;
    throw std::out_of_range("no output named " + name);
  }
  bool all_diverged() const { return cells > 0 && diverged_cells == cells; }
};

/// Resolves the cost model of a config: configured constants, then the
/// anchors if any. Throws energy::CalibrationError.
inline energy::CostModel resolve_cost_model(const ExperimentConfig& c) {
  if (c.anchors.empty()) return c.cost_model;
  energy::Anchors a = c.anchors;
  a.layer.seed = c.seed;
  return energy::calibrate(a, energy::anchor_traces(a, c.backward_mode), c.cost_model);
}

namespace detail {

inline std::string sweep_csv(Experiment kind, const std::vector<energy::SweepRow>& rows, const energy::CostModel& model) {
  // Winner: lowest total at the same bit width.
  std::map<int, double> best;
  std::vector<double> leak(rows.size()), total(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& t = rows[k].traces;
    leak[k] = energy::leakage_energy(t.storage, t.forward + t.backward, model);
    total[k] = rows[k].forward_pJ + rows[k].backward_pJ + leak[k];
    auto [it, fresh] = best.emplace(rows[k].weight_bits, total[k]);
    if (!fresh) it->second = std::min(it->second, total[k]);
  }
  CsvWriter w(sweep_schema(kind));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    const auto& t = r.traces;
    std::uint64_t bwd_reads = 0, bwd_writes = 0, fwd_reads = 0;
    for (const auto& [bank, counts] : t.backward.banks()) {
      bwd_reads += counts.reads;
      bwd_writes += counts.writes;
    }
    for (const auto& [bank, counts] : t.forward.banks()) fwd_reads += counts.reads;
    w.row(scheme_name(r.scheme), r.weight_bits, r.forward_pJ, r.backward_pJ, leak[k], total[k],
          total[k] == best[r.weight_bits], t.storage.total(), fwd_reads, bwd_reads, t.backward.weight_reads(),
          bwd_writes, t.forward.logic_evals() + t.backward.logic_evals());
  }
  return w.str();
}

}  // namespace detail

inline RunOutput cmd_fc_sweep(const ExperimentConfig& c) {
  const auto model = resolve_cost_model(c);
  energy::FcLayer layer = c.fc;
  layer.seed = c.seed;
  const auto rows = energy::fc_sweep(layer, c.bit_widths, model, c.schemes, c.backward_mode, c.bitmap_word_bits);
  RunOutput out;
  out.files.emplace_back("fc_sweep.csv", detail::sweep_csv(Experiment::FcSweep, rows, model));
  return out;
}

inline RunOutput cmd_conv_sweep(const ExperimentConfig& c) {
  const auto model = resolve_cost_model(c);
  energy::ConvLayer layer = c.conv;
  layer.seed = c.seed;
  const auto rows = energy::conv_sweep(layer, c.bit_widths, model, c.schemes, c.backward_mode);
  RunOutput out;
  out.files.emplace_back("conv_sweep.csv", detail::sweep_csv(Experiment::ConvSweep, rows, model));
  return out;
}

inline RunOutput cmd_density_leak_grid(const ExperimentConfig& c) {
  const auto model = resolve_cost_model(c);
  energy::FcLayer layer = c.fc;
  layer.seed = c.seed;
  const auto grid = energy::density_leak_grid(layer, c.grid_bits, c.densities, c.leak_fractions, model, c.schemes,
                                              c.backward_mode, c.bitmap_word_bits);
  detail::CsvWriter w(grid_schema());
  for (const auto& p : grid)
    for (const auto& cell : p.cells)
      w.row(p.density, p.leak_fraction, scheme_name(cell.scheme), cell.active_pJ, cell.leakage_pJ, cell.total_pJ,
            cell.winner, scheme_name(p.winner), p.order_of_magnitude);
  RunOutput out;
  out.files.emplace_back("density_leak_grid.csv", w.str());
  return out;
}

/// Training config of one frontier cell.
inline snn::TrainConfig frontier_cell_config(const ExperimentConfig& c, int bits, const energy::CostModel& model) {
  snn::TrainConfig t = c.train;
  t.quantized = true;
  t.weight_bits = bits;
  t.schemes = c.schemes;
  t.backward_mode = c.backward_mode;
  t.bitmap_word_bits = c.bitmap_word_bits;
  t.cost_model = model;
  t.seed = c.seed;
  t.task.seed = c.seed;
  return t;
}

/// One training run per bit width (cells run in parallel); every accounted
/// scheme gets a frontier row and a learning curve per run.
inline RunOutput cmd_train_frontier(const ExperimentConfig& c) {
  const auto model = resolve_cost_model(c);
  std::vector<snn::TrainResult> results(c.bit_widths.size());
  detail::parallel_for(c.bit_widths.size(), c.jobs, [&](std::size_t k) {
    results[k] = snn::train(frontier_cell_config(c, c.bit_widths[k], model));
  });

  RunOutput out;
  detail::CsvWriter summary(frontier_schema());
  std::vector<std::pair<std::string, std::string>> curves;
  for (Scheme s : c.schemes) {
    for (std::size_t k = 0; k < c.bit_widths.size(); ++k) {
      const int b = c.bit_widths[k];
      const auto& r = results[k];
      const auto& a = r.account(s);
      const double fwd = std::accumulate(a.forward_pJ.begin(), a.forward_pJ.end(), 0.0);
      const double bwd = std::accumulate(a.backward_pJ.begin(), a.backward_pJ.end(), 0.0);
      summary.row(scheme_name(s), b, r.epochs_run, r.initial_vr(), r.final_vr(), r.best_vr(), fwd + bwd, fwd, bwd,
                  r.mean_sparsity(), r.final_sparsity(), r.diverged);

      // Row e: VR after e updates and the traffic of update e (none for e = 0).
      detail::CsvWriter curve(curve_schema());
      for (std::size_t e = 0; e < r.vr_curve.size(); ++e) {
        const double f = e ? a.forward_pJ[e - 1] : 0.0;
        const double g = e ? a.backward_pJ[e - 1] : 0.0;
        curve.row(e, r.vr_curve[e], f, g, r.sparsity_curve[e]);
      }
      curves.emplace_back("curve_" + std::string(scheme_name(s)) + "_b" + std::to_string(b) + ".csv", curve.str());
    }
  }
  out.files.emplace_back("train_frontier.csv", summary.str());
  for (auto& f : curves) out.files.push_back(std::move(f));
  out.cells = results.size();
  for (const auto& r : results) out.diverged_cells += r.diverged ? 1 : 0;
  return out;
}

inline RunOutput run_experiment(const ExperimentConfig& c) {
  switch (c.kind) {
    case Experiment::FcSweep: return cmd_fc_sweep(c);
    case Experiment::ConvSweep: return cmd_conv_sweep(c);
    case Experiment::DensityLeakGrid: return cmd_density_leak_grid(c);
    case Experiment::TrainFrontier: return cmd_train_frontier(c);
  }
  throw std::logic_error("unknown experiment");
}

// ---------------------------------------------------------------------------
// Manifest

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of everything that determines the outputs: the config document plus
/// the command-line overrides.
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = c.source;
  j["__effective_seed"] = c.seed;
  j["__full_scale"] = c.full_scale;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a64(j.dump()));
  return buf;
}

inline nlohmann::json run_manifest(const ExperimentConfig& c, const RunOutput& out, const energy::CostModel& model) {
  nlohmann::json m;
  m["tool"] = "synmem";
  m["version"] = kVersion;
  m["experiment"] = std::string(experiment_name(c.kind));
  m["config_hash"] = "fnv1a64:" + config_hash(c);
  m["seed"] = c.seed;
  m["full_scale"] = c.full_scale;
  m["csv_schema_version"] = kCsvSchemaVersion;
  m["backward_mode"] = std::string(backward_mode_name(c.backward_mode));
  m["cost_model"] = {{"read_scale", model.read_scale},         {"read_capacity", model.read_capacity},
                     {"write_scale", model.write_scale},       {"write_capacity", model.write_capacity},
                     {"leak_scale", model.leak_scale},         {"logic_energy", model.logic_energy},
                     {"round_capacity_pow2", model.round_capacity_pow2}};
  m["library_versions"] = {{"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                 std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                 std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  std::vector<std::string> names;
  for (const auto& [n, body] : out.files) names.push_back(n);
  m["outputs"] = names;
  m["cells"] = out.cells;
  m["diverged_cells"] = out.diverged_cells;
  return m;
}

/// Writes every output plus run_manifest.json into `dir`.
inline void write_outputs(const std::filesystem::path& dir, const RunOutput& out, const nlohmann::json& manifest) {
  std::filesystem::create_directories(dir);
  auto put = [&dir](const std::string& name, const std::string& body) {
    std::ofstream f(dir / name, std::ios::binary);
    f << body;
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
  };
  for (const auto& [name, body] : out.files) put(name, body);
  put("run_manifest.json", manifest.dump(2) + "\n");
}

}  // namespace synmem

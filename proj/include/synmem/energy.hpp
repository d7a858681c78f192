#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "synmem/access_trace.hpp"
#include "synmem/passes.hpp"
#include "synmem/rng.hpp"
#include "synmem/stores.hpp"
#include "synmem/synapse_matrix.hpp"

namespace synmem::energy {

/// Analytic SRAM cost model. Energies in pJ under the default constants; the
/// constants are model-relative, not a technology characterization.
///
///   e_read(C, w)  = read_scale  * w * (1 + read_capacity  * sqrt(C))
///   e_write(C, w) = write_scale * w * (1 + write_capacity * sqrt(C))
///   p_leak(C)     = leak_scale * C          (per unit of access time)
///
/// C is the bank capacity in bits, rounded up to a power of two when
/// `round_capacity_pow2` is set. Zero-width banks (e.g. a pointer table of an
/// empty matrix) cost nothing.
struct CostModel {
  double read_scale = 0.01;
  double read_capacity = 0.01;
  double write_scale = 0.01;
  double write_capacity = 0.01;
  double leak_scale = 1e-6;
  double logic_energy = 0.05;
  bool round_capacity_pow2 = true;

  /// Constants before any calibration.
  static CostModel factory() { return {}; }

  /// Factory constants calibrated against the default anchors (see
  /// calibrate()). Frozen here so that loading the default model needs no
  /// conv-layer traces; test_energy re-derives them.
  static CostModel calibrated() {
    CostModel m = factory();
    m.logic_energy = 23.842449484602305;
    m.write_scale = 0.054700774832847396;
    return m;
  }

  double effective_capacity(std::uint64_t capacity_bits) const {
    if (round_capacity_pow2 && capacity_bits > 0) return static_cast<double>(std::bit_ceil(capacity_bits));
    return static_cast<double>(capacity_bits);
  }
  double e_read(std::uint64_t capacity_bits, std::uint32_t word_bits) const {
    return read_scale * word_bits * (1.0 + read_capacity * std::sqrt(effective_capacity(capacity_bits)));
  }
  double e_write(std::uint64_t capacity_bits, std::uint32_t word_bits) const {
    return write_scale * word_bits * (1.0 + write_capacity * std::sqrt(effective_capacity(capacity_bits)));
  }
  double p_leak(std::uint64_t capacity_bits) const { return leak_scale * effective_capacity(capacity_bits); }

  void validate() const {
    for (double v : {read_scale, read_capacity, write_scale, write_capacity, leak_scale, logic_energy})
      if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("CostModel: constants must be finite and >= 0");
    if (read_scale <= 0.0 || write_scale <= 0.0 || logic_energy <= 0.0 || leak_scale <= 0.0)
      throw std::invalid_argument("CostModel: scale constants must be > 0");
  }
};

/// Number of pass_energy evaluations in this process.
inline std::atomic<std::uint64_t>& audit_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

struct BankEnergy {
  BankInfo bank;
  BankCounts counts;
  double read_pJ = 0.0;
  double write_pJ = 0.0;
};

struct PassEnergyReport {
  std::optional<Scheme> scheme;
  double active_pJ = 0.0;
  double logic_pJ = 0.0;
  double leakage_pJ = 0.0;
  std::vector<BankEnergy> banks;
  AccessTrace trace;

  double total_pJ() const { return active_pJ + leakage_pJ; }
};

/// Active energy of a trace: sum over banks of reads*e_read + writes*e_write,
/// plus logic_evals*e_logic.
inline PassEnergyReport pass_energy(const AccessTrace& trace, const CostModel& model,
                                    std::optional<Scheme> scheme = std::nullopt) {
  audit_counter().fetch_add(1, std::memory_order_relaxed);
  PassEnergyReport r;
  r.scheme = scheme;
  r.trace = trace;
  for (const auto& [info, counts] : trace.banks()) {
    if ((info.word_bits == 0) != (info.capacity_bits == 0) ||
        (info.word_bits != 0 && info.capacity_bits % info.word_bits != 0))
      throw std::invalid_argument("pass_energy: bank '" + std::string(bank_name(info.bank)) +
                                  "' has inconsistent capacity/word metadata");
    BankEnergy be{info, counts};
    if (info.word_bits) {
      be.read_pJ = static_cast<double>(counts.reads) * model.e_read(info.capacity_bits, info.word_bits);
      be.write_pJ = static_cast<double>(counts.writes) * model.e_write(info.capacity_bits, info.word_bits);
    }
    r.active_pJ += be.read_pJ + be.write_pJ;
    r.banks.push_back(be);
  }
  r.logic_pJ = static_cast<double>(trace.logic_evals()) * model.logic_energy;
  r.active_pJ += r.logic_pJ;
  return r;
}

/// Serial-memory time of a trace: one unit per memory access or logic step.
inline double access_time(const AccessTrace& t) {
  return static_cast<double>(t.total_accesses() + t.logic_evals());
}

/// Leakage of every bank of `storage` over the time the trace occupies.
inline double leakage_energy(const StorageReport& storage, const AccessTrace& t, const CostModel& model) {
  double power = 0.0;
  for (const auto& b : storage.banks) power += model.p_leak(b.capacity_bits);
  return power * access_time(t);
}

// ---------------------------------------------------------------------------
// Layer passes

struct FcLayer {
  std::size_t n_pre = 728;
  std::size_t n_post = 128;
  double density = 0.75;
  std::uint64_t seed = 1;
};

struct ConvLayer {
  ConvGeometry geometry{28, 28, 3, 3, 32, 32};
  std::uint64_t seed = 1;
};

/// Forward and backward traffic of one layer encoded under one scheme.
struct LayerTraces {
  Scheme scheme = Scheme::Crossbar;
  int weight_bits = 8;
  AccessTrace forward;
  AccessTrace backward;
  StorageReport storage;
};

inline LayerTraces layer_traces(const Store& s, BackwardMode mode) {
  return {scheme_of(s), weight_bits(s), forward_pass_trace(s), backward_pass_trace(s, mode), storage_bits(s)};
}

inline std::vector<LayerTraces> fc_layer_traces(const FcLayer& layer, int weight_bits,
                                                const std::vector<Scheme>& schemes,
                                                BackwardMode mode = BackwardMode::Batched,
                                                int bitmap_word_bits = 32) {
  const SynapseMatrix m = random_synapse_matrix(layer.n_pre, layer.n_post, layer.density, layer.seed);
  std::vector<LayerTraces> out;
  for (Scheme s : schemes) {
    switch (s) {
      case Scheme::Crossbar: out.push_back(layer_traces(build_crossbar(m, weight_bits), mode)); break;
      case Scheme::Csr: out.push_back(layer_traces(build_csr(m, weight_bits), mode)); break;
      case Scheme::Bitmap:
        out.push_back(layer_traces(build_bitmap(m, weight_bits, bitmap_word_bits), mode));
        break;
      case Scheme::Functional:
        throw std::invalid_argument("functional encoding applies to convolutional layers only");
    }
  }
  return out;
}

inline FunctionalStore random_conv_store(const ConvLayer& layer, int weight_bits) {
  Xorshift64Star rng(layer.seed);
  std::vector<double> kernel(layer.geometry.kernel_size());
  for (double& w : kernel) w = rng.uniform(-1.0, 1.0);
  return build_functional(layer.geometry, kernel, weight_bits);
}

/// Conv traces. The PB-CSR store encodes the materialized connectivity; the
/// crossbar baseline is computed from its shape only (it does not depend on
/// the weights and would not fit in memory for large layers).
inline std::vector<LayerTraces> conv_layer_traces(const ConvLayer& layer, int weight_bits,
                                                  const std::vector<Scheme>& schemes,
                                                  BackwardMode mode = BackwardMode::Batched) {
  const FunctionalStore fn = random_conv_store(layer, weight_bits);
  const auto& g = layer.geometry;
  std::vector<LayerTraces> out;
  for (Scheme s : schemes) {
    switch (s) {
      case Scheme::Crossbar: {
        CrossbarStore shape{g.n_pre(), g.n_post(), weight_bits, true, {}};
        out.push_back({s, weight_bits, crossbar_forward_trace(g.n_pre(), g.n_post(), weight_bits),
                       crossbar_backward_trace(g.n_pre(), g.n_post(), weight_bits), {{shape.weight_bank()}}});
        break;
      }
      case Scheme::Csr: out.push_back(layer_traces(build_csr_from_conv(fn), mode)); break;
      case Scheme::Functional: out.push_back(layer_traces(fn, mode)); break;
      case Scheme::Bitmap:
        throw std::invalid_argument("conv sweeps compare PB-CSR, Functional and an optional CB baseline");
    }
  }
  return out;
}

struct SweepRow {
  Scheme scheme = Scheme::Crossbar;
  int weight_bits = 8;
  double forward_pJ = 0.0;
  double backward_pJ = 0.0;
  LayerTraces traces;
};

inline SweepRow energy_row(const LayerTraces& t, const CostModel& model) {
  return {t.scheme, t.weight_bits, pass_energy(t.forward, model, t.scheme).active_pJ,
          pass_energy(t.backward, model, t.scheme).active_pJ, t};
}

/// Bit-width sweep of an FC layer: forward = forward_lookup of every
/// presynaptic neuron; backward = whole-layer reverse traversal plus one write
/// per stored weight.
inline std::vector<SweepRow> fc_sweep(const FcLayer& layer, const std::vector<int>& bit_widths,
                                      const CostModel& model,
                                      const std::vector<Scheme>& schemes = {Scheme::Crossbar, Scheme::Csr, Scheme::Bitmap},
                                      BackwardMode mode = BackwardMode::Batched, int bitmap_word_bits = 32) {
  std::vector<SweepRow> rows;
  for (int b : bit_widths)
    for (const auto& t : fc_layer_traces(layer, b, schemes, mode, bitmap_word_bits))
      rows.push_back(energy_row(t, model));
  return rows;
}

inline std::vector<SweepRow> conv_sweep(const ConvLayer& layer, const std::vector<int>& bit_widths,
                                        const CostModel& model,
                                        const std::vector<Scheme>& schemes = {Scheme::Csr, Scheme::Functional},
                                        BackwardMode mode = BackwardMode::Batched) {
  std::vector<SweepRow> rows;
  for (int b : bit_widths)
    for (const auto& t : conv_layer_traces(layer, b, schemes, mode)) rows.push_back(energy_row(t, model));
  return rows;
}

// ---------------------------------------------------------------------------
// Density x leakage grid

struct GridCell {
  double density = 0.0;
  double leak_fraction = 0.0;
  Scheme scheme = Scheme::Crossbar;
  double active_pJ = 0.0;   // forward + backward
  double leakage_pJ = 0.0;
  double total_pJ = 0.0;
  bool winner = false;
};

struct GridPoint {
  double density = 0.0;
  double leak_fraction = 0.0;
  std::vector<GridCell> cells;  // one per scheme
  Scheme winner = Scheme::Crossbar;
  int order_of_magnitude = 0;   // floor(log10(winning total))
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n < 2) throw std::invalid_argument("linspace: need at least 2 points");
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
  return v;
}

/// Evaluates total (forward + backward + leakage) energy of every scheme at
/// each (density, leak_fraction) point. The leakage scale at a given fraction f
/// is chosen so that leakage makes up exactly f of the crossbar's total; the
/// crossbar's traffic is independent of density, which makes it a fixed
/// reference activity level.
inline std::vector<GridPoint> density_leak_grid(const FcLayer& base, int weight_bits,
                                                const std::vector<double>& densities,
                                                const std::vector<double>& leak_fractions,
                                                const CostModel& model,
                                                const std::vector<Scheme>& schemes = {Scheme::Crossbar, Scheme::Csr, Scheme::Bitmap},
                                                BackwardMode mode = BackwardMode::Batched,
                                                int bitmap_word_bits = 32) {
  if (densities.size() < 2 || leak_fractions.size() < 2)
    throw std::invalid_argument("density_leak_grid: need at least 2 points per axis");
  for (double f : leak_fractions)
    if (!(f >= 0.0 && f < 1.0)) throw std::invalid_argument("leak fraction must be in [0, 1)");
  for (double d : densities)
    if (!(d >= 0.0 && d <= 1.0)) throw std::invalid_argument("density must be in [0, 1]");

  const AccessTrace ref_fwd = crossbar_forward_trace(base.n_pre, base.n_post, weight_bits);
  const AccessTrace ref_bwd = crossbar_backward_trace(base.n_pre, base.n_post, weight_bits);
  CrossbarStore ref_shape{base.n_pre, base.n_post, weight_bits, true, {}};
  const StorageReport ref_storage{{ref_shape.weight_bank()}};
  const double ref_active = pass_energy(ref_fwd, model).active_pJ + pass_energy(ref_bwd, model).active_pJ;
  const double ref_leak_unit = leakage_energy(ref_storage, ref_fwd + ref_bwd, model);

  std::vector<GridPoint> grid;
  for (double d : densities) {
    FcLayer layer = base;
    layer.density = d;
    const auto traces = fc_layer_traces(layer, weight_bits, schemes, mode, bitmap_word_bits);
    std::vector<std::pair<double, double>> active_leak;  // per scheme
    for (const auto& t : traces)
      active_leak.emplace_back(
          pass_energy(t.forward, model, t.scheme).active_pJ + pass_energy(t.backward, model, t.scheme).active_pJ,
          leakage_energy(t.storage, t.forward + t.backward, model));
    for (double f : leak_fractions) {
      const double scale = f / (1.0 - f) * ref_active / ref_leak_unit;
      GridPoint p{d, f, {}, Scheme::Crossbar, 0};
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_k = 0;
      for (std::size_t k = 0; k < traces.size(); ++k) {
        GridCell c{d, f, traces[k].scheme, active_leak[k].first, scale * active_leak[k].second, 0.0, false};
        c.total_pJ = c.active_pJ + c.leakage_pJ;
        if (c.total_pJ < best) {
          best = c.total_pJ;
          best_k = k;
        }
        p.cells.push_back(c);
      }
      p.cells[best_k].winner = true;
      p.winner = p.cells[best_k].scheme;
      p.order_of_magnitude = static_cast<int>(std::floor(std::log10(best)));
      grid.push_back(std::move(p));
    }
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Calibration

/// Target energy ratios (Functional / PB-CSR) on the reference conv layer.
struct Anchors {
  std::optional<double> conv_forward_ratio;
  std::optional<double> conv_backward_ratio;
  ConvLayer layer{};
  int weight_bits = 8;

  static Anchors defaults() {
    Anchors a;
    a.conv_forward_ratio = 1.05;   // functional forward overhead over PB-CSR
    a.conv_backward_ratio = 0.42;  // functional backward saving vs PB-CSR
    return a;
  }
  bool empty() const { return !conv_forward_ratio && !conv_backward_ratio; }
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Conv traces needed by calibrate(); computing them dominates the cost.
struct AnchorTraces {
  AccessTrace csr_forward, csr_backward, functional_forward, functional_backward;
};

inline AnchorTraces anchor_traces(const Anchors& a, BackwardMode mode = BackwardMode::Batched) {
  const auto t = conv_layer_traces(a.layer, a.weight_bits, {Scheme::Csr, Scheme::Functional}, mode);
  return {t[0].forward, t[0].backward, t[1].forward, t[1].backward};
}

/// Solves for the two constants that the anchors pin, starting from `base`:
/// the logic energy from the forward ratio (forward traffic has no writes, so
/// the ratio is linear in logic_energy) and then the write scale from the
/// backward ratio (linear in write_scale once logic_energy is fixed). Other
/// constants are left as in `base`. Throws CalibrationError when the required
/// constant is not strictly positive.
inline CostModel calibrate(const Anchors& anchors, const AnchorTraces& t, CostModel base = CostModel::factory()) {
  if (anchors.empty()) return base;
  CostModel m = base;

  auto active = [](const AccessTrace& tr, const CostModel& cm) { return pass_energy(tr, cm).active_pJ; };

  if (anchors.conv_forward_ratio) {
    const double rho = *anchors.conv_forward_ratio;
    if (!(rho > 0.0)) throw CalibrationError("forward anchor ratio must be positive");
    const auto logic = static_cast<double>(t.functional_forward.logic_evals());
    if (logic == 0.0) throw CalibrationError("functional forward trace has no logic evaluations");
    CostModel no_logic = m;
    no_logic.logic_energy = 0.0;
    const double target = rho * active(t.csr_forward, no_logic) - active(t.functional_forward, no_logic);
    // CSR forward traffic carries no logic term.
    m.logic_energy = target / logic;
    if (!(m.logic_energy > 0.0))
      throw CalibrationError("forward anchor infeasible: logic energy would be " + std::to_string(m.logic_energy));
  }

  if (anchors.conv_backward_ratio) {
    const double rho = *anchors.conv_backward_ratio;
    if (!(rho > 0.0)) throw CalibrationError("backward anchor ratio must be positive");
    CostModel unit = m, zero = m;
    unit.write_scale = 1.0;
    zero.write_scale = 0.0;
    const double fixed_f = active(t.functional_backward, zero);
    const double fixed_c = active(t.csr_backward, zero);
    const double per_f = active(t.functional_backward, unit) - fixed_f;
    const double per_c = active(t.csr_backward, unit) - fixed_c;
    const double denom = rho * per_c - per_f;
    if (denom == 0.0) throw CalibrationError("backward anchor infeasible: degenerate write terms");
    m.write_scale = (fixed_f - rho * fixed_c) / denom;
    if (!(m.write_scale > 0.0))
      throw CalibrationError("backward anchor infeasible: write scale would be " + std::to_string(m.write_scale));
  }
  return m;
}

inline CostModel calibrate_defaults(const Anchors& anchors, CostModel base = CostModel::factory()) {
  if (anchors.empty()) return base;
  return calibrate(anchors, anchor_traces(anchors), base);
}

}  // namespace synmem::energy

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "synmem/energy.hpp"
#include "synmem/passes.hpp"
#include "synmem/quantization.hpp"
#include "synmem/rng.hpp"
#include "synmem/snn.hpp"
#include "synmem/stores.hpp"

namespace synmem::snn {

/// Pattern-retention task: frozen Poisson input, noisy striped target.
struct TaskConfig {
  std::vector<std::size_t> layers{200, 100, 50};
  std::size_t steps = 100;
  double rate_lo = 0.02;
  double rate_hi = 0.2;
  double target_p = 0.95;
  std::size_t pattern_period = 10;
  double tau_vr = 10.0;
  std::uint64_t seed = 1;

  static TaskConfig full_scale() {
    TaskConfig t;
    t.layers = {700, 400, 250};
    t.steps = 250;
    return t;
  }
};

struct EpisodeData {
  Raster input;
  Raster target;
};

inline EpisodeData make_episode(const TaskConfig& task) {
  if (task.layers.size() < 2) throw std::invalid_argument("TaskConfig: need at least two layers");
  const std::size_t n_in = task.layers.front(), n_out = task.layers.back();
  const auto rates = draw_input_rates(n_in, task.rate_lo, task.rate_hi, derive_seed(task.seed, 0));
  EpisodeData d;
  d.input = generate_poisson_input(n_in, task.steps, rates, derive_seed(task.seed, 1));
  d.target = generate_target(clean_pattern(n_out, task.steps, task.pattern_period, task.seed), task.target_p,
                             derive_seed(task.seed, 2));
  return d;
}

struct TrainConfig {
  TaskConfig task;
  LifParams lif;
  std::size_t epochs = 2000;

  bool quantized = false;
  int weight_bits = 8;
  int error_bits = 8;
  int membrane_bits = 16;
  /// Full-precision SGD step on dL/dW.
  double learning_rate = 1e-3;
  /// Quantized mode: step, in stored-weight units, applied to the
  /// max-normalized gradient before stochastic rounding onto the weight grid.
  double quantized_learning_rate = 0.05;
  double init_gain = 1.0;

  /// Schemes whose memory traffic is accounted while training.
  std::vector<Scheme> schemes{};
  BackwardMode backward_mode = BackwardMode::Batched;
  int bitmap_word_bits = 32;
  energy::CostModel cost_model = energy::CostModel::calibrated();

  std::uint64_t seed = 1;

  /// Word width the stores account for (full precision counts 32-bit words).
  int accounted_bits() const { return quantized ? weight_bits : 32; }
};

/// Memory energy of one scheme over a training run.
struct SchemeAccount {
  Scheme scheme = Scheme::Crossbar;
  std::vector<double> forward_pJ;   // per epoch
  std::vector<double> backward_pJ;  // per epoch
  std::vector<AccessTrace> forward_traces;   // per layer, summed over epochs
  std::vector<AccessTrace> backward_traces;  // per layer, summed over epochs

  double total_pJ() const {
    return std::accumulate(forward_pJ.begin(), forward_pJ.end(), 0.0) +
           std::accumulate(backward_pJ.begin(), backward_pJ.end(), 0.0);
  }
};

struct TrainResult {
  std::vector<double> vr_curve;        // entry k: after k updates (size epochs + 1)
  std::vector<double> sparsity_curve;  // fraction of zero stored weights, same indexing
  std::vector<SchemeAccount> accounts;
  bool diverged = false;
  std::size_t epochs_run = 0;

  double initial_vr() const { return vr_curve.front(); }
  double final_vr() const { return vr_curve.back(); }
  double best_vr() const { return *std::min_element(vr_curve.begin(), vr_curve.end()); }
  double final_sparsity() const { return sparsity_curve.back(); }
  double mean_sparsity() const {
    return std::accumulate(sparsity_curve.begin(), sparsity_curve.end(), 0.0) /
           static_cast<double>(sparsity_curve.size());
  }
  const SchemeAccount& account(Scheme s) const {
    for (const auto& a : accounts)
      if (a.scheme == s) return a;
    throw std::out_of_range("scheme was not accounted in this run");
  }
};

namespace detail {

inline double zero_fraction(const Network& net) {
  std::size_t zeros = 0, total = 0;
  for (const auto& w : net.weights) {
    zeros += static_cast<std::size_t>(std::count(w.begin(), w.end(), 0.0));
    total += w.size();
  }
  return total ? static_cast<double>(zeros) / static_cast<double>(total) : 0.0;
}

/// Store holding `w` (already on its grid) under `scheme`; zero words are
/// absent synapses for the sparse encodings.
inline Store encode_layer(const std::vector<double>& w, std::size_t n_in, std::size_t n_out, Scheme scheme,
                          int bits, int bitmap_word_bits) {
  SynapseMatrix m(n_in, n_out);
  for (std::size_t k = 0; k < w.size(); ++k)
    if (w[k] != 0.0) {
      m.weights[k] = w[k];
      m.mask[k] = 1;
    }
  switch (scheme) {
    case Scheme::Crossbar: return build_crossbar(m, bits, false);
    case Scheme::Csr: return build_csr(m, bits, false);
    case Scheme::Bitmap: return build_bitmap(m, bits, bitmap_word_bits, false);
    case Scheme::Functional: break;
  }
  throw std::invalid_argument("training supports CB, PB-CSR and PB-BMP encodings");
}

}  // namespace detail

/// Forward and backward memory traffic of one training epoch of one layer.
/// Forward: forward_lookup of presynaptic neuron j at every step where its
/// trace P_j is nonzero. Backward: one whole-layer reverse traversal per step
/// with a nonzero membrane error, plus one write per stored weight.
inline std::pair<AccessTrace, AccessTrace> epoch_layer_traffic(const Store& store, const LayerRecord& rec,
                                                               std::size_t steps, std::size_t active_steps,
                                                               BackwardMode mode) {
  AccessTrace fwd;
  for (std::size_t j = 0; j < rec.n_in; ++j) {
    std::uint64_t uses = 0;
    for (std::size_t t = 0; t < steps; ++t) uses += rec.P[t * rec.n_in + j] != 0.0;
    if (uses) fwd += forward_lookup(store, j).trace.repeated(uses);
  }
  AccessTrace bwd = backward_read_trace(store, mode).repeated(active_steps) + update_write_trace(store);
  return {fwd, bwd};
}

/// Initial weights: uniform in +-init_gain*sqrt(3/fan_in). Quantized runs
/// store them multiplied by eta on the b_w grid and use 1/eta at the synapse.
inline Network init_network(const TrainConfig& cfg) {
  Network net(cfg.task.layers, cfg.lif);
  Xorshift64Star rng(derive_seed(cfg.seed, 10));
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const std::size_t fan_in = net.sizes[l];
    const double limit = cfg.init_gain * std::sqrt(3.0 / static_cast<double>(fan_in));
    const double eta = cfg.quantized ? quant::eta(cfg.weight_bits, fan_in) : 1.0;
    net.scales[l] = 1.0 / eta;
    for (double& w : net.weights[l]) {
      w = rng.uniform(-limit, limit);
      if (cfg.quantized) w = quant::quantize_weight(w * eta, cfg.weight_bits);
    }
  }
  return net;
}

/// Trains the network on a single episode with BPTT. Deterministic for a
/// given config.
inline TrainResult train(const TrainConfig& cfg) {
  cfg.lif.validate();
  if (cfg.quantized) {
    quant::QuantConfig q{cfg.weight_bits, cfg.error_bits, cfg.membrane_bits, 1, cfg.seed};
    q.validate();
  }
  const EpisodeData data = make_episode(cfg.task);
  const auto input = data.input.as_real();
  const auto target = data.target.as_real();
  const std::size_t T = cfg.task.steps;
  const std::size_t n_out = cfg.task.layers.back();

  Network net = init_network(cfg);
  Xorshift64Star round_rng(derive_seed(cfg.seed, 20));

  TrainResult result;
  for (Scheme s : cfg.schemes) {
    SchemeAccount a;
    a.scheme = s;
    a.forward_traces.resize(net.layer_count());
    a.backward_traces.resize(net.layer_count());
    result.accounts.push_back(std::move(a));
  }

  const RunOptions run_opts{cfg.quantized ? cfg.membrane_bits : 0, false};

  for (std::size_t epoch = 0; epoch <= cfg.epochs; ++epoch) {
    const EpisodeRecord rec = net.run(input, T, run_opts);
    const double vr = van_rossum(rec.output(), target, n_out, cfg.task.tau_vr);
    result.vr_curve.push_back(vr);
    result.sparsity_curve.push_back(detail::zero_fraction(net));
    if (!std::isfinite(vr)) {
      result.diverged = true;
      break;
    }
    if (epoch == cfg.epochs) break;  // final evaluation only

    const auto out_grad = van_rossum_grad(rec.output(), target, n_out, cfg.task.tau_vr);
    const Gradients g = bptt_gradients(net, rec, out_grad);

    for (auto& acct : result.accounts) {
      AccessTrace fwd_epoch, bwd_epoch;
      for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const Store store = detail::encode_layer(net.weights[l], net.sizes[l], net.sizes[l + 1], acct.scheme,
                                                 cfg.accounted_bits(), cfg.bitmap_word_bits);
        auto [f, b] = epoch_layer_traffic(store, rec.layers[l], T, g.active_steps[l], cfg.backward_mode);
        acct.forward_traces[l] += f;
        acct.backward_traces[l] += b;
        fwd_epoch += f;
        bwd_epoch += b;
      }
      acct.forward_pJ.push_back(energy::pass_energy(fwd_epoch, cfg.cost_model, acct.scheme).active_pJ);
      acct.backward_pJ.push_back(energy::pass_energy(bwd_epoch, cfg.cost_model, acct.scheme).active_pJ);
    }

    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      auto& w = net.weights[l];
      const auto& dw = g.weights[l];
      if (cfg.quantized) {
        const auto gq = quant::quantize_error(dw, cfg.error_bits);
        const double step = quant::sigma(cfg.weight_bits);
        const auto [lo, hi] = quant::weight_range(cfg.weight_bits);
        for (std::size_t k = 0; k < w.size(); ++k) {
          const double delta = quant::stochastic_round(cfg.quantized_learning_rate * gq[k], step, round_rng);
          w[k] = std::clamp(w[k] - delta, lo, hi);
        }
      } else {
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= cfg.learning_rate * dw[k];
      }
    }
    ++result.epochs_run;
  }
  return result;
}

}  // namespace synmem::snn

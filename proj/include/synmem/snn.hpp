#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "synmem/access_trace.hpp"
#include "synmem/quantization.hpp"
#include "synmem/rng.hpp"
#include "synmem/stores.hpp"

namespace synmem::snn {

/// Decays and constants of the discrete-time LIF layer.
struct LifParams {
  double alpha = 0.5;    // synaptic trace Q decay
  double beta = 0.75;    // membrane trace P decay
  double gamma = 0.875;  // refractory R decay
  double delta = 1.0;    // refractory magnitude
  double theta = 1.0;    // firing threshold
  double surrogate_sharpness = 10.0;

  void validate() const {
    for (double d : {alpha, beta, gamma})
      if (!(d >= 0.0 && d < 1.0)) throw std::invalid_argument("LifParams: decays must lie in [0, 1)");
    if (!std::isfinite(theta) || !std::isfinite(delta)) throw std::invalid_argument("LifParams: theta/delta must be finite");
    if (!(surrogate_sharpness > 0.0)) throw std::invalid_argument("LifParams: surrogate sharpness must be > 0");
  }
};

/// Fast-sigmoid surrogate for the step derivative: 1 / (beta_s |u - theta| + 1)^2.
inline double surrogate_derivative(double u, const LifParams& p) {
  const double d = p.surrogate_sharpness * std::abs(u - p.theta) + 1.0;
  return 1.0 / (d * d);
}

/// Smooth stand-in for the step whose derivative is exactly
/// surrogate_derivative (used by gradient checks).
inline double soft_spike(double u, const LifParams& p) {
  const double x = u - p.theta;
  return 1.0 / p.surrogate_sharpness + x / (1.0 + p.surrogate_sharpness * std::abs(x));
}

inline double spike(double u, const LifParams& p) { return u >= p.theta ? 1.0 : 0.0; }

// ---------------------------------------------------------------------------
// Rasters

/// Time-major binary spike raster.
struct Raster {
  std::size_t neurons = 0;
  std::size_t steps = 0;
  std::vector<std::uint8_t> bits;

  Raster() = default;
  Raster(std::size_t n, std::size_t t) : neurons(n), steps(t), bits(n * t, 0) {}

  std::uint8_t at(std::size_t t, std::size_t i) const { return bits[t * neurons + i]; }
  std::uint8_t& at(std::size_t t, std::size_t i) { return bits[t * neurons + i]; }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }
  std::vector<double> as_real() const { return {bits.begin(), bits.end()}; }
  bool operator==(const Raster&) const = default;
};

/// Independent Bernoulli(rate_i) draw per bin; rates are per neuron.
inline Raster generate_poisson_input(std::size_t neurons, std::size_t steps, std::span<const double> rates,
                                     std::uint64_t seed) {
  if (rates.size() != neurons) throw std::invalid_argument("generate_poisson_input: one rate per neuron required");
  for (double r : rates)
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("generate_poisson_input: rates must lie in [0, 1]");
  Raster out(neurons, steps);
  Xorshift64Star rng(seed);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t i = 0; i < neurons; ++i) out.at(t, i) = rng.bernoulli(rates[i]) ? 1 : 0;
  return out;
}

inline std::vector<double> draw_input_rates(std::size_t neurons, double lo, double hi, std::uint64_t seed) {
  Xorshift64Star rng(seed);
  std::vector<double> rates(neurons);
  for (double& r : rates) r = rng.uniform(lo, hi);
  return rates;
}

/// Diagonal stripes: neuron i fires at step t when (t + slope*i + offset) is a
/// multiple of `period`. Slope and offset are picked from the seed.
inline Raster clean_pattern(std::size_t neurons, std::size_t steps, std::size_t period, std::uint64_t seed) {
  if (period == 0) throw std::invalid_argument("clean_pattern: period must be >= 1");
  const std::size_t slope = 1 + seed % 3;
  const std::size_t offset = (seed / 3) % period;
  Raster out(neurons, steps);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t i = 0; i < neurons; ++i) out.at(t, i) = (t + slope * i + offset) % period == 0 ? 1 : 0;
  return out;
}

/// Clean pattern thinned by an elementwise Bernoulli(p) mask.
inline Raster generate_target(const Raster& clean, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("generate_target: p must lie in [0, 1]");
  Raster out = clean;
  Xorshift64Star rng(seed);
  for (auto& b : out.bits) {
    if (b > 1) throw std::invalid_argument("generate_target: clean pattern must be binary");
    const bool keep = rng.bernoulli(p);
    b = (b && keep) ? 1 : 0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Van Rossum distance

/// Causal exponential filter along time, per neuron: f[t] = lambda f[t-1] + s[t].
inline std::vector<double> vr_filter(std::span<const double> spikes, std::size_t neurons, double tau) {
  const double lambda = std::exp(-1.0 / tau);
  std::vector<double> f(spikes.size());
  const std::size_t steps = neurons ? spikes.size() / neurons : 0;
  for (std::size_t i = 0; i < neurons; ++i) {
    double acc = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      acc = lambda * acc + spikes[t * neurons + i];
      f[t * neurons + i] = acc;
    }
  }
  return f;
}

inline double van_rossum(std::span<const double> s, std::span<const double> target, std::size_t neurons, double tau) {
  if (s.size() != target.size() || neurons == 0 || s.size() % neurons != 0)
    throw std::invalid_argument("van_rossum: raster shapes differ");
  if (!(tau > 0.0)) throw std::invalid_argument("van_rossum: tau must be > 0");
  const auto fs = vr_filter(s, neurons, tau);
  const auto ft = vr_filter(target, neurons, tau);
  double sum = 0.0;
  for (std::size_t k = 0; k < fs.size(); ++k) sum += (fs[k] - ft[k]) * (fs[k] - ft[k]);
  return std::sqrt(sum);
}

inline double van_rossum(const Raster& s, const Raster& t, double tau) {
  if (s.neurons != t.neurons || s.steps != t.steps) throw std::invalid_argument("van_rossum: raster shapes differ");
  const auto a = s.as_real(), b = t.as_real();
  return van_rossum(a, b, s.neurons, tau);
}

/// d(0.5 * VR^2)/dS for every bin: the filter is linear, so the gradient is
/// the filtered error run backwards through the same filter.
inline std::vector<double> van_rossum_grad(std::span<const double> s, std::span<const double> target,
                                           std::size_t neurons, double tau) {
  const double lambda = std::exp(-1.0 / tau);
  const auto fs = vr_filter(s, neurons, tau);
  const auto ft = vr_filter(target, neurons, tau);
  const std::size_t steps = s.size() / neurons;
  std::vector<double> g(s.size());
  for (std::size_t i = 0; i < neurons; ++i) {
    double acc = 0.0;
    for (std::size_t t = steps; t-- > 0;) {
      acc = (fs[t * neurons + i] - ft[t * neurons + i]) + lambda * acc;
      g[t * neurons + i] = acc;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Layer dynamics

/// One layer's state. Q and P are traces of the layer's input spikes (sized to
/// the presynaptic population); U, S and R belong to the layer's neurons.
struct LifLayerState {
  std::vector<double> U, S, R;
  std::vector<double> Q, P;
  std::vector<double> history;  // U of every step, appended in order

  LifLayerState() = default;
  LifLayerState(std::size_t n_in, std::size_t n_out)
      : U(n_out, 0.0), S(n_out, 0.0), R(n_out, 0.0), Q(n_in, 0.0), P(n_in, 0.0) {}
};

struct StepOptions {
  double weight_scale = 1.0;  // effective weight = stored word * weight_scale
  int membrane_bits = 0;      // > 0: history stored on the b_m grid
  bool soft = false;          // replace the step by soft_spike (gradient checks)
};

namespace detail {

inline void finish_step(LifLayerState& st, std::span<const double> in_spikes, const LifParams& p,
                        const StepOptions& opt) {
  for (std::size_t i = 0; i < st.U.size(); ++i) {
    st.U[i] -= p.delta * st.R[i];
    st.S[i] = opt.soft ? soft_spike(st.U[i], p) : spike(st.U[i], p);
    st.history.push_back(opt.membrane_bits > 0 ? quant::quantize_membrane(st.U[i], opt.membrane_bits) : st.U[i]);
  }
  for (std::size_t j = 0; j < st.P.size(); ++j) {
    const double q = st.Q[j];
    st.Q[j] = p.alpha * q + in_spikes[j];
    st.P[j] = p.beta * st.P[j] + q;
  }
  for (std::size_t i = 0; i < st.R.size(); ++i) st.R[i] = p.gamma * st.R[i] + st.S[i];
}

}  // namespace detail

/// Advances one layer by one step: U = W P - delta R, S = step(U - theta),
/// then Q+ = alpha Q + S_in, P+ = beta P + Q, R+ = gamma R + S. Weights are
/// fetched row by row with forward_lookup for every presynaptic neuron whose
/// trace P is nonzero; the lookups' traffic is added to `trace`.
inline void lif_step(LifLayerState& st, std::span<const double> in_spikes, const Store& weights,
                     const LifParams& p, AccessTrace* trace = nullptr, const StepOptions& opt = {}) {
  if (in_spikes.size() != st.P.size() || n_pre(weights) != st.P.size() || n_post(weights) != st.U.size())
    throw std::invalid_argument("lif_step: dimension mismatch");
  std::fill(st.U.begin(), st.U.end(), 0.0);
  for (std::size_t j = 0; j < st.P.size(); ++j) {
    if (st.P[j] == 0.0) continue;
    const LookupResult row = forward_lookup(weights, j);
    if (trace) *trace += row.trace;
    for (const auto& syn : row.synapses) st.U[syn.index] += syn.weight * opt.weight_scale * st.P[j];
  }
  detail::finish_step(st, in_spikes, p, opt);
}

/// Same update with a dense row-major (n_in x n_out) effective weight matrix.
/// Summation order matches lif_step, so both produce identical states.
inline void lif_step_dense(LifLayerState& st, std::span<const double> in_spikes, std::span<const double> weights,
                           const LifParams& p, const StepOptions& opt = {}) {
  const std::size_t n_in = st.P.size(), n_out = st.U.size();
  if (in_spikes.size() != n_in || weights.size() != n_in * n_out)
    throw std::invalid_argument("lif_step_dense: dimension mismatch");
  std::fill(st.U.begin(), st.U.end(), 0.0);
  for (std::size_t j = 0; j < n_in; ++j) {
    const double pj = st.P[j];
    if (pj == 0.0) continue;
    const double* row = weights.data() + j * n_out;
    for (std::size_t i = 0; i < n_out; ++i)
      if (row[i] != 0.0) st.U[i] += row[i] * opt.weight_scale * pj;
  }
  detail::finish_step(st, in_spikes, p, opt);
}

// ---------------------------------------------------------------------------
// Network forward pass and BPTT

/// Everything the backward pass needs from one episode of one layer.
struct LayerRecord {
  std::size_t n_in = 0, n_out = 0;
  std::vector<double> P;  // steps x n_in, trace seen by step t
  std::vector<double> U;  // steps x n_out, stored membrane history
  std::vector<double> S;  // steps x n_out
};

struct EpisodeRecord {
  std::size_t steps = 0;
  std::vector<LayerRecord> layers;
  const std::vector<double>& output() const { return layers.back().S; }
};

struct RunOptions {
  int membrane_bits = 0;
  bool soft = false;
};

/// Feed-forward stack of LIF layers with dense weights. Layer l multiplies
/// its stored weights by scales[l] at the synapse.
struct Network {
  std::vector<std::size_t> sizes;              // including the input population
  std::vector<std::vector<double>> weights;    // per layer, row-major n_in x n_out
  std::vector<double> scales;
  LifParams params;

  Network() = default;
  Network(std::vector<std::size_t> layer_sizes, const LifParams& p) : sizes(std::move(layer_sizes)), params(p) {
    if (sizes.size() < 2) throw std::invalid_argument("Network: need at least input and output layers");
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) weights.emplace_back(sizes[l] * sizes[l + 1], 0.0);
    scales.assign(weights.size(), 1.0);
  }
  std::size_t layer_count() const { return weights.size(); }

  /// Runs `steps` steps on a time-major input (steps x sizes[0]).
  EpisodeRecord run(std::span<const double> input, std::size_t steps, const RunOptions& ro = {}) const {
    if (input.size() != steps * sizes[0]) throw std::invalid_argument("Network::run: input shape mismatch");
    EpisodeRecord rec;
    rec.steps = steps;
    std::vector<LifLayerState> states;
    for (std::size_t l = 0; l < layer_count(); ++l) {
      states.emplace_back(sizes[l], sizes[l + 1]);
      rec.layers.push_back({sizes[l], sizes[l + 1], {}, {}, {}});
      rec.layers[l].P.reserve(steps * sizes[l]);
      rec.layers[l].S.reserve(steps * sizes[l + 1]);
      states[l].history.reserve(steps * sizes[l + 1]);
    }
    for (std::size_t t = 0; t < steps; ++t) {
      std::span<const double> in = input.subspan(t * sizes[0], sizes[0]);
      for (std::size_t l = 0; l < layer_count(); ++l) {
        auto& st = states[l];
        auto& r = rec.layers[l];
        r.P.insert(r.P.end(), st.P.begin(), st.P.end());
        lif_step_dense(st, in, weights[l], params, StepOptions{scales[l], ro.membrane_bits, ro.soft});
        r.S.insert(r.S.end(), st.S.begin(), st.S.end());
        in = st.S;
      }
    }
    for (std::size_t l = 0; l < layer_count(); ++l) rec.layers[l].U = std::move(states[l].history);
    return rec;
  }
};

struct Gradients {
  std::vector<std::vector<double>> weights;  // per layer, same layout as Network::weights
  /// Steps at which each layer had a nonzero membrane error (each one is a
  /// backward traversal of that layer's weight memory).
  std::vector<std::size_t> active_steps;
};

/// Reverse-time pass through the unrolled network. `output_grad` is dL/dS of
/// the last layer (steps x n_out). The step derivative is replaced by the
/// surrogate, evaluated on the stored membrane history.
inline Gradients bptt_gradients(const Network& net, const EpisodeRecord& rec, std::span<const double> output_grad) {
  const std::size_t L = net.layer_count();
  if (rec.layers.size() != L || rec.steps == 0) throw std::invalid_argument("bptt_gradients: missing history");
  const std::size_t T = rec.steps;
  const auto& p = net.params;
  Gradients g;
  g.weights.resize(L);
  g.active_steps.assign(L, 0);
  std::vector<double> ext(output_grad.begin(), output_grad.end());
  if (ext.size() != T * net.sizes[L]) throw std::invalid_argument("bptt_gradients: output gradient shape mismatch");

  for (std::size_t l = L; l-- > 0;) {
    const auto& r = rec.layers[l];
    if (r.U.size() != T * r.n_out || r.P.size() != T * r.n_in)
      throw std::invalid_argument("bptt_gradients: missing history");
    const auto& W = net.weights[l];
    const double scale = net.scales[l];
    auto& dW = g.weights[l];
    dW.assign(r.n_in * r.n_out, 0.0);

    std::vector<double> bU(T * r.n_out, 0.0);
    std::vector<double> bR_next(r.n_out, 0.0);
    for (std::size_t t = T; t-- > 0;) {
      bool any = false;
      for (std::size_t i = 0; i < r.n_out; ++i) {
        const double bS = ext[t * r.n_out + i] + bR_next[i];
        const double bu = bS * surrogate_derivative(r.U[t * r.n_out + i], p);
        bU[t * r.n_out + i] = bu;
        bR_next[i] = p.gamma * bR_next[i] - p.delta * bu;
        any = any || bu != 0.0;
      }
      if (any) ++g.active_steps[l];
    }

    for (std::size_t t = 0; t < T; ++t) {
      const double* bu = bU.data() + t * r.n_out;
      for (std::size_t j = 0; j < r.n_in; ++j) {
        const double pj = r.P[t * r.n_in + j] * scale;
        if (pj == 0.0) continue;
        double* row = dW.data() + j * r.n_out;
        for (std::size_t i = 0; i < r.n_out; ++i) row[i] += pj * bu[i];
      }
    }

    if (l == 0) break;
    // Error reaching the previous layer's spikes through P and Q.
    std::vector<double> below(T * r.n_in, 0.0);
    std::vector<double> bP_next(r.n_in, 0.0), bQ_next(r.n_in, 0.0);
    for (std::size_t t = T; t-- > 0;) {
      const double* bu = bU.data() + t * r.n_out;
      for (std::size_t j = 0; j < r.n_in; ++j) {
        double direct = 0.0;
        const double* row = W.data() + j * r.n_out;
        for (std::size_t i = 0; i < r.n_out; ++i) direct += row[i] * bu[i];
        direct *= scale;
        below[t * r.n_in + j] = bQ_next[j];
        const double bQ = bP_next[j] + p.alpha * bQ_next[j];
        const double bP = direct + p.beta * bP_next[j];
        bQ_next[j] = bQ;
        bP_next[j] = bP;
      }
    }
    ext = std::move(below);
  }
  return g;
}

/// 0.5 * VR^2 of the network output against `target`, for gradient checks.
inline double episode_loss(const Network& net, std::span<const double> input, std::span<const double> target,
                           std::size_t steps, double tau, const RunOptions& ro = {}) {
  const auto rec = net.run(input, steps, ro);
  const double vr = van_rossum(rec.output(), target, net.sizes.back(), tau);
  return 0.5 * vr * vr;
}

}  // namespace synmem::snn

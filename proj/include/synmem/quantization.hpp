#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "synmem/rng.hpp"

namespace synmem::quant {

struct QuantConfig {
  int weight_bits = 8;     // b_w
  int error_bits = 8;      // b_e
  int membrane_bits = 16;  // b_m
  std::size_t fan_in = 1;
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (weight_bits < 2 || error_bits < 2 || membrane_bits < 2)
      throw std::invalid_argument("quantization bit widths must be >= 2");
    if (fan_in < 1) throw std::invalid_argument("fan_in must be >= 1");
  }
};

/// Grid step 2^(1-b).
inline double sigma(int bits) {
  if (bits < 1) throw std::invalid_argument("sigma: bits must be >= 1");
  return std::ldexp(1.0, 1 - bits);
}

/// Symmetric feasible weight interval (-1 + sigma, 1 - sigma).
inline std::pair<double, double> weight_range(int weight_bits) {
  if (weight_bits < 2) throw std::invalid_argument("weight_range: weight_bits must be >= 2");
  const double s = sigma(weight_bits);
  return {-1.0 + s, 1.0 - s};
}

/// Power-of-two layer scale that maps a uniform sqrt(3/fan_in) initialization
/// onto the representable weight range.
inline double eta(int weight_bits, std::size_t fan_in) {
  if (fan_in < 1) throw std::invalid_argument("eta: fan_in must be >= 1");
  const double s = sigma(weight_bits);
  const double numerator = (1.0 / s - 0.5) * s;
  const double denominator = std::sqrt(3.0 / static_cast<double>(fan_in));
  return std::ldexp(1.0, static_cast<int>(std::round(std::log2(numerator / denominator))));
}

/// Nearest multiple of `step`, ties away from zero.
inline double round_to_grid(double x, double step) { return std::round(x / step) * step; }

inline double quantize_weight(double w, int weight_bits) {
  const auto [lo, hi] = weight_range(weight_bits);
  return round_to_grid(std::clamp(w, lo, hi), sigma(weight_bits));
}

inline std::vector<double> quantize_weights(std::span<const double> w, int weight_bits) {
  std::vector<double> out(w.size());
  std::transform(w.begin(), w.end(), out.begin(),
                 [weight_bits](double v) { return quantize_weight(v, weight_bits); });
  return out;
}

/// Normalize by max |err|, then quantize onto the b_e grid clipped to [-1, 1].
/// An all-zero input maps to all zeros.
inline std::vector<double> quantize_error(std::span<const double> err, int error_bits) {
  double peak = 0.0;
  for (double e : err) peak = std::max(peak, std::abs(e));
  std::vector<double> out(err.size(), 0.0);
  if (peak == 0.0 || !std::isfinite(peak)) return out;
  const double step = sigma(error_bits);
  for (std::size_t i = 0; i < err.size(); ++i)
    out[i] = std::clamp(round_to_grid(err[i] / peak, step), -1.0, 1.0);
  return out;
}

/// Unbiased rounding of x onto multiples of `step`.
inline double stochastic_round(double x, double step, Xorshift64Star& rng) {
  if (!(step > 0.0)) throw std::invalid_argument("stochastic_round: step must be > 0");
  const double q = x / step;
  const double lower = std::floor(q);
  const double frac = q - lower;
  // Draw even when on-grid so the sequence length does not depend on the data.
  const double u = rng.uniform();
  return (u < frac ? lower + 1.0 : lower) * step;
}

/// Fixed-point grid used for stored membrane history: step 2^-(b_m/2),
/// saturating at +-2^(b_m - b_m/2 - 1).
inline double quantize_membrane(double u, int membrane_bits) {
  const int frac_bits = membrane_bits / 2;
  const double step = std::ldexp(1.0, -frac_bits);
  const double limit = std::ldexp(1.0, membrane_bits - frac_bits - 1) - step;
  return round_to_grid(std::clamp(u, -limit, limit), step);
}

}  // namespace synmem::quant

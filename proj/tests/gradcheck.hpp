#pragma once

// Finite-difference check of the BPTT gradients on small random networks run
// with the smooth spike, shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <vector>

#include "synmem/rng.hpp"
#include "synmem/snn.hpp"

namespace gradcheck {

struct Case {
  synmem::snn::Network net;
  std::vector<double> input, target;
  std::size_t steps = 0;
  double tau = 3.0;
};

/// Between two and three layers, at most 10 neurons in total, at most 10 steps.
inline Case random_case(std::uint64_t seed) {
  synmem::Xorshift64Star rng(seed);
  std::vector<std::size_t> sizes;
  const std::size_t layers = 2 + rng.below(2);
  std::size_t left = 10;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t most = std::min<std::size_t>(4, left - (layers - l - 1));
    sizes.push_back(1 + rng.below(most));
    left -= sizes.back();
  }
  synmem::snn::LifParams p;
  p.surrogate_sharpness = rng.uniform(1.0, 10.0);
  p.theta = rng.uniform(0.3, 1.5);
  Case c{synmem::snn::Network(sizes, p), {}, {}, 3 + rng.below(8), rng.uniform(1.0, 5.0)};
  for (std::size_t l = 0; l < c.net.layer_count(); ++l) {
    c.net.scales[l] = rng.uniform(0.5, 2.0);
    for (double& w : c.net.weights[l]) w = rng.uniform(-1.5, 1.5);
  }
  for (std::size_t k = 0; k < c.steps * sizes.front(); ++k) c.input.push_back(rng.bernoulli(0.4) ? 1.0 : 0.0);
  for (std::size_t k = 0; k < c.steps * sizes.back(); ++k) c.target.push_back(rng.bernoulli(0.3) ? 1.0 : 0.0);
  return c;
}

inline std::vector<double> analytic(const Case& c) {
  const synmem::snn::RunOptions soft{0, true};
  const auto rec = c.net.run(c.input, c.steps, soft);
  const auto og = synmem::snn::van_rossum_grad(rec.output(), c.target, c.net.sizes.back(), c.tau);
  const auto g = synmem::snn::bptt_gradients(c.net, rec, og);
  std::vector<double> flat;
  for (const auto& w : g.weights) flat.insert(flat.end(), w.begin(), w.end());
  return flat;
}

inline std::vector<double> numeric(const Case& c, double h = 1e-6) {
  const synmem::snn::RunOptions soft{0, true};
  synmem::snn::Network net = c.net;
  std::vector<double> flat;
  for (auto& layer : net.weights)
    for (double& w : layer) {
      const double w0 = w;
      w = w0 + h;
      const double up = synmem::snn::episode_loss(net, c.input, c.target, c.steps, c.tau, soft);
      w = w0 - h;
      const double down = synmem::snn::episode_loss(net, c.input, c.target, c.steps, c.tau, soft);
      w = w0;
      flat.push_back((up - down) / (2 * h));
    }
  return flat;
}

/// ||a - b|| / max(||a||, ||b||); 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff += (a[k] - b[k]) * (a[k] - b[k]);
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

}  // namespace gradcheck

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "synmem/quantization.hpp"
#include "synmem/rng.hpp"

namespace synmem {

/// Dense logical weight matrix, rows = presynaptic, columns = postsynaptic.
/// The mask marks which synapses exist; absent synapses carry weight 0.
struct SynapseMatrix {
  std::size_t n_pre = 0;
  std::size_t n_post = 0;
  std::vector<double> weights;      // row-major n_pre x n_post
  std::vector<std::uint8_t> mask;   // row-major n_pre x n_post

  SynapseMatrix() = default;
  SynapseMatrix(std::size_t pre, std::size_t post)
      : n_pre(pre), n_post(post), weights(pre * post, 0.0), mask(pre * post, 0) {}

  std::size_t index(std::size_t i, std::size_t j) const { return i * n_post + j; }
  double weight(std::size_t i, std::size_t j) const { return weights[index(i, j)]; }
  bool connected(std::size_t i, std::size_t j) const { return mask[index(i, j)] != 0; }

  void set(std::size_t i, std::size_t j, double w) {
    weights[index(i, j)] = w;
    mask[index(i, j)] = 1;
  }
  void clear(std::size_t i, std::size_t j) {
    weights[index(i, j)] = 0.0;
    mask[index(i, j)] = 0;
  }

  std::size_t nnz() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  }
  double density() const {
    const std::size_t total = n_pre * n_post;
    return total == 0 ? 0.0 : static_cast<double>(nnz()) / static_cast<double>(total);
  }

  /// Throws if the masked-zero invariant or the shape is violated.
  void validate() const {
    if (weights.size() != n_pre * n_post || mask.size() != n_pre * n_post)
      throw std::invalid_argument("SynapseMatrix: storage does not match dimensions");
    for (std::size_t k = 0; k < mask.size(); ++k)
      if (!mask[k] && weights[k] != 0.0)
        throw std::invalid_argument("SynapseMatrix: absent synapse with nonzero weight");
  }
};

/// Random matrix with exactly round(density * n_pre * n_post) synapses, chosen
/// by uniform sampling without replacement. Weights are drawn uniformly from
/// (-1, 1) and, when `weight_bits` > 0, snapped onto that grid with zero
/// avoided so every present synapse carries a nonzero word.
inline SynapseMatrix random_synapse_matrix(std::size_t n_pre, std::size_t n_post, double density,
                                           std::uint64_t seed, int weight_bits = 0) {
  if (density < 0.0 || density > 1.0) throw std::invalid_argument("density must be in [0, 1]");
  SynapseMatrix m(n_pre, n_post);
  Xorshift64Star rng(seed);
  const std::size_t total = n_pre * n_post;
  const auto k = static_cast<std::size_t>(std::llround(density * static_cast<double>(total)));
  std::vector<std::size_t> slots(total);
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  for (std::size_t s = 0; s < k; ++s) {
    const std::size_t pick = s + rng.below(total - s);
    std::swap(slots[s], slots[pick]);
    double w = rng.uniform(-1.0, 1.0);
    if (weight_bits > 0) {
      w = quant::quantize_weight(w, weight_bits);
      if (w == 0.0) w = quant::sigma(weight_bits);
    } else if (w == 0.0) {
      w = 0.5;
    }
    m.weights[slots[s]] = w;
    m.mask[slots[s]] = 1;
  }
  return m;
}

}  // namespace synmem

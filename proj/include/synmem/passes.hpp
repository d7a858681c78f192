#pragma once

#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "synmem/access_trace.hpp"
#include "synmem/stores.hpp"

namespace synmem {

/// How a whole-layer backward traversal reaches every postsynaptic column.
enum class BackwardMode {
  /// One streaming pass over the encoded structure serves all columns: each
  /// pointer, index, bitmap word and weight is read exactly once.
  Batched,
  /// One independent reverse_lookup per postsynaptic neuron.
  PerColumn,
};

constexpr std::string_view backward_mode_name(BackwardMode m) {
  return m == BackwardMode::Batched ? "batched" : "per-column";
}

inline BackwardMode parse_backward_mode(std::string_view s) {
  if (s == "batched") return BackwardMode::Batched;
  if (s == "per-column") return BackwardMode::PerColumn;
  throw std::invalid_argument("unknown backward mode '" + std::string(s) + "'");
}

/// Trace of forward_lookup(pre) for every presynaptic neuron, in order.
inline std::vector<AccessTrace> forward_row_traces(const Store& s) {
  std::vector<AccessTrace> out;
  const std::size_t n = n_pre(s);
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(forward_lookup(s, i).trace);
  return out;
}

/// Forward pass of a layer with every presynaptic neuron active.
inline AccessTrace forward_pass_trace(const Store& s) {
  if (const auto* cb = std::get_if<CrossbarStore>(&s)) {
    AccessTrace t;
    t.read(cb->weight_bank(), static_cast<std::uint64_t>(cb->n_pre) * cb->n_post);
    return t;
  }
  AccessTrace t;
  const std::size_t n = n_pre(s);
  for (std::size_t i = 0; i < n; ++i) t += forward_lookup(s, i).trace;
  return t;
}

namespace detail {

inline AccessTrace backward_reads(const CrossbarStore& s, BackwardMode) {
  AccessTrace t;
  t.read(s.weight_bank(), static_cast<std::uint64_t>(s.n_pre) * s.n_post);
  return t;
}

inline AccessTrace backward_reads(const CsrStore& s, BackwardMode mode) {
  AccessTrace t;
  const std::uint64_t cols = mode == BackwardMode::PerColumn ? s.n_post : 1;
  t.read(s.row_ptr_bank(), cols * (s.n_pre + 1));
  t.read(s.col_idx_bank(), cols * s.nnz());
  t.read(s.weight_bank(), s.nnz());
  return t;
}

inline AccessTrace backward_reads(const BitmapStore& s, BackwardMode mode) {
  AccessTrace t;
  if (mode == BackwardMode::PerColumn) {
    // Column j reads words 0..j/word_bits of every row.
    std::uint64_t words = 0;
    for (std::size_t j = 0; j < s.n_post; ++j) words += j / s.word_bits + 1;
    t.read(s.row_ptr_bank(), static_cast<std::uint64_t>(s.n_post) * s.n_pre);
    t.read(s.bitmap_bank(), words * s.n_pre);
  } else {
    t.read(s.row_ptr_bank(), s.n_pre);
    t.read(s.bitmap_bank(), static_cast<std::uint64_t>(s.n_pre) * s.words_per_row);
  }
  t.read(s.weight_bank(), s.nnz());
  return t;
}

inline AccessTrace backward_reads(const FunctionalStore& s, BackwardMode) {
  // Nothing to amortize: each column is generated by the address logic.
  AccessTrace t;
  const auto& g = s.geometry;
  for (std::size_t j = 0; j < g.n_post(); ++j) {
    const auto addrs = conv_reverse_addresses(g, neuron_coord(g, j), &t);
    t.read(s.weight_bank(), addrs.size());
  }
  return t;
}

}  // namespace detail

/// Reads of a whole-layer backward traversal (no writes).
inline AccessTrace backward_read_trace(const Store& s, BackwardMode mode = BackwardMode::Batched) {
  return std::visit([mode](const auto& st) { return detail::backward_reads(st, mode); }, s);
}

/// Weight update at the end of a backward pass: one batched write per stored
/// weight word.
inline AccessTrace update_write_trace(const Store& s) {
  AccessTrace t;
  std::visit([&t](const auto& st) {
    const BankInfo bank = st.weight_bank();
    t.write(bank, bank.word_bits ? bank.capacity_bits / bank.word_bits : 0);
  }, s);
  return t;
}

inline AccessTrace backward_pass_trace(const Store& s, BackwardMode mode = BackwardMode::Batched) {
  return backward_read_trace(s, mode) + update_write_trace(s);
}

/// Pass traces of a crossbar with the given shape, without allocating it.
inline AccessTrace crossbar_forward_trace(std::size_t pre, std::size_t post, int weight_bits) {
  CrossbarStore shape{pre, post, weight_bits, true, {}};
  AccessTrace t;
  t.read(shape.weight_bank(), static_cast<std::uint64_t>(pre) * post);
  return t;
}

inline AccessTrace crossbar_backward_trace(std::size_t pre, std::size_t post, int weight_bits) {
  CrossbarStore shape{pre, post, weight_bits, true, {}};
  AccessTrace t;
  t.read(shape.weight_bank(), static_cast<std::uint64_t>(pre) * post);
  t.write(shape.weight_bank(), static_cast<std::uint64_t>(pre) * post);
  return t;
}

}  // namespace synmem

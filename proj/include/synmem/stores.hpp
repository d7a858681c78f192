#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "synmem/access_trace.hpp"
#include "synmem/quantization.hpp"
#include "synmem/synapse_matrix.hpp"

namespace synmem {

enum class Scheme : std::uint8_t { Crossbar = 0, Csr = 1, Bitmap = 2, Functional = 3 };

constexpr std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Crossbar: return "CB";
    case Scheme::Csr: return "PB-CSR";
    case Scheme::Bitmap: return "PB-BMP";
    case Scheme::Functional: return "Functional";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view name) {
  for (auto s : {Scheme::Crossbar, Scheme::Csr, Scheme::Bitmap, Scheme::Functional})
    if (scheme_name(s) == name) return s;
  throw std::invalid_argument("unknown scheme '" + std::string(name) + "'");
}

/// ceil(log2(n)); 0 for n <= 1.
constexpr int ceil_log2(std::uint64_t n) {
  return n <= 1 ? 0 : static_cast<int>(std::bit_width(n - 1));
}

namespace detail {

inline double encode_weight(double w, int weight_bits, bool quantize) {
  return (quantize && weight_bits >= 2) ? quant::quantize_weight(w, weight_bits) : w;
}

inline void require_bits(int weight_bits) {
  if (weight_bits < 1) throw std::invalid_argument("weight bit width must be >= 1");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Store types

struct CrossbarStore {
  std::size_t n_pre = 0;
  std::size_t n_post = 0;
  int weight_bits = 8;
  bool quantized = true;  // weights snapped to the b_w grid on write
  std::vector<double> weights;  // row-major, absent synapses hold 0

  BankInfo weight_bank() const {
    return {Bank::Weights, static_cast<std::uint64_t>(n_pre) * n_post * weight_bits,
            static_cast<std::uint32_t>(weight_bits)};
  }
};

struct CsrStore {
  std::size_t n_pre = 0;
  std::size_t n_post = 0;
  int weight_bits = 8;
  bool quantized = true;  // weights snapped to the b_w grid on write
  int pointer_bits = 0;  // ceil(log2(nnz + 1))
  int column_bits = 0;   // ceil(log2(n_post))
  std::vector<std::uint32_t> row_ptr;  // n_pre + 1
  std::vector<std::uint32_t> col_idx;  // nnz
  std::vector<double> weights;         // nnz

  std::size_t nnz() const { return col_idx.size(); }

  BankInfo row_ptr_bank() const {
    return {Bank::RowPtr, static_cast<std::uint64_t>(n_pre + 1) * pointer_bits,
            static_cast<std::uint32_t>(pointer_bits)};
  }
  BankInfo col_idx_bank() const {
    return {Bank::ColIdx, static_cast<std::uint64_t>(nnz()) * column_bits,
            static_cast<std::uint32_t>(column_bits)};
  }
  BankInfo weight_bank() const {
    return {Bank::Weights, static_cast<std::uint64_t>(nnz()) * weight_bits,
            static_cast<std::uint32_t>(weight_bits)};
  }
};

struct BitmapStore {
  std::size_t n_pre = 0;
  std::size_t n_post = 0;
  int weight_bits = 8;
  bool quantized = true;  // weights snapped to the b_w grid on write
  int word_bits = 32;     // bitmap memory word width, 1..64
  int pointer_bits = 0;   // ceil(log2(nnz + 1))
  std::size_t words_per_row = 0;
  std::vector<std::uint32_t> row_ptr;  // n_pre, offset of each row's first weight
  std::vector<std::uint64_t> bitmap;   // n_pre * words_per_row, low word_bits used
  std::vector<double> weights;         // nnz, bitmap order

  std::size_t nnz() const { return weights.size(); }

  bool bit(std::size_t i, std::size_t j) const {
    const std::uint64_t w = bitmap[i * words_per_row + j / word_bits];
    return (w >> (j % word_bits)) & 1U;
  }
  /// Number of set bits in row i strictly before column j.
  std::size_t rank(std::size_t i, std::size_t j) const {
    std::size_t r = 0;
    const std::size_t word = j / word_bits;
    for (std::size_t k = 0; k < word; ++k)
      r += static_cast<std::size_t>(std::popcount(bitmap[i * words_per_row + k]));
    const std::size_t offset = j % word_bits;
    if (offset) {
      const std::uint64_t below = bitmap[i * words_per_row + word] & ((std::uint64_t{1} << offset) - 1);
      r += static_cast<std::size_t>(std::popcount(below));
    }
    return r;
  }

  BankInfo row_ptr_bank() const {
    return {Bank::RowPtr, static_cast<std::uint64_t>(n_pre) * pointer_bits,
            static_cast<std::uint32_t>(pointer_bits)};
  }
  BankInfo bitmap_bank() const {
    return {Bank::Bitmap, static_cast<std::uint64_t>(n_pre) * words_per_row * word_bits,
            static_cast<std::uint32_t>(word_bits)};
  }
  BankInfo weight_bank() const {
    return {Bank::Weights, static_cast<std::uint64_t>(nnz()) * weight_bits,
            static_cast<std::uint32_t>(weight_bits)};
  }
};

/// Same-padded, stride-1 convolution. Kernel extents must be odd so that the
/// offsets are centred on the presynaptic neuron.
struct ConvGeometry {
  std::size_t in_h = 1, in_w = 1;
  std::size_t k_h = 1, k_w = 1;
  std::size_t c_in = 1, c_out = 1;

  void validate() const {
    if (!in_h || !in_w || !k_h || !k_w || !c_in || !c_out)
      throw std::invalid_argument("ConvGeometry: all extents must be >= 1");
    if (k_h % 2 == 0 || k_w % 2 == 0)
      throw std::invalid_argument("ConvGeometry: kernel extents must be odd");
  }
  std::size_t n_pre() const { return c_in * in_h * in_w; }
  std::size_t n_post() const { return c_out * in_h * in_w; }
  std::size_t kernel_size() const { return c_in * c_out * k_h * k_w; }
  std::ptrdiff_t half_h() const { return static_cast<std::ptrdiff_t>(k_h / 2); }
  std::ptrdiff_t half_w() const { return static_cast<std::ptrdiff_t>(k_w / 2); }

  bool operator==(const ConvGeometry&) const = default;
};

/// Spatial position plus channel of a neuron in a conv feature map.
struct NeuronCoord {
  std::size_t r = 0, c = 0, ch = 0;
  bool operator==(const NeuronCoord&) const = default;
  auto operator<=>(const NeuronCoord&) const = default;
};

/// Channel-major flat id: (ch * in_h + r) * in_w + c.
inline std::size_t neuron_id(const ConvGeometry& g, NeuronCoord n) {
  return (n.ch * g.in_h + n.r) * g.in_w + n.c;
}
inline NeuronCoord neuron_coord(const ConvGeometry& g, std::size_t id) {
  return {(id / g.in_w) % g.in_h, id % g.in_w, id / (g.in_w * g.in_h)};
}

/// Kernel word index for (ic, oc, row tap, column tap), taps in [0, k).
inline std::size_t kernel_index(const ConvGeometry& g, std::size_t ic, std::size_t oc,
                                std::size_t tap_r, std::size_t tap_c) {
  return ((ic * g.c_out + oc) * g.k_h + tap_r) * g.k_w + tap_c;
}

struct FunctionalStore {
  ConvGeometry geometry;
  int weight_bits = 8;
  bool quantized = true;  // weights snapped to the b_w grid on write
  std::vector<double> kernel;  // indexed by kernel_index

  BankInfo weight_bank() const {
    return {Bank::Weights, static_cast<std::uint64_t>(kernel.size()) * weight_bits,
            static_cast<std::uint32_t>(weight_bits)};
  }
};

using Store = std::variant<CrossbarStore, CsrStore, BitmapStore, FunctionalStore>;

inline Scheme scheme_of(const Store& s) { return static_cast<Scheme>(s.index()); }

// ---------------------------------------------------------------------------
// Builders

inline CrossbarStore build_crossbar(const SynapseMatrix& m, int weight_bits, bool quantize = true) {
  detail::require_bits(weight_bits);
  CrossbarStore s{m.n_pre, m.n_post, weight_bits, quantize, std::vector<double>(m.n_pre * m.n_post, 0.0)};
  for (std::size_t k = 0; k < s.weights.size(); ++k)
    if (m.mask[k]) s.weights[k] = detail::encode_weight(m.weights[k], weight_bits, quantize);
  return s;
}

inline CsrStore build_csr(const SynapseMatrix& m, int weight_bits, bool quantize = true) {
  detail::require_bits(weight_bits);
  CsrStore s;
  s.n_pre = m.n_pre;
  s.n_post = m.n_post;
  s.weight_bits = weight_bits;
  s.quantized = quantize;
  s.row_ptr.assign(m.n_pre + 1, 0);
  for (std::size_t i = 0; i < m.n_pre; ++i) {
    for (std::size_t j = 0; j < m.n_post; ++j) {
      if (!m.connected(i, j)) continue;
      s.col_idx.push_back(static_cast<std::uint32_t>(j));
      s.weights.push_back(detail::encode_weight(m.weight(i, j), weight_bits, quantize));
    }
    s.row_ptr[i + 1] = static_cast<std::uint32_t>(s.col_idx.size());
  }
  s.pointer_bits = ceil_log2(s.nnz() + 1);
  s.column_bits = ceil_log2(m.n_post);
  return s;
}

inline BitmapStore build_bitmap(const SynapseMatrix& m, int weight_bits, int word_bits = 32,
                                bool quantize = true) {
  detail::require_bits(weight_bits);
  if (word_bits < 1 || word_bits > 64) throw std::invalid_argument("bitmap word width must be in [1, 64]");
  BitmapStore s;
  s.n_pre = m.n_pre;
  s.n_post = m.n_post;
  s.weight_bits = weight_bits;
  s.quantized = quantize;
  s.word_bits = word_bits;
  s.words_per_row = (m.n_post + word_bits - 1) / word_bits;
  s.row_ptr.assign(m.n_pre, 0);
  s.bitmap.assign(m.n_pre * s.words_per_row, 0);
  for (std::size_t i = 0; i < m.n_pre; ++i) {
    s.row_ptr[i] = static_cast<std::uint32_t>(s.weights.size());
    for (std::size_t j = 0; j < m.n_post; ++j) {
      if (!m.connected(i, j)) continue;
      s.bitmap[i * s.words_per_row + j / word_bits] |= std::uint64_t{1} << (j % word_bits);
      s.weights.push_back(detail::encode_weight(m.weight(i, j), weight_bits, quantize));
    }
  }
  s.pointer_bits = ceil_log2(s.nnz() + 1);
  return s;
}

inline FunctionalStore build_functional(const ConvGeometry& g, std::span<const double> kernel,
                                        int weight_bits, bool quantize = true) {
  g.validate();
  detail::require_bits(weight_bits);
  if (kernel.size() != g.kernel_size())
    throw std::invalid_argument("build_functional: kernel size does not match geometry");
  FunctionalStore s{g, weight_bits, quantize, {}};
  s.kernel.reserve(kernel.size());
  for (double w : kernel) s.kernel.push_back(detail::encode_weight(w, weight_bits, quantize));
  return s;
}

// ---------------------------------------------------------------------------
// Convolution address logic

struct ConvAddress {
  NeuronCoord neuron;
  std::size_t kernel_index = 0;
  bool operator==(const ConvAddress&) const = default;
  auto operator<=>(const ConvAddress&) const = default;
};

namespace detail {

inline void check_coord(const ConvGeometry& g, NeuronCoord n, std::size_t channels) {
  if (n.r >= g.in_h || n.c >= g.in_w || n.ch >= channels)
    throw std::out_of_range("conv neuron coordinate out of range");
}

}  // namespace detail

/// Fan-out of a presynaptic neuron: post = pre + offset. Every (oc, offset)
/// candidate costs one logic evaluation; only in-bounds candidates are emitted.
inline std::vector<ConvAddress> conv_forward_addresses(const ConvGeometry& g, NeuronCoord pre,
                                                       AccessTrace* trace = nullptr) {
  detail::check_coord(g, pre, g.c_in);
  std::vector<ConvAddress> out;
  out.reserve(g.k_h * g.k_w * g.c_out);
  const auto h = static_cast<std::ptrdiff_t>(g.in_h), w = static_cast<std::ptrdiff_t>(g.in_w);
  for (std::size_t oc = 0; oc < g.c_out; ++oc) {
    for (std::size_t tr = 0; tr < g.k_h; ++tr) {
      const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(pre.r) + static_cast<std::ptrdiff_t>(tr) - g.half_h();
      for (std::size_t tc = 0; tc < g.k_w; ++tc) {
        const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(pre.c) + static_cast<std::ptrdiff_t>(tc) - g.half_w();
        if (trace) trace->logic();
        if (r < 0 || r >= h || c < 0 || c >= w) continue;
        out.push_back({{static_cast<std::size_t>(r), static_cast<std::size_t>(c), oc},
                       kernel_index(g, pre.ch, oc, tr, tc)});
      }
    }
  }
  return out;
}

/// Fan-in of a postsynaptic neuron: pre = post - offset.
inline std::vector<ConvAddress> conv_reverse_addresses(const ConvGeometry& g, NeuronCoord post,
                                                       AccessTrace* trace = nullptr) {
  detail::check_coord(g, post, g.c_out);
  std::vector<ConvAddress> out;
  out.reserve(g.k_h * g.k_w * g.c_in);
  const auto h = static_cast<std::ptrdiff_t>(g.in_h), w = static_cast<std::ptrdiff_t>(g.in_w);
  for (std::size_t ic = 0; ic < g.c_in; ++ic) {
    for (std::size_t tr = 0; tr < g.k_h; ++tr) {
      const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(post.r) - (static_cast<std::ptrdiff_t>(tr) - g.half_h());
      for (std::size_t tc = 0; tc < g.k_w; ++tc) {
        const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(post.c) - (static_cast<std::ptrdiff_t>(tc) - g.half_w());
        if (trace) trace->logic();
        if (r < 0 || r >= h || c < 0 || c >= w) continue;
        out.push_back({{static_cast<std::size_t>(r), static_cast<std::size_t>(c), ic},
                       kernel_index(g, ic, post.ch, tr, tc)});
      }
    }
  }
  return out;
}

/// Number of valid (pre, post) pairs of a same-padded conv layer.
inline std::uint64_t conv_connection_count(const ConvGeometry& g) {
  auto span = [](std::size_t extent, std::size_t k) {
    std::uint64_t n = 0;
    const auto half = static_cast<std::ptrdiff_t>(k / 2);
    for (std::ptrdiff_t d = -half; d <= half; ++d) {
      const auto ad = static_cast<std::size_t>(d < 0 ? -d : d);
      if (ad < extent) n += extent - ad;
    }
    return n;
  };
  return span(g.in_h, g.k_h) * span(g.in_w, g.k_w) * g.c_in * g.c_out;
}

// ---------------------------------------------------------------------------
// Lookups

struct Synapse {
  std::size_t index = 0;  // post id for forward lookups, pre id for reverse
  double weight = 0.0;
  bool operator==(const Synapse&) const = default;
  auto operator<=>(const Synapse&) const = default;
};

struct LookupResult {
  std::vector<Synapse> synapses;
  AccessTrace trace;
};

inline std::size_t n_pre(const Store& s) {
  return std::visit(
      [](const auto& st) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(st)>, FunctionalStore>)
          return st.geometry.n_pre();
        else
          return st.n_pre;
      },
      s);
}

inline std::size_t n_post(const Store& s) {
  return std::visit(
      [](const auto& st) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(st)>, FunctionalStore>)
          return st.geometry.n_post();
        else
          return st.n_post;
      },
      s);
}

inline int weight_bits(const Store& s) {
  return std::visit([](const auto& st) { return st.weight_bits; }, s);
}

namespace detail {

inline void check_index(std::size_t idx, std::size_t n, const char* what) {
  if (idx >= n) throw std::out_of_range(std::string(what) + " index out of range");
}

inline LookupResult forward(const CrossbarStore& s, std::size_t pre) {
  check_index(pre, s.n_pre, "presynaptic");
  LookupResult r;
  for (std::size_t j = 0; j < s.n_post; ++j) {
    const double w = s.weights[pre * s.n_post + j];
    if (w != 0.0) r.synapses.push_back({j, w});
  }
  r.trace.read(s.weight_bank(), s.n_post);
  return r;
}

inline LookupResult forward(const CsrStore& s, std::size_t pre) {
  check_index(pre, s.n_pre, "presynaptic");
  LookupResult r;
  r.trace.read(s.row_ptr_bank(), 2);
  const auto begin = s.row_ptr[pre], end = s.row_ptr[pre + 1];
  for (auto k = begin; k < end; ++k) r.synapses.push_back({s.col_idx[k], s.weights[k]});
  r.trace.read(s.col_idx_bank(), end - begin);
  r.trace.read(s.weight_bank(), end - begin);
  return r;
}

inline LookupResult forward(const BitmapStore& s, std::size_t pre) {
  check_index(pre, s.n_pre, "presynaptic");
  LookupResult r;
  r.trace.read(s.row_ptr_bank(), 1);
  r.trace.read(s.bitmap_bank(), s.words_per_row);
  std::size_t slot = s.row_ptr[pre];
  for (std::size_t k = 0; k < s.words_per_row; ++k) {
    std::uint64_t word = s.bitmap[pre * s.words_per_row + k];
    while (word) {
      const auto bit = static_cast<std::size_t>(std::countr_zero(word));
      word &= word - 1;
      r.synapses.push_back({k * s.word_bits + bit, s.weights[slot++]});
    }
  }
  r.trace.read(s.weight_bank(), r.synapses.size());
  return r;
}

inline LookupResult forward(const FunctionalStore& s, std::size_t pre) {
  const auto& g = s.geometry;
  check_index(pre, g.n_pre(), "presynaptic");
  LookupResult r;
  for (const auto& a : conv_forward_addresses(g, neuron_coord(g, pre), &r.trace))
    r.synapses.push_back({neuron_id(g, a.neuron), s.kernel[a.kernel_index]});
  r.trace.read(s.weight_bank(), r.synapses.size());
  return r;
}

inline LookupResult reverse(const CrossbarStore& s, std::size_t post) {
  check_index(post, s.n_post, "postsynaptic");
  LookupResult r;
  for (std::size_t i = 0; i < s.n_pre; ++i) {
    const double w = s.weights[i * s.n_post + post];
    if (w != 0.0) r.synapses.push_back({i, w});
  }
  r.trace.read(s.weight_bank(), s.n_pre);
  return r;
}

inline LookupResult reverse(const CsrStore& s, std::size_t post) {
  check_index(post, s.n_post, "postsynaptic");
  LookupResult r;
  r.trace.read(s.row_ptr_bank(), s.n_pre + 1);
  r.trace.read(s.col_idx_bank(), s.nnz());
  for (std::size_t i = 0; i < s.n_pre; ++i)
    for (auto k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k)
      if (s.col_idx[k] == post) r.synapses.push_back({i, s.weights[k]});
  r.trace.read(s.weight_bank(), r.synapses.size());
  return r;
}

inline LookupResult reverse(const BitmapStore& s, std::size_t post) {
  check_index(post, s.n_post, "postsynaptic");
  LookupResult r;
  r.trace.read(s.row_ptr_bank(), s.n_pre);
  r.trace.read(s.bitmap_bank(), s.n_pre * (post / s.word_bits + 1));
  for (std::size_t i = 0; i < s.n_pre; ++i)
    if (s.bit(i, post)) r.synapses.push_back({i, s.weights[s.row_ptr[i] + s.rank(i, post)]});
  r.trace.read(s.weight_bank(), r.synapses.size());
  return r;
}

inline LookupResult reverse(const FunctionalStore& s, std::size_t post) {
  const auto& g = s.geometry;
  check_index(post, g.n_post(), "postsynaptic");
  LookupResult r;
  for (const auto& a : conv_reverse_addresses(g, neuron_coord(g, post), &r.trace))
    r.synapses.push_back({neuron_id(g, a.neuron), s.kernel[a.kernel_index]});
  r.trace.read(s.weight_bank(), r.synapses.size());
  return r;
}

}  // namespace detail

/// All postsynaptic targets of `pre` with their weights, plus the exact
/// memory traffic of the lookup. Crossbar rows omit zero-valued slots from the
/// result but still read every slot.
inline LookupResult forward_lookup(const Store& s, std::size_t pre) {
  return std::visit([pre](const auto& st) { return detail::forward(st, pre); }, s);
}

/// All presynaptic sources of `post`. Index-based stores pay for a scan.
inline LookupResult reverse_lookup(const Store& s, std::size_t post) {
  return std::visit([post](const auto& st) { return detail::reverse(st, post); }, s);
}

// ---------------------------------------------------------------------------
// Weight writes

enum class WriteMode {
  Locate,   // pay the indirection reads needed to find the slot
  Batched,  // slot already located by a preceding traversal
};

namespace detail {

inline AccessTrace write(CrossbarStore& s, std::size_t pre, std::size_t post, double value, WriteMode) {
  check_index(pre, s.n_pre, "presynaptic");
  check_index(post, s.n_post, "postsynaptic");
  s.weights[pre * s.n_post + post] = encode_weight(value, s.weight_bits, s.quantized);
  AccessTrace t;
  t.write(s.weight_bank());
  return t;
}

inline AccessTrace write(CsrStore& s, std::size_t pre, std::size_t post, double value, WriteMode mode) {
  check_index(pre, s.n_pre, "presynaptic");
  check_index(post, s.n_post, "postsynaptic");
  const auto begin = s.col_idx.begin() + s.row_ptr[pre];
  const auto end = s.col_idx.begin() + s.row_ptr[pre + 1];
  const auto it = std::lower_bound(begin, end, static_cast<std::uint32_t>(post));
  if (it == end || *it != post) throw std::invalid_argument("PB-CSR: synapse does not exist");
  const auto slot = static_cast<std::size_t>(it - s.col_idx.begin());
  AccessTrace t;
  if (mode == WriteMode::Locate) {
    // Row bounds, then a sequential column scan up to the match.
    t.read(s.row_ptr_bank(), 2);
    t.read(s.col_idx_bank(), static_cast<std::uint64_t>(it - begin) + 1);
  }
  s.weights[slot] = encode_weight(value, s.weight_bits, s.quantized);
  t.write(s.weight_bank());
  return t;
}

inline AccessTrace write(BitmapStore& s, std::size_t pre, std::size_t post, double value, WriteMode mode) {
  check_index(pre, s.n_pre, "presynaptic");
  check_index(post, s.n_post, "postsynaptic");
  if (!s.bit(pre, post)) throw std::invalid_argument("PB-BMP: synapse does not exist");
  AccessTrace t;
  if (mode == WriteMode::Locate) {
    t.read(s.row_ptr_bank(), 1);
    t.read(s.bitmap_bank(), post / s.word_bits + 1);
  }
  s.weights[s.row_ptr[pre] + s.rank(pre, post)] = encode_weight(value, s.weight_bits, s.quantized);
  t.write(s.weight_bank());
  return t;
}

inline AccessTrace write(FunctionalStore& s, std::size_t pre, std::size_t post, double value, WriteMode mode) {
  const auto& g = s.geometry;
  check_index(pre, g.n_pre(), "presynaptic");
  check_index(post, g.n_post(), "postsynaptic");
  const NeuronCoord a = neuron_coord(g, pre), b = neuron_coord(g, post);
  const auto dr = static_cast<std::ptrdiff_t>(b.r) - static_cast<std::ptrdiff_t>(a.r);
  const auto dc = static_cast<std::ptrdiff_t>(b.c) - static_cast<std::ptrdiff_t>(a.c);
  if (dr < -g.half_h() || dr > g.half_h() || dc < -g.half_w() || dc > g.half_w())
    throw std::invalid_argument("Functional: synapse does not exist");
  AccessTrace t;
  if (mode == WriteMode::Locate) t.logic();
  const auto idx = kernel_index(g, a.ch, b.ch, static_cast<std::size_t>(dr + g.half_h()),
                                static_cast<std::size_t>(dc + g.half_w()));
  s.kernel[idx] = encode_weight(value, s.weight_bits, s.quantized);
  t.write(s.weight_bank());
  return t;
}

}  // namespace detail

/// Overwrite an existing synapse's weight (quantized to the store's word).
/// Sparse and functional stores cannot create synapses; the crossbar can.
/// For the functional store the written word is the shared kernel weight.
inline AccessTrace write_weight(Store& s, std::size_t pre, std::size_t post, double value,
                                WriteMode mode = WriteMode::Locate) {
  return std::visit([&](auto& st) { return detail::write(st, pre, post, value, mode); }, s);
}

// ---------------------------------------------------------------------------
// Storage

struct StorageReport {
  std::vector<BankInfo> banks;

  std::uint64_t bits(Bank b) const {
    std::uint64_t n = 0;
    for (const auto& info : banks)
      if (info.bank == b) n += info.capacity_bits;
    return n;
  }
  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto& info : banks) n += info.capacity_bits;
    return n;
  }
};

inline StorageReport storage_bits(const Store& s) {
  return std::visit(
      [](const auto& st) -> StorageReport {
        using T = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<T, CsrStore>)
          return {{st.row_ptr_bank(), st.col_idx_bank(), st.weight_bank()}};
        else if constexpr (std::is_same_v<T, BitmapStore>)
          return {{st.row_ptr_bank(), st.bitmap_bank(), st.weight_bank()}};
        else
          return {{st.weight_bank()}};
      },
      s);
}

/// Number of weight words physically held by the store.
inline std::size_t stored_weight_count(const Store& s) {
  return std::visit(
      [](const auto& st) -> std::size_t {
        using T = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<T, FunctionalStore>)
          return st.kernel.size();
        else
          return st.weights.size();
      },
      s);
}

inline std::size_t nonzero_weight_count(const Store& s) {
  return std::visit(
      [](const auto& st) -> std::size_t {
        using T = std::decay_t<decltype(st)>;
        const auto& w = [&]() -> const std::vector<double>& {
          if constexpr (std::is_same_v<T, FunctionalStore>)
            return st.kernel;
          else
            return st.weights;
        }();
        return static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](double v) { return v != 0.0; }));
      },
      s);
}

// ---------------------------------------------------------------------------
// Convolution materialization

/// Kernel-weight lookup for the (pre, post) pair, or nullopt when unconnected.
inline std::optional<std::size_t> conv_kernel_slot(const ConvGeometry& g, NeuronCoord pre, NeuronCoord post) {
  const auto dr = static_cast<std::ptrdiff_t>(post.r) - static_cast<std::ptrdiff_t>(pre.r);
  const auto dc = static_cast<std::ptrdiff_t>(post.c) - static_cast<std::ptrdiff_t>(pre.c);
  if (dr < -g.half_h() || dr > g.half_h() || dc < -g.half_w() || dc > g.half_w()) return std::nullopt;
  return kernel_index(g, pre.ch, post.ch, static_cast<std::size_t>(dr + g.half_h()),
                      static_cast<std::size_t>(dc + g.half_w()));
}

/// Dense connectivity of the convolution held by a functional store. Meant for
/// small geometries (the result has n_pre * n_post entries).
inline SynapseMatrix materialize(const FunctionalStore& s) {
  const auto& g = s.geometry;
  SynapseMatrix m(g.n_pre(), g.n_post());
  for (std::size_t i = 0; i < m.n_pre; ++i)
    for (std::size_t j = 0; j < m.n_post; ++j)
      if (auto slot = conv_kernel_slot(g, neuron_coord(g, i), neuron_coord(g, j))) {
        m.mask[m.index(i, j)] = 1;
        m.weights[m.index(i, j)] = s.kernel[*slot];
      }
  return m;
}

/// PB-CSR encoding of the materialized convolution, built row by row so large
/// layers never need the dense matrix. Equal to build_csr(materialize(s)).
inline CsrStore build_csr_from_conv(const FunctionalStore& s) {
  const auto& g = s.geometry;
  CsrStore out;
  out.n_pre = g.n_pre();
  out.n_post = g.n_post();
  out.weight_bits = s.weight_bits;
  out.quantized = s.quantized;
  out.row_ptr.assign(out.n_pre + 1, 0);
  const auto nnz = conv_connection_count(g);
  out.col_idx.reserve(nnz);
  out.weights.reserve(nnz);
  std::vector<std::pair<std::uint32_t, double>> row;
  for (std::size_t i = 0; i < out.n_pre; ++i) {
    row.clear();
    for (const auto& a : conv_forward_addresses(g, neuron_coord(g, i)))
      row.emplace_back(static_cast<std::uint32_t>(neuron_id(g, a.neuron)), s.kernel[a.kernel_index]);
    std::sort(row.begin(), row.end());
    for (const auto& [col, w] : row) {
      out.col_idx.push_back(col);
      out.weights.push_back(w);
    }
    out.row_ptr[i + 1] = static_cast<std::uint32_t>(out.col_idx.size());
  }
  out.pointer_bits = ceil_log2(out.nnz() + 1);
  out.column_bits = ceil_log2(out.n_post);
  return out;
}

}  // namespace synmem

#pragma once

// Binary container for encoded stores.
//
//   magic    "SYNM"
//   version  u16
//   scheme   u8   (Scheme tag)
//   header   scheme specific, see write_store()
//   banks    u8 bank count, then per bank: u8 Bank tag, u8 element width in
//            bytes, u64 element count, packed elements
//
// All integers are little-endian. Index banks are u32 (bitmap words u64),
// weight banks are IEEE-754 binary64.

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "synmem/stores.hpp"

namespace synmem {

inline constexpr std::array<char, 4> kStoreMagic{'S', 'Y', 'N', 'M'};
inline constexpr std::uint16_t kStoreFormatVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace io {

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t k = 0; k < sizeof(T); ++k) {
    os.put(static_cast<char>(u & 0xFF));
    u = static_cast<U>(u >> 8);
  }
}

inline void put_f64(std::ostream& os, double v) { put(os, std::bit_cast<std::uint64_t>(v)); }

template <typename T>
T get(std::istream& is) {
  static_assert(std::is_integral_v<T>);
  std::make_unsigned_t<T> u = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw FormatError("truncated store container");
    u |= static_cast<std::make_unsigned_t<T>>(static_cast<std::uint8_t>(c)) << (8 * k);
  }
  return static_cast<T>(u);
}

inline double get_f64(std::istream& is) { return std::bit_cast<double>(get<std::uint64_t>(is)); }

inline void put_dims(std::ostream& os, std::size_t n_pre, std::size_t n_post, int bits, bool quantized) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(n_pre));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(n_post));
  put<std::uint8_t>(os, static_cast<std::uint8_t>(bits));
  put<std::uint8_t>(os, quantized ? 1 : 0);
}

template <typename T>
void put_bank(std::ostream& os, Bank bank, const std::vector<T>& values) {
  put<std::uint8_t>(os, static_cast<std::uint8_t>(bank));
  put<std::uint8_t>(os, sizeof(T));
  put<std::uint64_t>(os, values.size());
  for (const T& v : values) {
    if constexpr (std::is_floating_point_v<T>) put_f64(os, v);
    else put<T>(os, v);
  }
}

template <typename T>
std::vector<T> get_bank(std::istream& is, Bank expected) {
  const auto tag = get<std::uint8_t>(is);
  if (tag != static_cast<std::uint8_t>(expected))
    throw FormatError("unexpected bank tag " + std::to_string(tag) + ", wanted " + std::string(bank_name(expected)));
  const auto width = get<std::uint8_t>(is);
  if (width != sizeof(T)) throw FormatError("bank " + std::string(bank_name(expected)) + " has wrong element width");
  const auto n = get<std::uint64_t>(is);
  if (n > (std::uint64_t{1} << 34)) throw FormatError("bank element count is implausible");
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t k = 0; k < n; ++k) {
    if constexpr (std::is_floating_point_v<T>) out.push_back(get_f64(is));
    else out.push_back(get<T>(is));
  }
  return out;
}

}  // namespace io

inline void write_store(std::ostream& os, const Store& store) {
  os.write(kStoreMagic.data(), kStoreMagic.size());
  io::put<std::uint16_t>(os, kStoreFormatVersion);
  io::put<std::uint8_t>(os, static_cast<std::uint8_t>(scheme_of(store)));
  std::visit([&os](const auto& s) {
    using T = std::decay_t<decltype(s)>;
    if constexpr (std::is_same_v<T, CrossbarStore>) {
      io::put_dims(os, s.n_pre, s.n_post, s.weight_bits, s.quantized);
      io::put<std::uint8_t>(os, 1);
      io::put_bank(os, Bank::Weights, s.weights);
    } else if constexpr (std::is_same_v<T, CsrStore>) {
      io::put_dims(os, s.n_pre, s.n_post, s.weight_bits, s.quantized);
      io::put<std::uint8_t>(os, static_cast<std::uint8_t>(s.pointer_bits));
      io::put<std::uint8_t>(os, static_cast<std::uint8_t>(s.column_bits));
      io::put<std::uint8_t>(os, 3);
      io::put_bank(os, Bank::RowPtr, s.row_ptr);
      io::put_bank(os, Bank::ColIdx, s.col_idx);
      io::put_bank(os, Bank::Weights, s.weights);
    } else if constexpr (std::is_same_v<T, BitmapStore>) {
      io::put_dims(os, s.n_pre, s.n_post, s.weight_bits, s.quantized);
      io::put<std::uint8_t>(os, static_cast<std::uint8_t>(s.word_bits));
      io::put<std::uint8_t>(os, static_cast<std::uint8_t>(s.pointer_bits));
      io::put<std::uint32_t>(os, static_cast<std::uint32_t>(s.words_per_row));
      io::put<std::uint8_t>(os, 3);
      io::put_bank(os, Bank::RowPtr, s.row_ptr);
      io::put_bank(os, Bank::Bitmap, s.bitmap);
      io::put_bank(os, Bank::Weights, s.weights);
    } else {
      const auto& g = s.geometry;
      for (std::size_t v : {g.in_h, g.in_w, g.k_h, g.k_w, g.c_in, g.c_out})
        io::put<std::uint32_t>(os, static_cast<std::uint32_t>(v));
      io::put<std::uint8_t>(os, static_cast<std::uint8_t>(s.weight_bits));
      io::put<std::uint8_t>(os, s.quantized ? 1 : 0);
      io::put<std::uint8_t>(os, 1);
      io::put_bank(os, Bank::Weights, s.kernel);
    }
  }, store);
  if (!os) throw std::runtime_error("write_store: stream error");
}

inline Store read_store(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kStoreMagic) throw FormatError("not a SYNM container");
  const auto version = io::get<std::uint16_t>(is);
  if (version != kStoreFormatVersion) throw FormatError("unsupported container version " + std::to_string(version));
  const auto tag = io::get<std::uint8_t>(is);
  if (tag > static_cast<std::uint8_t>(Scheme::Functional)) throw FormatError("unknown scheme tag");

  auto bank_count = [&is](std::uint8_t expected) {
    if (io::get<std::uint8_t>(is) != expected) throw FormatError("unexpected bank count");
  };
  auto dims = [&is](auto& s) {
    s.n_pre = io::get<std::uint32_t>(is);
    s.n_post = io::get<std::uint32_t>(is);
    s.weight_bits = io::get<std::uint8_t>(is);
    s.quantized = io::get<std::uint8_t>(is) != 0;
  };

  Store out;
  switch (static_cast<Scheme>(tag)) {
    case Scheme::Crossbar: {
      CrossbarStore s;
      dims(s);
      bank_count(1);
      s.weights = io::get_bank<double>(is, Bank::Weights);
      if (s.weights.size() != s.n_pre * s.n_post) throw FormatError("crossbar weight count does not match dims");
      out = std::move(s);
      break;
    }
    case Scheme::Csr: {
      CsrStore s;
      dims(s);
      s.pointer_bits = io::get<std::uint8_t>(is);
      s.column_bits = io::get<std::uint8_t>(is);
      bank_count(3);
      s.row_ptr = io::get_bank<std::uint32_t>(is, Bank::RowPtr);
      s.col_idx = io::get_bank<std::uint32_t>(is, Bank::ColIdx);
      s.weights = io::get_bank<double>(is, Bank::Weights);
      if (s.row_ptr.size() != s.n_pre + 1 || s.weights.size() != s.col_idx.size() ||
          s.row_ptr.back() != s.col_idx.size())
        throw FormatError("inconsistent PB-CSR banks");
      for (auto c : s.col_idx)
        if (c >= s.n_post) throw FormatError("PB-CSR column index out of range");
      out = std::move(s);
      break;
    }
    case Scheme::Bitmap: {
      BitmapStore s;
      dims(s);
      s.word_bits = io::get<std::uint8_t>(is);
      s.pointer_bits = io::get<std::uint8_t>(is);
      s.words_per_row = io::get<std::uint32_t>(is);
      bank_count(3);
      s.row_ptr = io::get_bank<std::uint32_t>(is, Bank::RowPtr);
      s.bitmap = io::get_bank<std::uint64_t>(is, Bank::Bitmap);
      s.weights = io::get_bank<double>(is, Bank::Weights);
      if (s.word_bits < 1 || s.word_bits > 64 || s.row_ptr.size() != s.n_pre ||
          s.bitmap.size() != s.n_pre * s.words_per_row)
        throw FormatError("inconsistent PB-BMP banks");
      std::size_t set = 0;
      for (auto w : s.bitmap) set += static_cast<std::size_t>(std::popcount(w));
      if (set != s.weights.size()) throw FormatError("PB-BMP bitmap population does not match weight count");
      out = std::move(s);
      break;
    }
    case Scheme::Functional: {
      FunctionalStore s;
      auto& g = s.geometry;
      for (std::size_t* v : {&g.in_h, &g.in_w, &g.k_h, &g.k_w, &g.c_in, &g.c_out}) *v = io::get<std::uint32_t>(is);
      try {
        g.validate();
      } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
      }
      s.weight_bits = io::get<std::uint8_t>(is);
      s.quantized = io::get<std::uint8_t>(is) != 0;
      bank_count(1);
      s.kernel = io::get_bank<double>(is, Bank::Weights);
      if (s.kernel.size() != g.kernel_size()) throw FormatError("kernel size does not match geometry");
      out = std::move(s);
      break;
    }
  }
  return out;
}

inline std::string encode_store(const Store& s) {
  std::ostringstream os(std::ios::binary);
  write_store(os, s);
  return os.str();
}

inline Store decode_store(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  Store s = read_store(is);
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after store container");
  return s;
}

/// Human-readable summary record of an encoded store.
inline nlohmann::json store_summary(const Store& s) {
  nlohmann::json j;
  j["scheme"] = std::string(scheme_name(scheme_of(s)));
  j["n_pre"] = n_pre(s);
  j["n_post"] = n_post(s);
  const double slots = static_cast<double>(n_pre(s)) * static_cast<double>(n_post(s));
  std::size_t present = 0;
  if (const auto* fn = std::get_if<FunctionalStore>(&s)) present = conv_connection_count(fn->geometry);
  else if (std::holds_alternative<CrossbarStore>(s)) present = nonzero_weight_count(s);
  else present = stored_weight_count(s);
  j["density"] = slots > 0 ? static_cast<double>(present) / slots : 0.0;
  j["weight_bits"] = weight_bits(s);
  const StorageReport rep = storage_bits(s);
  nlohmann::json banks = nlohmann::json::object();
  for (const auto& b : rep.banks) banks[std::string(bank_name(b.bank))] = b.capacity_bits;
  j["bank_bits"] = banks;
  j["total_bits"] = rep.total();
  return j;
}

}  // namespace synmem

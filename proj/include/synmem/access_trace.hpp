#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string_view>

namespace synmem {

enum class Bank : std::uint8_t { RowPtr = 0, ColIdx = 1, Bitmap = 2, Weights = 3 };

constexpr std::string_view bank_name(Bank b) {
  switch (b) {
    case Bank::RowPtr: return "row_ptr";
    case Bank::ColIdx: return "col_idx";
    case Bank::Bitmap: return "bitmap";
    case Bank::Weights: return "weights";
  }
  return "?";
}

constexpr bool is_indirection(Bank b) { return b != Bank::Weights; }

/// Physical memory a counter refers to.
struct BankInfo {
  Bank bank = Bank::Weights;
  std::uint64_t capacity_bits = 0;
  std::uint32_t word_bits = 0;

  auto operator<=>(const BankInfo&) const = default;
};

struct BankCounts {
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;

  bool operator==(const BankCounts&) const = default;
};

/// Exact memory-access counts for one or more lookups. Traces from different
/// stores (or the same store at different times) can be summed; counters are
/// keyed by the full bank geometry.
class AccessTrace {
 public:
  void read(const BankInfo& bank, std::uint64_t n = 1) {
    if (n) banks_[bank].reads += n;
  }
  void write(const BankInfo& bank, std::uint64_t n = 1) {
    if (n) banks_[bank].writes += n;
  }
  void logic(std::uint64_t n = 1) { logic_evals_ += n; }

  AccessTrace& operator+=(const AccessTrace& other) {
    for (const auto& [info, c] : other.banks_) {
      auto& mine = banks_[info];
      mine.reads += c.reads;
      mine.writes += c.writes;
    }
    logic_evals_ += other.logic_evals_;
    return *this;
  }

  friend AccessTrace operator+(AccessTrace a, const AccessTrace& b) { return a += b; }

  /// Trace of `k` repetitions of this one.
  AccessTrace repeated(std::uint64_t k) const {
    AccessTrace out;
    if (k == 0) return out;
    for (const auto& [info, c] : banks_) out.banks_[info] = {c.reads * k, c.writes * k};
    out.logic_evals_ = logic_evals_ * k;
    return out;
  }

  bool operator==(const AccessTrace&) const = default;

  const std::map<BankInfo, BankCounts>& banks() const { return banks_; }
  std::uint64_t logic_evals() const { return logic_evals_; }
  bool empty() const { return banks_.empty() && logic_evals_ == 0; }

  std::uint64_t reads(Bank b) const {
    std::uint64_t n = 0;
    for (const auto& [info, c] : banks_)
      if (info.bank == b) n += c.reads;
    return n;
  }
  std::uint64_t writes(Bank b) const {
    std::uint64_t n = 0;
    for (const auto& [info, c] : banks_)
      if (info.bank == b) n += c.writes;
    return n;
  }
  std::uint64_t indirection_reads() const {
    return reads(Bank::RowPtr) + reads(Bank::ColIdx) + reads(Bank::Bitmap);
  }
  std::uint64_t weight_reads() const { return reads(Bank::Weights); }
  std::uint64_t weight_writes() const { return writes(Bank::Weights); }
  std::uint64_t total_accesses() const {
    std::uint64_t n = 0;
    for (const auto& [info, c] : banks_) n += c.reads + c.writes;
    return n;
  }

 private:
  std::map<BankInfo, BankCounts> banks_;
  std::uint64_t logic_evals_ = 0;
};

}  // namespace synmem

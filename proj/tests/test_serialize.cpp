#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "synmem/serialize.hpp"
#include "synmem/synapse_matrix.hpp"

using namespace synmem;

namespace {

void expect_same_store(const Store& a, const Store& b) {
  ASSERT_EQ(scheme_of(a), scheme_of(b));
  ASSERT_EQ(n_pre(a), n_pre(b));
  ASSERT_EQ(n_post(a), n_post(b));
  EXPECT_EQ(storage_bits(a).total(), storage_bits(b).total());
  for (std::size_t i = 0; i < n_pre(a); ++i) {
    const auto x = forward_lookup(a, i), y = forward_lookup(b, i);
    ASSERT_EQ(x.synapses.size(), y.synapses.size());
    for (std::size_t k = 0; k < x.synapses.size(); ++k) {
      EXPECT_EQ(x.synapses[k].index, y.synapses[k].index);
      EXPECT_EQ(x.synapses[k].weight, y.synapses[k].weight);
    }
    EXPECT_EQ(x.trace, y.trace);
  }
}

std::vector<Store> samples() {
  const auto m = random_synapse_matrix(13, 70, 0.3, 4, 6);
  std::vector<double> kernel(2 * 3 * 3 * 3);
  for (std::size_t k = 0; k < kernel.size(); ++k) kernel[k] = quant::quantize_weight(0.01 * k - 0.2, 8);
  return {build_crossbar(m, 6), build_csr(m, 6), build_bitmap(m, 6, 24),
          build_functional(ConvGeometry{5, 4, 3, 3, 2, 3}, kernel, 8)};
}

}  // namespace

TEST(Serialize, RoundTrip) {
  for (const auto& s : samples()) {
    const std::string bytes = encode_store(s);
    expect_same_store(s, decode_store(bytes));
    EXPECT_EQ(encode_store(decode_store(bytes)), bytes);
  }
}

TEST(Serialize, HeaderIsLittleEndian) {
  const auto bytes = encode_store(samples()[1]);
  ASSERT_GE(bytes.size(), 15u);
  EXPECT_EQ(bytes.substr(0, 4), "SYNM");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);  // version low byte
  EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 0u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), static_cast<unsigned>(Scheme::Csr));
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 13u);  // n_pre
  EXPECT_EQ(static_cast<unsigned char>(bytes[11]), 70u);  // n_post
}

TEST(Serialize, RejectsCorruptInput) {
  const auto good = encode_store(samples()[1]);
  EXPECT_THROW(decode_store("XXXX" + good.substr(4)), FormatError);
  EXPECT_THROW(decode_store(good.substr(0, good.size() - 3)), FormatError);
  EXPECT_THROW(decode_store(good + "x"), FormatError);
  std::string bad_version = good;
  bad_version[4] = 9;
  EXPECT_THROW(decode_store(bad_version), FormatError);
  std::string bad_scheme = good;
  bad_scheme[6] = 7;
  EXPECT_THROW(decode_store(bad_scheme), FormatError);
}

TEST(Serialize, Summary) {
  const auto s = samples();
  const auto j = store_summary(s[2]);
  EXPECT_EQ(j["scheme"], "PB-BMP");
  EXPECT_EQ(j["n_pre"], 13);
  EXPECT_EQ(j["n_post"], 70);
  EXPECT_EQ(j["weight_bits"], 6);
  EXPECT_NEAR(j["density"].get<double>(), 273.0 / 910.0, 1e-12);
  EXPECT_EQ(j["total_bits"].get<std::uint64_t>(), storage_bits(s[2]).total());
  EXPECT_EQ(j["bank_bits"]["bitmap"].get<std::uint64_t>(), storage_bits(s[2]).bits(Bank::Bitmap));

  const auto f = store_summary(s[3]);
  EXPECT_EQ(f["scheme"], "Functional");
  EXPECT_EQ(f["total_bits"], 2 * 3 * 3 * 3 * 8);
}

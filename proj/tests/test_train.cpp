#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "synmem/train.hpp"

using namespace synmem;
using namespace synmem::snn;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.task.layers = {20, 12, 6};
  c.task.steps = 40;
  c.epochs = 30;
  c.schemes = {Scheme::Crossbar, Scheme::Csr, Scheme::Bitmap};
  return c;
}

}  // namespace

TEST(Task, EpisodeShapesAndDeterminism) {
  TaskConfig t;
  t.layers = {10, 4};
  t.steps = 50;
  const auto a = make_episode(t), b = make_episode(t);
  EXPECT_EQ(a.input.neurons, 10u);
  EXPECT_EQ(a.input.steps, 50u);
  EXPECT_EQ(a.target.neurons, 4u);
  EXPECT_EQ(a.input, b.input);
  EXPECT_EQ(a.target, b.target);
  t.seed = 2;
  EXPECT_FALSE(make_episode(t).input == a.input);
}

TEST(Init, QuantizedWeightsOnGridWithEtaScale) {
  TrainConfig c = small_config();
  c.quantized = true;
  c.weight_bits = 4;
  const Network net = init_network(c);
  const auto [lo, hi] = quant::weight_range(4);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    EXPECT_EQ(net.scales[l], 1.0 / quant::eta(4, net.sizes[l]));
    for (double w : net.weights[l]) {
      EXPECT_EQ(w, quant::quantize_weight(w, 4));
      EXPECT_GE(w, lo);
      EXPECT_LE(w, hi);
    }
  }
  c.quantized = false;
  for (double s : init_network(c).scales) EXPECT_EQ(s, 1.0);
}

TEST(Train, ZeroEpochsEvaluatesOnce) {
  TrainConfig c = small_config();
  c.epochs = 0;
  const auto r = train(c);
  ASSERT_EQ(r.vr_curve.size(), 1u);
  EXPECT_EQ(r.epochs_run, 0u);
  EXPECT_EQ(r.final_vr(), r.initial_vr());
  for (const auto& a : r.accounts) {
    EXPECT_TRUE(a.forward_pJ.empty());
    EXPECT_EQ(a.total_pJ(), 0.0);
    for (const auto& t : a.forward_traces) EXPECT_EQ(t.total_accesses(), 0u);
  }
}

TEST(Train, Deterministic) {
  TrainConfig c = small_config();
  c.quantized = true;
  c.weight_bits = 3;
  const auto a = train(c), b = train(c);
  EXPECT_EQ(a.vr_curve, b.vr_curve);
  EXPECT_EQ(a.sparsity_curve, b.sparsity_curve);
  for (std::size_t k = 0; k < a.accounts.size(); ++k) {
    EXPECT_EQ(a.accounts[k].forward_pJ, b.accounts[k].forward_pJ);
    EXPECT_EQ(a.accounts[k].backward_pJ, b.accounts[k].backward_pJ);
  }
}

TEST(Train, FullPrecisionLearnsSmallTask) {
  TrainConfig c = small_config();
  c.epochs = 300;
  c.learning_rate = 3e-3;
  c.schemes.clear();
  const auto r = train(c);
  EXPECT_FALSE(r.diverged);
  EXPECT_EQ(r.vr_curve.size(), 301u);
  EXPECT_LT(r.final_vr(), 0.8 * r.initial_vr());
}

TEST(Train, QuantizedStaysOnGrid) {
  TrainConfig c = small_config();
  c.quantized = true;
  c.weight_bits = 2;
  const auto r = train(c);
  for (double s : r.sparsity_curve) {
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  EXPECT_EQ(r.sparsity_curve.size(), r.vr_curve.size());
}

TEST(Train, EpochEnergyIsEnergyOfSummedTraces) {
  TrainConfig c = small_config();
  c.epochs = 5;
  const auto r = train(c);
  for (const auto& a : r.accounts) {
    ASSERT_EQ(a.forward_pJ.size(), 5u);
    AccessTrace f, b;
    for (const auto& t : a.forward_traces) f += t;
    for (const auto& t : a.backward_traces) b += t;
    const double fsum = std::accumulate(a.forward_pJ.begin(), a.forward_pJ.end(), 0.0);
    const double bsum = std::accumulate(a.backward_pJ.begin(), a.backward_pJ.end(), 0.0);
    EXPECT_NEAR(energy::pass_energy(f, c.cost_model).active_pJ, fsum, 1e-9 * fsum);
    EXPECT_NEAR(energy::pass_energy(b, c.cost_model).active_pJ, bsum, 1e-9 * bsum);
  }
  EXPECT_THROW(r.account(Scheme::Functional), std::out_of_range);
}

TEST(Traffic, ForwardCountsStepsWithNonzeroTrace) {
  const auto m = random_synapse_matrix(3, 4, 0.5, 2, 8);
  const Store s = build_csr(m, 8);
  LayerRecord rec{3, 4, {}, {}, {}};
  // Steps x n_in: neuron 0 active twice, neuron 1 never, neuron 2 once.
  rec.P = {0.5, 0, 0, 1.0, 0, 0.2, 0, 0, 0};
  const auto [fwd, bwd] = epoch_layer_traffic(s, rec, 3, 2, BackwardMode::Batched);
  AccessTrace expected = forward_lookup(s, 0).trace + forward_lookup(s, 0).trace + forward_lookup(s, 2).trace;
  EXPECT_EQ(fwd, expected);
  EXPECT_EQ(bwd, backward_read_trace(s) + backward_read_trace(s) + update_write_trace(s));
}

TEST(Traffic, ZeroWeightsAreAbsentInSparseStores) {
  const std::vector<double> w{0.5, 0.0, 0.0, -0.25};
  const Store csr = snn::detail::encode_layer(w, 2, 2, Scheme::Csr, 8, 32);
  EXPECT_EQ(std::get<CsrStore>(csr).weights.size(), 2u);
  const Store cb = snn::detail::encode_layer(w, 2, 2, Scheme::Crossbar, 8, 32);
  EXPECT_EQ(storage_bits(cb).total(), 32u);
  EXPECT_THROW(snn::detail::encode_layer(w, 2, 2, Scheme::Functional, 8, 32), std::invalid_argument);
}

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "synmem/snn.hpp"
#include "synmem/stores.hpp"

using namespace synmem;
using namespace synmem::snn;

TEST(Surrogate, KnownValues) {
  LifParams p;
  p.theta = 0.7;
  p.surrogate_sharpness = 4.0;
  EXPECT_DOUBLE_EQ(surrogate_derivative(0.7, p), 1.0);
  EXPECT_DOUBLE_EQ(surrogate_derivative(0.7 + 0.25, p), 0.25);
  EXPECT_DOUBLE_EQ(surrogate_derivative(0.7 - 0.25, p), 0.25);
  EXPECT_LT(surrogate_derivative(10.0, p), surrogate_derivative(1.0, p));
}

TEST(Surrogate, SoftSpikeDerivativeIsSurrogate) {
  LifParams p;
  for (double u = -2.0; u <= 3.0; u += 0.137) {
    const double h = 1e-6;
    const double fd = (soft_spike(u + h, p) - soft_spike(u - h, p)) / (2 * h);
    EXPECT_NEAR(fd, surrogate_derivative(u, p), 1e-6);
  }
}

TEST(LifParamsTest, Validate) {
  LifParams p;
  EXPECT_NO_THROW(p.validate());
  p.beta = 1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = LifParams{};
  p.surrogate_sharpness = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(VanRossum, SingleSpikeClosedForm) {
  const std::size_t T = 40;
  const double tau = 7.0, lambda = std::exp(-1.0 / tau);
  Raster s(1, T), empty(1, T);
  s.at(0, 0) = 1;
  double sum = 0.0;
  for (std::size_t n = 0; n < T; ++n) sum += std::pow(lambda, 2.0 * n);
  EXPECT_NEAR(van_rossum(s, empty, tau), std::sqrt(sum), 1e-12);
}

TEST(VanRossum, MetricProperties) {
  Xorshift64Star rng(5);
  auto random_raster = [&] {
    Raster r(4, 30);
    for (auto& b : r.bits) b = rng.bernoulli(0.2);
    return r;
  };
  for (int n = 0; n < 50; ++n) {
    const Raster a = random_raster(), b = random_raster(), c = random_raster();
    EXPECT_EQ(van_rossum(a, a, 5.0), 0.0);
    EXPECT_DOUBLE_EQ(van_rossum(a, b, 5.0), van_rossum(b, a, 5.0));
    EXPECT_LE(van_rossum(a, c, 5.0), van_rossum(a, b, 5.0) + van_rossum(b, c, 5.0) + 1e-12);
    if (!(a == b)) {
      EXPECT_GT(van_rossum(a, b, 5.0), 0.0);
    }
  }
  EXPECT_THROW(van_rossum(Raster(2, 3), Raster(3, 2), 5.0), std::invalid_argument);
}

TEST(VanRossum, GradientMatchesFiniteDifferences) {
  Xorshift64Star rng(9);
  std::vector<double> s(3 * 12), t(3 * 12);
  for (double& x : s) x = rng.uniform(0.0, 1.0);
  for (double& x : t) x = rng.bernoulli(0.3);
  const auto g = van_rossum_grad(s, t, 3, 4.0);
  for (std::size_t k = 0; k < s.size(); ++k) {
    auto up = s, down = s;
    up[k] += 1e-6;
    down[k] -= 1e-6;
    const double a = van_rossum(up, t, 3, 4.0), b = van_rossum(down, t, 3, 4.0);
    EXPECT_NEAR(g[k], (0.5 * a * a - 0.5 * b * b) / 2e-6, 1e-6);
  }
}

TEST(Dynamics, ZeroStateStaysSilent) {
  LifLayerState st(3, 2);
  const std::vector<double> w(6, 0.8), in(3, 0.0);
  for (int t = 0; t < 20; ++t) {
    lif_step_dense(st, in, w, LifParams{});
    for (double u : st.U) EXPECT_EQ(u, 0.0);
    for (double s : st.S) EXPECT_EQ(s, 0.0);
  }
}

// One input spike at t=0 reaches U two steps later through Q then P.
TEST(Dynamics, TraceDelayAndRefractory) {
  LifParams p;
  const double w = 1.2;
  LifLayerState st(1, 1);
  const std::vector<double> W{w};
  std::vector<double> U, S;
  for (int t = 0; t < 5; ++t) {
    const std::vector<double> in{t == 0 ? 1.0 : 0.0};
    lif_step_dense(st, in, W, p);
    U.push_back(st.U[0]);
    S.push_back(st.S[0]);
  }
  EXPECT_EQ(U[0], 0.0);
  EXPECT_EQ(U[1], 0.0);
  EXPECT_DOUBLE_EQ(U[2], w);  // P = 1
  EXPECT_EQ(S[2], 1.0);
  // P = beta + alpha, R = 1 after the spike.
  EXPECT_DOUBLE_EQ(U[3], w * (p.beta + p.alpha) - p.delta);
  EXPECT_EQ(S[3], 0.0);
  const double P4 = p.beta * (p.beta + p.alpha) + p.alpha * p.alpha;
  EXPECT_DOUBLE_EQ(U[4], w * P4 - p.delta * p.gamma);
}

TEST(Dynamics, StoreStepEqualsDenseStep) {
  const auto m = random_synapse_matrix(12, 7, 0.4, 3, 6);
  std::vector<double> dense(12 * 7, 0.0);
  for (std::size_t k = 0; k < dense.size(); ++k)
    if (m.mask[k]) dense[k] = m.weights[k];
  LifParams p;
  p.theta = 0.4;
  Xorshift64Star rng(1);
  for (const Store& s : {Store{build_crossbar(m, 6)}, Store{build_csr(m, 6)}, Store{build_bitmap(m, 6, 8)}}) {
    LifLayerState a(12, 7), b(12, 7);
    AccessTrace trace, expected;
    for (int t = 0; t < 25; ++t) {
      std::vector<double> in(12);
      for (double& x : in) x = rng.bernoulli(0.3);
      for (std::size_t j = 0; j < 12; ++j)
        if (a.P[j] != 0.0) expected += forward_lookup(s, j).trace;
      lif_step(a, in, s, p, &trace, StepOptions{0.5, 0, false});
      lif_step_dense(b, in, dense, p, StepOptions{0.5, 0, false});
      ASSERT_EQ(a.U, b.U);
      ASSERT_EQ(a.S, b.S);
    }
    EXPECT_EQ(trace, expected);
    EXPECT_GT(trace.weight_reads(), 0u);
  }
}

TEST(Dynamics, MembraneHistoryOnGrid) {
  LifLayerState st(2, 2);
  const std::vector<double> w{0.3, 0.7, -0.2, 0.9};
  for (int t = 0; t < 10; ++t) {
    const std::vector<double> in{1.0, t % 2 ? 1.0 : 0.0};
    lif_step_dense(st, in, w, LifParams{}, StepOptions{1.0, 6, false});
  }
  for (double u : st.history) EXPECT_EQ(u, quant::quantize_membrane(u, 6));
}

TEST(Dynamics, RejectsShapeMismatch) {
  LifLayerState st(3, 2);
  const std::vector<double> in(2, 0.0), w(6, 0.0);
  EXPECT_THROW(lif_step_dense(st, in, w, LifParams{}), std::invalid_argument);
  Network net({3, 2}, LifParams{});
  EXPECT_THROW(net.run(std::vector<double>(5), 2), std::invalid_argument);
}

TEST(Poisson, RateStatistics) {
  const std::size_t n = 175, T = 1000;
  const std::vector<double> rates(n, 0.1);
  const auto r = generate_poisson_input(n, T, rates, 77);
  const double bins = static_cast<double>(n * T);
  const double sd = std::sqrt(bins * 0.1 * 0.9);
  EXPECT_NEAR(static_cast<double>(r.count()), 0.1 * bins, 3 * sd);
}

TEST(Poisson, ExtremeRates) {
  EXPECT_EQ(generate_poisson_input(5, 50, std::vector<double>(5, 0.0), 1).count(), 0u);
  EXPECT_EQ(generate_poisson_input(5, 50, std::vector<double>(5, 1.0), 1).count(), 250u);
  EXPECT_THROW(generate_poisson_input(2, 5, std::vector<double>{0.5, 1.5}, 1), std::invalid_argument);
  EXPECT_THROW(generate_poisson_input(2, 5, std::vector<double>{0.5}, 1), std::invalid_argument);
}

TEST(Poisson, Deterministic) {
  const auto rates = draw_input_rates(20, 0.02, 0.2, 3);
  for (double r : rates) {
    EXPECT_GE(r, 0.02);
    EXPECT_LE(r, 0.2);
  }
  EXPECT_EQ(generate_poisson_input(20, 30, rates, 4), generate_poisson_input(20, 30, rates, 4));
  EXPECT_FALSE(generate_poisson_input(20, 30, rates, 4) == generate_poisson_input(20, 30, rates, 5));
}

TEST(Target, ThinningKeepsSubset) {
  const auto clean = clean_pattern(30, 100, 10, 2);
  EXPECT_EQ(clean.count(), 300u);  // one spike per neuron per period
  const auto noisy = generate_target(clean, 0.95, 3);
  for (std::size_t k = 0; k < clean.bits.size(); ++k) EXPECT_LE(noisy.bits[k], clean.bits[k]);
  EXPECT_EQ(generate_target(clean, 1.0, 3), clean);
  EXPECT_EQ(generate_target(clean, 0.0, 3).count(), 0u);
}

// Single synapse, input spike at t=0, output gradient on steps 2 and 3:
// dL/dw = g2 h2 P2 + g3 h3 (P3 - delta h2 P2).
TEST(Bptt, HandUnrolledChain) {
  LifParams p;
  Network net({1, 1}, p);
  net.weights[0][0] = 1.2;
  const std::vector<double> input{1, 0, 0, 0};
  const auto rec = net.run(input, 4);
  const double g2 = 0.3, g3 = -0.7;
  const std::vector<double> og{0, 0, g2, g3};
  const auto g = bptt_gradients(net, rec, og);

  const double P2 = 1.0, P3 = p.beta + p.alpha;
  const double U2 = 1.2 * P2, U3 = 1.2 * P3 - p.delta;
  const double h2 = surrogate_derivative(U2, p), h3 = surrogate_derivative(U3, p);
  EXPECT_NEAR(g.weights[0][0], g2 * h2 * P2 + g3 * h3 * (P3 - p.delta * h2 * P2), 1e-14);
  EXPECT_EQ(g.active_steps[0], 4u);  // surrogate never vanishes
}

TEST(Bptt, ScaleEntersLinearly) {
  Network net({1, 1}, LifParams{});
  net.weights[0][0] = 2.4;
  net.scales[0] = 0.5;  // effective weight 1.2
  const std::vector<double> input{1, 0, 0, 0};
  const auto rec = net.run(input, 4);
  Network ref({1, 1}, LifParams{});
  ref.weights[0][0] = 1.2;
  const auto rec_ref = ref.run(input, 4);
  EXPECT_EQ(rec.output(), rec_ref.output());
  const std::vector<double> og{0, 0, 0.3, -0.7};
  EXPECT_NEAR(bptt_gradients(net, rec, og).weights[0][0], 0.5 * bptt_gradients(ref, rec_ref, og).weights[0][0], 1e-14);
}

TEST(Bptt, SoftModeMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    const auto c = gradcheck::random_case(seed);
    const auto a = gradcheck::analytic(c), n = gradcheck::numeric(c);
    EXPECT_LT(gradcheck::relative_error(a, n), 1e-4) << "seed " << seed;
  }
}

TEST(Bptt, ThreeNeuronFiveStep) {
  LifParams p;
  p.theta = 0.5;
  gradcheck::Case c{Network({1, 1, 1}, p), {1, 0, 1, 1, 0}, {0, 0, 1, 0, 1}, 5, 2.0};
  c.net.weights[0][0] = 0.9;
  c.net.weights[1][0] = 1.3;
  EXPECT_LT(gradcheck::relative_error(gradcheck::analytic(c), gradcheck::numeric(c)), 1e-4);
}

TEST(Bptt, Deterministic) {
  const auto c = gradcheck::random_case(3);
  EXPECT_EQ(gradcheck::analytic(c), gradcheck::analytic(c));
}

TEST(Bptt, RejectsMissingHistory) {
  Network net({2, 2}, LifParams{});
  EpisodeRecord empty;
  EXPECT_THROW(bptt_gradients(net, empty, std::vector<double>{}), std::invalid_argument);
  const auto rec = net.run(std::vector<double>(6, 1.0), 3);
  EXPECT_THROW(bptt_gradients(net, rec, std::vector<double>(5)), std::invalid_argument);
}

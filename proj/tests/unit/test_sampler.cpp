#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "gdas/ops.hpp"
#include "gdas/oracle.hpp"
#include "gdas/sampler.hpp"
#include "test_support.hpp"

namespace gdas {
namespace {

TEST(EdgeProbabilities, ClosedForms) {
  const double zeros[] = {0.0, 0.0, 0.0};
  for (double p : edge_probabilities(zeros)) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
  const double a[] = {std::log(2.0), 0.0, 0.0};
  const auto p = edge_probabilities(a);
  EXPECT_NEAR(p[0], 0.5, 1e-15);
  EXPECT_NEAR(p[1], 0.25, 1e-15);
  EXPECT_NEAR(p[2], 0.25, 1e-15);
}

TEST(EdgeProbabilities, ShiftInvariant) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(4), b(4);
    const double c = rng.uniform(-50, 50);
    for (std::size_t k = 0; k < 4; ++k) b[k] = (a[k] = rng.uniform(-3, 3)) + c;
    const auto pa = edge_probabilities(a), pb = edge_probabilities(b);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(pa[k], pb[k], 1e-12);
  }
}

TEST(EdgeProbabilities, RejectsNonFinite) {
  const double a[] = {0.0, std::nan("")};
  EXPECT_THROW(edge_probabilities(a), std::invalid_argument);
  const double b[] = {INFINITY, 0.0};
  EXPECT_THROW(edge_probabilities(b), std::invalid_argument);
}

TEST(GumbelNoise, ReproducibleFromKeyAndSensitiveToEveryField) {
  const NoiseKey key{1, 2, 3, 4, 5};
  EXPECT_EQ(gumbel_noise(key, 6), gumbel_noise(key, 6));
  for (auto field : {&NoiseKey::seed, &NoiseKey::phase, &NoiseKey::iteration, &NoiseKey::cell,
                     &NoiseKey::edge}) {
    NoiseKey other = key;
    other.*field += 1;
    EXPECT_NE(gumbel_noise(key, 6), gumbel_noise(other, 6));
  }
}

TEST(GumbelNoise, ClampKeepsValuesFinite) {
  EXPECT_TRUE(std::isfinite(gumbel_from_uniform(0.0)));
  EXPECT_TRUE(std::isfinite(gumbel_from_uniform(1.0)));
  EXPECT_DOUBLE_EQ(gumbel_from_uniform(0.0), -std::log(-std::log(kUniformClampLo)));
}

TEST(GumbelArgmax, ZeroNoiseReducesToArgmaxAndTiesGoLow) {
  const double a[] = {0.5, 2.0, 2.0};
  const double z[] = {0.0, 0.0, 0.0};
  EXPECT_EQ(gumbel_argmax(a, z), 1u);
  const double flat[] = {1.0, 1.0};
  const double z2[] = {0.0, 0.0};
  EXPECT_EQ(gumbel_argmax(flat, z2), 0u);
}

TEST(GumbelArgmax, DominantLogitWins) {
  const double a[] = {100.0, 0.0, 0.0};
  std::size_t hits = 0;
  for (std::uint64_t d = 0; d < 10000; ++d) hits += gumbel_argmax(a, gumbel_noise({9, 0, d, 0, 0}, 3)) == 0;
  EXPECT_GT(hits, 9900u);
}

// Chi-square against the categorical law for a uniform edge.
TEST(GumbelArgmax, UniformMarginalPassesChiSquare) {
  const double a[] = {0.0, 0.0, 0.0};
  const auto rep = validate_marginals(a, 100000, 17);
  EXPECT_GT(rep.p_value, 0.01);
  EXPECT_EQ(rep.dof, 2u);
}

// Margin between the two largest perturbed log-probabilities.
double top_two_gap(std::span<const double> a, std::span<const double> o) {
  const auto p = edge_probabilities(a);
  std::vector<double> z(p.size());
  for (std::size_t k = 0; k < z.size(); ++k) z[k] = std::log(p[k]) + o[k];
  std::sort(z.begin(), z.end(), std::greater<>());
  return z[0] - z[1];
}

TEST(GumbelSoftmax, LimitsAndNormalization) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(5);
    for (auto& v : a) v = rng.uniform(-2, 2);
    const auto o = gumbel_noise({3, 0, static_cast<std::uint64_t>(t), 0, 0}, 5);
    const auto hot = gumbel_softmax(a, o, 1e6);
    for (double v : hot) EXPECT_NEAR(v, 0.2, 1e-4);
    // Distance to the one-hot is at most (K-1) exp(-gap / tau).
    const double tau = 1e-3;
    const double bound = 4.0 * std::exp(-top_two_gap(a, o) / tau);
    const auto cold = gumbel_softmax(a, o, tau);
    const auto h = one_hot(5, gumbel_argmax(a, o));
    for (std::size_t k = 0; k < 5; ++k) EXPECT_LE(std::abs(cold[k] - h[k]), std::max(bound, 1e-15));
    if (bound <= 1e-6) {
      for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(cold[k], h[k], 1e-6);
    }
    const auto mid = gumbel_softmax(a, o, 0.7);
    EXPECT_NEAR(std::accumulate(mid.begin(), mid.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(GumbelSoftmax, RejectsNonPositiveTau) {
  const double a[] = {0.0, 1.0};
  const double o[] = {0.0, 0.0};
  EXPECT_THROW(gumbel_softmax(a, o, 0.0), std::invalid_argument);
  EXPECT_THROW(gumbel_softmax(a, o, -1.0), std::invalid_argument);
}

TEST(GumbelSoftmax, SharpensMonotonicallyAndKeepsArgmax) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(4);
    for (auto& v : a) v = rng.uniform(-2, 2);
    const auto o = gumbel_noise({4, 0, static_cast<std::uint64_t>(t), 0, 0}, 4);
    const std::size_t want = gumbel_argmax(a, o);
    double prev_max = 0.0;
    for (double tau = 10.0; tau >= 0.1 - 1e-12; tau -= 0.1) {
      const auto h = gumbel_softmax(a, o, tau);
      const auto it = std::max_element(h.begin(), h.end());
      EXPECT_EQ(static_cast<std::size_t>(it - h.begin()), want);
      EXPECT_GE(*it, prev_max - 1e-15);
      prev_max = *it;
    }
  }
}

TEST(TemperatureSchedule, EndpointsAndMidpoint) {
  const TemperatureSchedule s{10.0, 0.1, 100};
  EXPECT_DOUBLE_EQ(anneal_tau(s, 0), 10.0);
  EXPECT_DOUBLE_EQ(anneal_tau(s, 100), 0.1);
  EXPECT_NEAR(anneal_tau(s, 50), 5.05, 1e-12);
  EXPECT_DOUBLE_EQ(anneal_tau(s, 500), 0.1);  // clamped
}

TEST(StraightThrough, ForwardIsHardAndTauInvariant) {
  Rng rng(4);
  auto a = testing::random_tensor({4}, rng);
  const auto o = gumbel_noise({5, 0, 0, 0, 0}, 4);
  const auto s1 = straight_through_select(a, o, 0.3);
  const auto s2 = straight_through_select(a, o, 7.0);
  const auto h = one_hot(4, gumbel_argmax(a.data(), o));
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(s1.weights.at(k), h[k]);
    EXPECT_EQ(s2.weights.at(k), h[k]);
  }
}

// d(sum_k c_k h_k)/dA through the straight-through pair equals the
// finite-difference slope of sum_k c_k h~_k.
TEST(StraightThrough, GradientFollowsRelaxedPath) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    auto a = testing::random_tensor({5}, rng);
    const auto c = testing::random_tensor({1, 5}, rng, -1, 1, false);
    const auto o = gumbel_noise({6, 0, static_cast<std::uint64_t>(t), 0, 0}, 5);
    const double tau = rng.uniform(0.3, 3.0);
    a.zero_grad();
    backward(ops::sum(ops::mul(straight_through_select(a, o, tau).weights, c)));
    const std::vector<double> g(a.grad().begin(), a.grad().end());
    const auto soft_loss = [&] {
      return ops::sum(ops::mul(straight_through_select(a, o, tau).soft, c));
    };
    const auto r = testing::grad_check(soft_loss, {a}, 1e-6);
    EXPECT_LT(r.rel_error, 1e-6);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(a.grad()[k], g[k], 1e-14);
  }
}

TEST(StraightThrough, SingleCandidateHasZeroGradient) {
  auto a = Tensor::from({1}, {0.37}, true);
  const double o[] = {0.5};
  backward(ops::sum(ops::scale(straight_through_select(a, o, 0.5).weights, 3.0)));
  EXPECT_EQ(a.grad()[0], 0.0);
}

TEST(SelectionMode, NamesRoundTrip) {
  for (auto m : {SelectionMode::hard_sampled, SelectionMode::relaxed, SelectionMode::accelerated}) {
    EXPECT_EQ(parse_selection_mode(selection_mode_name(m)), m);
  }
  EXPECT_THROW(parse_selection_mode("soft"), std::invalid_argument);
}

}  // namespace
}  // namespace gdas

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "slab/baseline.hpp"
#include "slab/graph.hpp"

namespace slab {
namespace {

Distribution one_hot(std::size_t v, std::size_t hot) {
  std::vector<double> p(v, 0.0);
  p[hot] = 1.0;
  return Distribution(p);
}

TEST(DistributionTest, Validation) {
  EXPECT_THROW(Distribution({0.5, 0.4}), InvalidArgument);
  EXPECT_THROW(Distribution({1.5, -0.5}), InvalidArgument);
  EXPECT_THROW(Distribution(std::vector<double>{}), InvalidArgument);
  EXPECT_NO_THROW(Distribution::random(16, 3));
  EXPECT_NEAR(Distribution::uniform(8).entropy(), std::log(8.0), 1e-15);
}

TEST(ExpectedMse, UniformTwoOutcomes) { EXPECT_DOUBLE_EQ(expected_mse(Distribution::uniform(2), 100), 0.0025); }

TEST(ExpectedMse, OneHotIsZero) {
  for (double d : {1.0, 10.0, 1e6}) EXPECT_EQ(expected_mse(one_hot(5, 2), d), 0.0);
}

TEST(ExpectedCse, UniformTwoOutcomes) {
  EXPECT_NEAR(expected_cse(Distribution::uniform(2), 100), std::numbers::ln2 + 0.005, 1e-15);
}

TEST(ExpectedCse, LargeDataLimitIsEntropy) {
  const auto pi = Distribution::random(12, 4);
  EXPECT_NEAR(expected_cse(pi, 1e12, 2), pi.entropy(), 1e-10);
}

TEST(ExpectedCse, SecondOrderNeedsFullSupport) {
  const Distribution pi({0.5, 0.5, 0.0});
  EXPECT_NO_THROW(expected_cse(pi, 100, 1));
  EXPECT_THROW(expected_cse(pi, 100, 2), InvalidArgument);
  EXPECT_THROW(expected_cse(pi, 0.5, 1), InvalidArgument);
  EXPECT_THROW(expected_cse(pi, 100, 3), InvalidArgument);
}

TEST(ExpectedCse, SecondOrderCoefficientUniform) {
  // (5 * 256 - 96 + 1) / 12 for V = 16.
  EXPECT_NEAR(cse_expansion(Distribution::uniform(16), 2).coeff_2, 98.75, 1e-12);
}

TEST(ExpectedCse, NeverBelowEntropy) {
  for (Seed s = 0; s < 20; ++s) {
    const auto pi = Distribution::random(2 + s, s);
    for (double d : {1.0, 3.0, 100.0, 1e5}) EXPECT_GE(expected_cse(pi, d), pi.entropy());
  }
}

TEST(ExpectedCse, ExcessDecaysAsInverseD) {
  const auto pi = Distribution::random(10, 8);
  const auto b = cse_expansion(pi, 1);
  std::vector<double> ld, le;
  for (double d = 10; d <= 1e6; d *= 3) {
    ld.push_back(std::log(d));
    le.push_back(std::log(b.value_at(d) - b.leading));
  }
  EXPECT_NEAR(stats::fit_line(ld, le).slope, -1.0, 1e-12);
}

TEST(McCountingLoss, OneHotMseIsExactlyZero) {
  const auto mc = mc_counting_loss(one_hot(4, 1), 50, LossKind::kMse, 10, 1);
  EXPECT_EQ(mc.mean, 0.0);
  EXPECT_EQ(mc.std_error, 0.0);
}

TEST(McCountingLoss, RejectsSingleTrial) {
  EXPECT_THROW(mc_counting_loss(Distribution::uniform(3), 10, LossKind::kMse, 1, 1), InvalidArgument);
}

TEST(McCountingLoss, DeterministicGivenSeed) {
  const auto pi = Distribution::random(6, 2);
  const auto a = mc_counting_loss(pi, 300, LossKind::kCse, 200, 9);
  const auto b = mc_counting_loss(pi, 300, LossKind::kCse, 200, 9);
  EXPECT_EQ(a.mean, b.mean);
}

TEST(McCountingLoss, RandomPiMseD1000) {
  const auto pi = Distribution::random(16, 21);
  const auto mc = mc_counting_loss(pi, 1000, LossKind::kMse, 100000, 22);
  EXPECT_LE(std::abs(mc.mean - expected_mse(pi, 1000)), 3.0 * mc.std_error);
}

TEST(McCountingLoss, RandomPiMseD100) {
  const auto pi = Distribution::random(16, 23);
  const auto mc = mc_counting_loss(pi, 100, LossKind::kMse, 50000, 24);
  EXPECT_LE(std::abs(mc.mean - expected_mse(pi, 100)), 3.0 * mc.std_error);
}

TEST(McCountingLoss, UniformFourCseSecondOrderTwoSeeds) {
  const auto pi = Distribution::uniform(4);
  const double analytic = expected_cse(pi, 1e4, 2);
  for (Seed s : {31, 32}) {
    const auto mc = mc_counting_loss(pi, 10000, LossKind::kCse, 50000, s);
    EXPECT_LE(std::abs(mc.mean - analytic), 3.0 * mc.std_error) << "seed " << s;
  }
}

TEST(McCountingLoss, SecondOrderTermVisibleAtModerateD) {
  // At D = 400 the 1/D^2 term is ~6e-4, dozens of standard errors.
  const auto pi = Distribution::uniform(16);
  const auto mc = mc_counting_loss(pi, 400, LossKind::kCse, 20000, 40);
  EXPECT_LE(std::abs(mc.mean - expected_cse(pi, 400, 2)), 3.0 * mc.std_error);
  EXPECT_GT(std::abs(mc.mean - expected_cse(pi, 400, 1)), 10.0 * mc.std_error);
}

TEST(McCountingLoss, ScaledExcessApproachesHalfVMinusOne) {
  const auto pi = Distribution::uniform(16);
  double prev = 1e300;
  for (std::uint64_t d : {200, 400, 800}) {
    const auto mc = mc_counting_loss(pi, d, LossKind::kCse, 20000, d);
    const double scaled = static_cast<double>(d) * (mc.mean - pi.entropy());
    EXPECT_NEAR(scaled, 7.5, 0.75) << "D=" << d;
    EXPECT_LT(scaled, prev);
    prev = scaled;
  }
}

TEST(WalkBaseline, FiveCycle) {
  const auto model = build_unbiased_model(cycle_graph(5));
  EXPECT_NEAR(walk_baseline_cse(model, 1000), std::numbers::ln2 + 0.0025, 1e-12);
  for (double d : {10.0, 77.0, 1e4}) EXPECT_NEAR(walk_baseline_cse(model, d), std::numbers::ln2 + 5.0 / (2.0 * d), 1e-12);
}

TEST(WalkBaseline, GraphCoefficientIsTwoEMinusN) {
  const auto g = gen_erdos_renyi(200, 900, 5);
  const auto model = build_unbiased_model(g);
  const auto b = walk_baseline_expansion(model, model.initial);
  EXPECT_NEAR(b.coeff_1, (2.0 * 900 - 200) / 2.0, 1e-9);
}

TEST(WalkBaseline, LimitIsEntropyRate) {
  for (Seed s = 0; s < 10; ++s) {
    const auto g = gen_erdos_renyi(1000, 5000, s);
    const auto label = component_labels(g.n_nodes(), g.edges());
    if (*std::max_element(label.begin(), label.end()) != 0) continue;
    const auto model = build_unbiased_model(g);
    EXPECT_NEAR(walk_baseline_cse(model, 1e15), diagnostics(model).entropy_rate, 1e-9);
    return;
  }
  FAIL() << "no connected sample";
}

TEST(WalkBaseline, MonteCarloMatchesInverseDTerm) {
  for (Seed s = 1;; ++s) {
    const auto g = gen_erdos_renyi(50, 200, s);
    const auto label = component_labels(g.n_nodes(), g.edges());
    if (*std::max_element(label.begin(), label.end()) != 0) continue;
    const auto model = build_unbiased_model(g);
    const auto b = walk_baseline_expansion(model, model.initial);
    const auto mc = mc_counting_loss(model, 10000, 200, 3);
    const double term = b.coeff_1 / 1e4;
    EXPECT_NEAR(mc.mean - b.leading, term, 0.15 * term);
    return;
  }
}

}  // namespace
}  // namespace slab

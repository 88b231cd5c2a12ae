#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "slab/graph.hpp"
#include "slab/stats.hpp"
#include "slab/transition.hpp"
#include "slab/walks.hpp"

namespace slab {
namespace {

TEST(ErdosRenyi, ReferenceSizeHasExactEdgeCount) {
  const auto g = gen_erdos_renyi(8192, 53292, 7);
  EXPECT_EQ(g.n_nodes(), 8192U);
  EXPECT_EQ(g.n_edges(), 53292U);
  std::set<Edge> unique(g.edges().begin(), g.edges().end());
  EXPECT_EQ(unique.size(), g.n_edges());
  for (const auto& e : g.edges()) {
    EXPECT_LT(e.u, e.v);
    EXPECT_LT(e.v, 8192U);
  }
}

TEST(ErdosRenyi, MaximumEdgeCountIsComplete) {
  EXPECT_EQ(gen_erdos_renyi(4, 6, 1), complete_graph(4));
  EXPECT_EQ(gen_erdos_renyi(5, 0, 1).n_edges(), 0U);
}

TEST(ErdosRenyi, RejectsTooManyEdges) {
  EXPECT_THROW(gen_erdos_renyi(4, 7, 1), InvalidArgument);
}

TEST(ErdosRenyi, DegreeSpreadMatchesBinomialApproximation) {
  // Monte-Carlo over 100 seeds: mean degree 2E/n = 10 exactly, and the
  // empirical degree standard deviation stays within 3x the binomial value.
  const std::size_t n = 1000;
  const std::size_t m = 5000;
  const double p = 2.0 * m / (static_cast<double>(n) * (n - 1));
  const double binomial_sd = std::sqrt(p * (1 - p) * (n - 1));
  std::vector<double> sds;
  for (Seed s = 0; s < 100; ++s) {
    const auto deg = gen_erdos_renyi(n, m, s).degrees();
    std::vector<double> d(deg.begin(), deg.end());
    EXPECT_DOUBLE_EQ(stats::mean(d), 10.0);
    const double sd = stats::stddev(d);
    EXPECT_LT(sd, 3.0 * binomial_sd);
    EXPECT_GT(sd, binomial_sd / 3.0);
    sds.push_back(sd);
  }
  // G(n, M) is slightly tighter than G(n, p); the average sits near the value.
  EXPECT_NEAR(stats::mean(sds) / binomial_sd, 1.0, 0.05);
}

TEST(ErdosRenyi, DeterministicGivenSeed) {
  EXPECT_EQ(gen_erdos_renyi(500, 2000, 42), gen_erdos_renyi(500, 2000, 42));
  EXPECT_NE(gen_erdos_renyi(500, 2000, 42), gen_erdos_renyi(500, 2000, 43));
}

TEST(BarabasiAlbert, AttachmentCountMatchingReferenceEdgeCount) {
  // Enumerate m and compare generated edge counts against 49,131.
  std::size_t match = 0;
  for (std::size_t m = 1; m <= 12; ++m) {
    const auto g = gen_barabasi_albert(8192, m, 3);
    EXPECT_EQ(g.n_edges(), m * (m + 1) / 2 + (8192 - m - 1) * m);
    if (g.n_edges() == 49131) match = m;
  }
  EXPECT_EQ(match, 6U);
}

TEST(BarabasiAlbert, SingleAttachmentGivesTree) {
  const auto g = gen_barabasi_albert(3, 1, 0);
  EXPECT_EQ(g.n_edges(), 2U);
  const auto label = component_labels(g.n_nodes(), g.edges());
  EXPECT_EQ(*std::max_element(label.begin(), label.end()), 0U);
}

TEST(BarabasiAlbert, TailExponentNearThree) {
  const auto g = gen_barabasi_albert(10000, 6, 11);
  const double gamma = tail_exponent_mle(g.degrees(), 20);
  EXPECT_NEAR(gamma, 3.0, 0.3);
}

TEST(BarabasiAlbert, RejectsBadAttachment) {
  EXPECT_THROW(gen_barabasi_albert(5, 5, 0), InvalidArgument);
  EXPECT_THROW(gen_barabasi_albert(5, 0, 0), InvalidArgument);
}

TEST(Weights, DegenerateRangeGivesUnitWeights) {
  const auto g = gen_erdos_renyi(100, 300, 1);
  const auto wg = assign_weights(g, 0.0, 1, 1, 5);
  for (std::size_t i = 0; i < g.n_edges(); ++i) {
    EXPECT_EQ(wg.forward[i], 1U);
    EXPECT_EQ(wg.backward[i], 1U);
  }
  EXPECT_EQ(build_transition_model(wg), build_unbiased_model(g));
}

TEST(Weights, RejectsInvertedRange) {
  const auto g = complete_graph(4);
  EXPECT_THROW(assign_weights(g, 1.0, 5, 2, 0), InvalidArgument);
}

TEST(Weights, SampledFrequenciesMatchTruncatedPowerLaw) {
  const DiscretePowerLaw law(1.0, 1, 10);
  double h10 = 0.0;
  for (int k = 1; k <= 10; ++k) h10 += 1.0 / k;
  Rng rng(3);
  std::vector<double> counts(11, 0.0);
  const int draws = 200000;
  for (int i = 0; i < draws; ++i) counts[law(rng)] += 1.0;
  for (int k = 1; k <= 10; ++k) {
    const double p = (1.0 / k) / h10;
    EXPECT_NEAR(law.probability(static_cast<std::uint32_t>(k)), p, 1e-12);
    const double sd = std::sqrt(draws * p * (1 - p));
    EXPECT_NEAR(counts[k], draws * p, 5 * sd) << "k=" << k;
  }
}

TEST(Weights, UniformWhenKappaZero) {
  const DiscretePowerLaw law(0.0, 3, 7);
  for (std::uint32_t k = 3; k <= 7; ++k) EXPECT_NEAR(law.probability(k), 0.2, 1e-12);
}

TEST(Weights, DirectionsSampledIndependently) {
  const auto g = complete_graph(60);
  const auto wg = assign_weights(g, 1.0, 1, 1000, 9);
  std::size_t equal = 0;
  for (std::size_t i = 0; i < g.n_edges(); ++i) equal += wg.forward[i] == wg.backward[i] ? 1 : 0;
  // Two independent 1/k draws on [1, 1000] collide with probability ~0.13.
  EXPECT_LT(equal, g.n_edges() / 4);
}

// R^2 of log p(u|v) against rank for a typical 50-edge node: median over the
// rows of a complete graph on 51 nodes.
TEST(Weights, KappaOneRankLawIsLogLinear) {
  const auto wg = assign_weights(complete_graph(51), 1.0, 1, 1000, 17);
  const auto model = build_transition_model(wg);
  std::vector<double> r2;
  for (std::size_t u = 0; u < model.n_nodes; ++u) {
    std::vector<double> row(model.row_probs(u).begin(), model.row_probs(u).end());
    std::sort(row.begin(), row.end(), std::greater<>());
    r2.push_back(rank_law_fit(row, 1, row.size(), /*log_rank=*/false).r_squared);
  }
  EXPECT_GE(stats::median(r2), 0.98);
}

TEST(Weights, KappaTwoRankExponentNearOne) {
  // P(k) ~ k^-2 gives p(u|v) ~ r^-1 over the top ranks of a high-degree node.
  const auto wg = assign_weights(complete_graph(1001), 2.0, 1, 1000, 23);
  const auto model = build_transition_model(wg);
  std::vector<double> slopes;
  for (std::size_t u = 0; u < 50; ++u) {
    std::vector<double> row(model.row_probs(u).begin(), model.row_probs(u).end());
    std::sort(row.begin(), row.end(), std::greater<>());
    slopes.push_back(-rank_law_fit(row, 1, 100).slope);
  }
  EXPECT_NEAR(stats::mean(slopes), 1.0, 0.15);
}

TEST(TransitionModel, FiveCycle) {
  const auto m = build_unbiased_model(cycle_graph(5));
  for (std::size_t u = 0; u < 5; ++u) {
    EXPECT_DOUBLE_EQ(m.probability(u, (u + 1) % 5), 0.5);
    EXPECT_DOUBLE_EQ(m.probability(u, (u + 4) % 5), 0.5);
    EXPECT_DOUBLE_EQ(m.probability(u, (u + 2) % 5), 0.0);
    EXPECT_DOUBLE_EQ(m.initial[u], 0.2);
  }
}

TEST(TransitionModel, UnbiasedInitialIsDegreeOverTwoE) {
  const auto g = gen_erdos_renyi(300, 1500, 4);
  const auto deg = g.degrees();
  if (std::find(deg.begin(), deg.end(), 0U) != deg.end()) GTEST_SKIP() << "isolated node for this seed";
  const auto m = build_transition_model(unit_weights(g));
  for (std::size_t v = 0; v < g.n_nodes(); ++v) EXPECT_DOUBLE_EQ(m.initial[v], deg[v] / 3000.0);
}

TEST(TransitionModel, WeightedRowsAreStochastic) {
  const auto g = gen_erdos_renyi(2000, 20000, 5);
  const auto deg = g.degrees();
  ASSERT_EQ(std::count(deg.begin(), deg.end(), 0U), 0);
  const auto m = build_transition_model(assign_weights(g, 1.0, 1, 1000, 6));
  EXPECT_LE(m.max_row_error(), 1e-12);
  EXPECT_NO_THROW(m.validate());
}

TEST(TransitionModel, IsolatedNodeIsNamed) {
  const Graph g(4, {{0, 1}, {1, 2}});
  try {
    build_transition_model(unit_weights(g));
    FAIL() << "expected DegenerateInput";
  } catch (const DegenerateInput& e) {
    EXPECT_NE(std::string(e.what()).find("node 3"), std::string::npos);
  }
}

TEST(TransitionModel, KappaOneSmoothsUnigram) {
  // Unbiased ER unigram has long plateaus (few distinct degrees); power-law
  // weights break them up.
  const auto g = gen_erdos_renyi(8192, 53292, 1);
  const auto label = component_labels(g.n_nodes(), g.edges());
  std::vector<std::size_t> keep;
  const auto deg = g.degrees();
  std::vector<Edge> edges = g.edges();
  if (std::count(deg.begin(), deg.end(), 0U) > 0) GTEST_SKIP() << "isolated node";
  const auto flat = ranked_distributions(build_unbiased_model(g))[0];
  const auto smooth = ranked_distributions(build_transition_model(assign_weights(g, 1.0, 1, 1000, 2)))[0];
  const auto runs_flat = plateau_lengths(flat.probabilities, 1e-6);
  const auto runs_smooth = plateau_lengths(smooth.probabilities, 1e-6);
  const double mean_flat = static_cast<double>(flat.probabilities.size()) / runs_flat.size();
  const double mean_smooth = static_cast<double>(smooth.probabilities.size()) / runs_smooth.size();
  EXPECT_GT(mean_flat, 100.0);
  EXPECT_LT(mean_smooth, 2.0);
}

TEST(Bigram, HandCountedCorpus) {
  // a=0, b=1, c=2: "a b a b a c" -> (a,b) x2, (b,a) x2, (a,c) x1.
  const std::vector<NodeId> corpus{0, 1, 0, 1, 0, 2};
  const auto m = build_bigram_model(count_bigrams(corpus, 3), 0);
  EXPECT_DOUBLE_EQ(m.probability(0, 1), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.probability(0, 2), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.probability(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.initial[0], 3.0 / 5.0);
  EXPECT_DOUBLE_EQ(m.initial[1], 2.0 / 5.0);
  EXPECT_DOUBLE_EQ(m.initial[2], 0.0);
  EXPECT_EQ(m.n_nodes, 3U);
}

TEST(Bigram, FiltersLowCounts) {
  BigramCounts bc{4, {}};
  bc.add(0, 1, 10);
  bc.add(1, 0, 3);
  bc.add(1, 2, 8);
  const auto m = build_bigram_model(bc, 5);
  EXPECT_DOUBLE_EQ(m.probability(1, 2), 1.0);
  EXPECT_DOUBLE_EQ(m.probability(1, 0), 0.0);
  EXPECT_THROW(build_bigram_model(bc, 10), DegenerateInput);
}

TEST(Bigram, CountsFileRoundTrip) {
  BigramCounts bc{5, {}};
  bc.add(0, 4, 7);
  bc.add(3, 1, 2);
  std::stringstream ss;
  write_bigram_counts(ss, bc);
  const auto back = read_bigram_counts(ss, 5);
  EXPECT_EQ(back.counts, bc.counts);
  std::stringstream bad("0 9 1\n");
  EXPECT_THROW(read_bigram_counts(bad, 5), IoError);
}

TEST(Formats, EdgeListAndModelRoundTrip) {
  for (Seed s = 0; s < 5; ++s) {
    const auto g = gen_erdos_renyi(200, 900 + s * 37, s);
    const auto wg = assign_weights(g, 1.0, 1, 1000, s + 100);
    std::stringstream text;
    write_edge_list(text, wg);
    const auto file = read_edge_list(text);
    EXPECT_EQ(file.graph, g);
    ASSERT_TRUE(file.weights.has_value());
    EXPECT_EQ(file.weights->forward, wg.forward);
    EXPECT_EQ(file.weights->backward, wg.backward);

    const auto deg = g.degrees();
    if (std::count(deg.begin(), deg.end(), 0U) > 0) continue;
    const auto model = build_transition_model(wg);
    std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
    write_transition_model(bin, model);
    EXPECT_EQ(read_transition_model(bin), model);
  }
}

TEST(Formats, TransitionHeaderIsLittleEndian) {
  const auto model = build_unbiased_model(cycle_graph(3));
  std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
  write_transition_model(bin, model);
  const std::string bytes = bin.str();
  ASSERT_GE(bytes.size(), 14U);
  EXPECT_EQ(bytes.substr(0, 4), "SLTM");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 3);
  // 4 + 2 + 8 + 4*8 offsets + 6*4 columns + 6*8 probs + 3*8 initial
  EXPECT_EQ(bytes.size(), 4U + 2 + 8 + 32 + 24 + 48 + 24);
}

TEST(Formats, EdgeListRejectsWrongCount) {
  std::stringstream ss("#nodes=3 edges=2\n0 1\n");
  EXPECT_THROW(read_edge_list(ss), IoError);
}

}  // namespace
}  // namespace slab

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "slab/graph.hpp"
#include "slab/transition.hpp"
#include "slab/walks.hpp"

namespace slab {
namespace {

TransitionModel two_cycle() {
  TransitionModel m;
  m.n_nodes = 2;
  m.row_offsets = {0, 1, 2};
  m.columns = {1, 0};
  m.probs = {1.0, 1.0};
  m.initial = {1.0, 0.0};
  return m;
}

TransitionModel connected_er(std::size_t n, std::size_t e, Seed seed, double kappa = 0.0) {
  for (Seed s = seed;; ++s) {
    const auto g = gen_erdos_renyi(n, e, s);
    const auto label = component_labels(g.n_nodes(), g.edges());
    if (*std::max_element(label.begin(), label.end()) != 0) continue;
    return kappa == 0.0 ? build_unbiased_model(g) : build_transition_model(assign_weights(g, kappa, 1, 1000, s + 1));
  }
}

// Dense oracle: every eigenvalue of W, Perron root removed.
double dense_second_magnitude(const TransitionModel& m) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m.n_nodes, m.n_nodes);
  for (std::size_t u = 0; u < m.n_nodes; ++u)
    for (std::size_t k = 0; k < m.out_degree(u); ++k) w(u, m.row_columns(u)[k]) = m.row_probs(u)[k];
  Eigen::EigenSolver<Eigen::MatrixXd> es(w);
  std::vector<double> mags;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) mags.push_back(std::abs(es.eigenvalues()[i]));
  std::sort(mags.begin(), mags.end(), std::greater<>());
  return mags[1];
}

TEST(SampleWalks, DeterministicChain) {
  const auto ds = sample_walks(two_cycle(), 5, 8, 1);
  for (std::uint64_t i = 0; i < ds.n_seqs; ++i) {
    const auto row = ds.row(i);
    EXPECT_EQ(std::vector<NodeId>(row.begin(), row.end()), (std::vector<NodeId>{0, 1, 0, 1, 0}));
  }
}

TEST(SampleWalks, BatchShape) {
  const auto model = build_unbiased_model(cycle_graph(7));
  const auto ds = sample_walks(model, 50, 100, 3);
  EXPECT_EQ(ds.n_seqs, 100U);
  EXPECT_EQ(ds.seq_len, 50U);
  EXPECT_EQ(ds.tokens.size(), 5000U);
  EXPECT_EQ(ds.total_tokens(), 5000U);
}

TEST(SampleWalks, IndependentOfThreadCount) {
  const auto model = connected_er(500, 3000, 1, 1.0);
  const auto a = sample_walks(model, 40, 300, 99, 1);
  const auto b = sample_walks(model, 40, 300, 99, 4);
  EXPECT_EQ(a, b);
}

TEST(SampleWalks, EveryTransitionIsLegal) {
  const auto model = connected_er(1000, 5000, 2, 1.0);
  const auto ds = sample_walks(model, 50, 2000, 5);
  EXPECT_EQ(count_illegal_transitions(model, ds), 0U);
}

TEST(SampleWalks, DeadEndRestartsFromInitial) {
  const std::vector<NodeId> corpus{0, 1, 0, 1, 0, 2};
  const auto model = build_bigram_model(count_bigrams(corpus, 3), 0);
  const auto ds = sample_walks(model, 30, 200, 8);
  EXPECT_EQ(count_illegal_transitions(model, ds), 0U);
}

TEST(SampleWalks, UnigramMatchesDegreeLawOnReferenceGraph) {
  const auto g = gen_erdos_renyi(8192, 53292, 1);
  const auto model = build_unbiased_model(g);
  const auto ds = sample_walks(model, 50, 1000000, 7);
  const auto freq = unigram_frequencies(ds);
  EXPECT_LT(total_variation(freq, model.initial), 0.01);
}

TEST(SampleWalks, EmpiricalUnigramConverges) {
  const auto model = connected_er(200, 800, 3);
  const auto pi = stationary_distribution(model);
  std::vector<double> tv;
  for (std::uint64_t rows : {200ULL, 2000ULL, 20000ULL}) {
    const auto ds = sample_walks(model, 50, rows, 11);
    tv.push_back(total_variation(unigram_frequencies(ds), pi));
  }
  EXPECT_GT(tv[0], tv[1]);
  EXPECT_GT(tv[1], tv[2]);
}

TEST(SampleWalks, ExactDistributionsMatchLargeSample) {
  const auto model = connected_er(1000, 5000, 4, 1.0);
  const auto pi = stationary_distribution(model);
  TransitionModel started = model;
  started.initial = pi;
  const auto ds = sample_walks(started, 100, 100000, 12);  // 1e7 tokens
  EXPECT_LT(total_variation(unigram_frequencies(ds), pi), 0.02);
}

TEST(WalkFormat, RoundTripAndHeader) {
  const auto ds = sample_walks(build_unbiased_model(cycle_graph(5)), 6, 3, 2);
  std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
  write_walks(bin, ds);
  const std::string bytes = bin.str();
  EXPECT_EQ(bytes.substr(0, 4), "SLWK");
  EXPECT_EQ(bytes.size(), 4U + 2 + 4 + 4 + 8 + 18 * 4);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 5U);   // vocab, LE
  EXPECT_EQ(static_cast<unsigned char>(bytes[10]), 6U);  // seq_len
  auto back = read_walks(bin);
  back.seed = ds.seed;  // the seed lives in the manifest, not the stream
  EXPECT_EQ(back, ds);
}

TEST(WalkFormat, RejectsOutOfVocabularyToken) {
  WalkDataset ds{3, 2, 1, 0, {0, 7}};
  std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
  write_walks(bin, ds);
  EXPECT_THROW(read_walks(bin), IoError);
}

TEST(Ranked, RegularGraphUnigramIsFlat) {
  const auto dists = ranked_distributions(build_unbiased_model(complete_graph(9)));
  ASSERT_EQ(dists.size(), 3U);
  for (double p : dists[0].probabilities) EXPECT_NEAR(p, 1.0 / 9.0, 1e-12);
  for (double p : dists[1].probabilities) EXPECT_NEAR(p, 1.0 / 8.0, 1e-12);
}

TEST(Ranked, SortedAndNormalized) {
  const auto dists = ranked_distributions(connected_er(300, 1500, 5, 1.0));
  for (const auto& d : dists)
    EXPECT_TRUE(std::is_sorted(d.probabilities.begin(), d.probabilities.end(), std::greater<>()));
  const auto sum = [](const auto& v) { return std::accumulate(v.begin(), v.end(), 0.0); };
  EXPECT_NEAR(sum(dists[0].probabilities), 1.0, 1e-9);
  EXPECT_NEAR(sum(dists[2].probabilities), 1.0, 1e-9);
}

TEST(Ranked, BarabasiAlbertUnigramRankExponent) {
  const auto g = gen_barabasi_albert(8192, 6, 1);
  const auto dists = ranked_distributions(build_unbiased_model(g));
  const double exponent = -rank_law_fit(dists[0].probabilities, 10, 1000).slope;
  EXPECT_NEAR(exponent, 0.5, 0.1);
}

TEST(Ranked, ErUnigramHasPlateaus) {
  const auto g = gen_erdos_renyi(8192, 53292, 1);
  const auto dists = ranked_distributions(build_unbiased_model(g));
  const auto runs = plateau_lengths(dists[0].probabilities, 1e-6);
  // A few dozen distinct degrees cover 8192 nodes.
  EXPECT_LT(runs.size(), 60U);
  EXPECT_GT(*std::max_element(runs.begin(), runs.end()), 500U);
}

TEST(Diagnostics, CompleteGraphK4) {
  const auto d = diagnostics(build_unbiased_model(complete_graph(4)));
  EXPECT_NEAR(d.lambda2_real, -1.0 / 3.0, 1e-9);
  EXPECT_NEAR(d.spectral_gap, 2.0 / 3.0, 1e-9);
  EXPECT_NEAR(d.entropy_rate, std::log(3.0), 1e-12);
  EXPECT_NEAR(d.stationary_entropy, std::log(4.0), 1e-12);
}

TEST(Diagnostics, FiveCycle) {
  const auto d = diagnostics(build_unbiased_model(cycle_graph(5)));
  EXPECT_NEAR(d.entropy_rate, std::numbers::ln2, 1e-12);
  EXPECT_NEAR(d.stationary_entropy, std::log(5.0), 1e-12);
  EXPECT_NEAR(std::abs(d.lambda2_real), std::cos(std::numbers::pi / 5.0), 1e-9);
  EXPECT_NEAR(d.spectral_gap, 1.0 - std::cos(std::numbers::pi / 5.0), 1e-9);
}

TEST(Diagnostics, SpectralGapMatchesDenseOracle) {
  for (Seed s = 0; s < 4; ++s) {
    const auto model = connected_er(150, 500, 10 * s, s % 2 == 0 ? 0.0 : 1.0);
    const auto d = diagnostics(model);
    EXPECT_NEAR(1.0 - d.spectral_gap, dense_second_magnitude(model), 1e-7) << "seed " << s;
  }
}

TEST(Diagnostics, StationaryIsDegreeLaw) {
  const auto g = gen_erdos_renyi(1000, 5000, 21);
  const auto label = component_labels(g.n_nodes(), g.edges());
  if (*std::max_element(label.begin(), label.end()) != 0) GTEST_SKIP() << "disconnected sample";
  const auto d = diagnostics(build_unbiased_model(g));
  const auto deg = g.degrees();
  double worst = 0.0;
  for (std::size_t v = 0; v < g.n_nodes(); ++v) worst = std::max(worst, std::abs(d.stationary[v] - deg[v] / 10000.0));
  EXPECT_LT(worst, 1e-9);
}

TEST(Diagnostics, EntropyRateBelowStationaryEntropy) {
  for (Seed s = 0; s < 6; ++s) {
    const auto d = diagnostics(connected_er(120, 400, 100 + s, s % 2 == 0 ? 0.0 : 1.0 + 0.5 * s));
    EXPECT_LE(d.entropy_rate, d.stationary_entropy);
  }
}

TEST(Diagnostics, DisconnectedGraphUsesGiantComponent) {
  // Triangle plus a separate edge.
  const Graph g(5, {{0, 1}, {1, 2}, {0, 2}, {3, 4}});
  const auto d = diagnostics(build_unbiased_model(g));
  ASSERT_EQ(d.warnings.size(), 1U);
  EXPECT_EQ(d.n_nodes_used, 3U);
  EXPECT_NEAR(d.entropy_rate, std::numbers::ln2, 1e-12);
  EXPECT_DOUBLE_EQ(d.stationary[3], 0.0);
  EXPECT_NEAR(d.stationary[0], 1.0 / 3.0, 1e-12);
}

}  // namespace
}  // namespace slab

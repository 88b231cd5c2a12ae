#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slab/error.hpp"
#include "slab/io.hpp"
#include "slab/parallel.hpp"
#include "slab/rng.hpp"
#include "slab/stats.hpp"
#include "slab/transition.hpp"

namespace slab {

// Walker/Vose alias table over a discrete distribution; O(1) draws.
class AliasTable {
 public:
  AliasTable() = default;

  explicit AliasTable(std::span<const double> weights) { build(weights, prob_, alias_, 0); }

  std::size_t size() const { return prob_.size(); }

  std::size_t operator()(Rng& rng) const {
    const auto k = static_cast<std::size_t>(rng.below(prob_.size()));
    return rng.uniform() < prob_[k] ? k : alias_[k];
  }

  // Builds the table for `weights` into prob/alias at offset `base`; alias
  // entries are indices relative to the segment.
  static void build(std::span<const double> weights, std::vector<double>& prob, std::vector<std::uint32_t>& alias,
                    std::size_t base) {
    const std::size_t n = weights.size();
    prob.resize(std::max(prob.size(), base + n));
    alias.resize(std::max(alias.size(), base + n));
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (n == 0 || !(total > 0.0)) throw InvalidArgument("alias table: weights must have positive mass");
    std::vector<double> scaled(n);
    std::vector<std::uint32_t> small;
    std::vector<std::uint32_t> large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = weights[i] * static_cast<double>(n) / total;
      (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    }
    while (!small.empty() && !large.empty()) {
      const auto s = small.back();
      small.pop_back();
      const auto l = large.back();
      prob[base + s] = scaled[s];
      alias[base + s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (auto i : large) {
      prob[base + i] = 1.0;
      alias[base + i] = i;
    }
    for (auto i : small) {
      prob[base + i] = 1.0;
      alias[base + i] = i;
    }
  }

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

// Per-row alias tables laid out parallel to the model's CSR arrays.
class WalkSampler {
 public:
  explicit WalkSampler(const TransitionModel& model) : model_(&model), initial_(model.initial) {
    prob_.resize(model.n_transitions());
    alias_.resize(model.n_transitions());
    for (std::size_t u = 0; u < model.n_nodes; ++u)
      if (model.out_degree(u) > 0) AliasTable::build(model.row_probs(u), prob_, alias_, model.row_offsets[u]);
  }

  NodeId initial(Rng& rng) const { return static_cast<NodeId>(initial_(rng)); }

  // A token with no outgoing bigram restarts the walk from M.
  NodeId next(NodeId u, Rng& rng) const {
    const auto deg = model_->out_degree(u);
    if (deg == 0) return initial(rng);
    const auto base = model_->row_offsets[u];
    auto k = static_cast<std::size_t>(rng.below(deg));
    if (!(rng.uniform() < prob_[base + k])) k = alias_[base + k];
    return model_->columns[base + k];
  }

 private:
  const TransitionModel* model_;
  AliasTable initial_;
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

// Fixed-length walks, row-major.
struct WalkDataset {
  std::uint32_t vocab_size = 0;
  std::uint32_t seq_len = 0;
  std::uint64_t n_seqs = 0;
  Seed seed = 0;
  std::vector<NodeId> tokens;

  std::uint64_t total_tokens() const { return n_seqs * seq_len; }
  std::span<const NodeId> row(std::size_t i) const { return {tokens.data() + i * seq_len, seq_len}; }

  friend bool operator==(const WalkDataset&, const WalkDataset&) = default;
};

// Row i is drawn from its own stream derive_seed(seed, i), so the result does
// not depend on the worker count.
inline WalkDataset sample_walks(const TransitionModel& model, std::uint32_t seq_len, std::uint64_t n_seqs, Seed seed,
                                unsigned threads = thread_count()) {
  if (seq_len < 1) throw InvalidArgument("sample_walks: seq_len must be >= 1");
  if (model.n_nodes == 0 || model.n_nodes > std::numeric_limits<std::uint32_t>::max())
    throw InvalidArgument("sample_walks: invalid vocabulary size");
  const WalkSampler sampler(model);
  WalkDataset ds{static_cast<std::uint32_t>(model.n_nodes), seq_len, n_seqs, seed, {}};
  ds.tokens.resize(n_seqs * seq_len);
  parallel_for(
      n_seqs,
      [&](std::size_t i) {
        Rng rng(seed, i);
        NodeId* out = ds.tokens.data() + i * seq_len;
        out[0] = sampler.initial(rng);
        for (std::uint32_t t = 1; t < seq_len; ++t) out[t] = sampler.next(out[t - 1], rng);
      },
      threads);
  return ds;
}

// Every consecutive pair must be a positive-probability transition (or a
// restart after a dead end). Returns the number of illegal transitions.
inline std::size_t count_illegal_transitions(const TransitionModel& model, const WalkDataset& ds) {
  std::size_t bad = 0;
  for (std::uint64_t i = 0; i < ds.n_seqs; ++i) {
    const auto row = ds.row(i);
    if (row[0] >= model.n_nodes || model.initial[row[0]] <= 0.0) ++bad;
    for (std::size_t t = 1; t < row.size(); ++t) {
      if (row[t] >= model.n_nodes) {
        ++bad;
        continue;
      }
      const bool ok = model.out_degree(row[t - 1]) == 0 ? model.initial[row[t]] > 0.0
                                                         : model.probability(row[t - 1], row[t]) > 0.0;
      if (!ok) ++bad;
    }
  }
  return bad;
}

// Token-stream layout (little-endian): "SLWK", u16 version, u32 vocab_size,
// u32 seq_len, u64 n_seqs, then u32 tokens row-major.
inline constexpr std::uint16_t kWalkFormatVersion = 1;

inline void write_walks(std::ostream& os, const WalkDataset& ds) {
  io::write_magic(os, "SLWK");
  io::write_le<std::uint16_t>(os, kWalkFormatVersion);
  io::write_le<std::uint32_t>(os, ds.vocab_size);
  io::write_le<std::uint32_t>(os, ds.seq_len);
  io::write_le<std::uint64_t>(os, ds.n_seqs);
  for (auto t : ds.tokens) io::write_le<std::uint32_t>(os, t);
  if (!os) throw IoError("token stream: write failed");
}

inline WalkDataset read_walks(std::istream& is) {
  io::expect_magic(is, "SLWK");
  const auto version = io::read_le<std::uint16_t>(is, "version");
  if (version != kWalkFormatVersion) throw IoError("token stream: unsupported version " + std::to_string(version));
  WalkDataset ds;
  ds.vocab_size = io::read_le<std::uint32_t>(is, "vocab_size");
  ds.seq_len = io::read_le<std::uint32_t>(is, "seq_len");
  ds.n_seqs = io::read_le<std::uint64_t>(is, "n_seqs");
  ds.tokens.resize(ds.n_seqs * ds.seq_len);
  for (auto& t : ds.tokens) {
    t = io::read_le<std::uint32_t>(is, "tokens");
    if (t >= ds.vocab_size) throw IoError("token stream: token " + std::to_string(t) + " outside vocabulary");
  }
  return ds;
}

// Empirical unigram frequencies of a dataset.
inline std::vector<double> unigram_frequencies(const WalkDataset& ds) {
  std::vector<double> freq(ds.vocab_size, 0.0);
  for (auto t : ds.tokens) freq[t] += 1.0;
  const double n = static_cast<double>(ds.tokens.size());
  for (auto& f : freq) f /= n;
  return freq;
}

inline double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidArgument("total_variation: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

enum class RankedKind { kUnigram, kBigramConditional, kBigramJoint };

inline const char* to_string(RankedKind k) {
  switch (k) {
    case RankedKind::kUnigram: return "unigram";
    case RankedKind::kBigramConditional: return "bigram-conditional";
    case RankedKind::kBigramJoint: return "bigram-joint";
  }
  return "?";
}

// Probabilities sorted in descending order; rank r is index r - 1.
struct RankedDistribution {
  RankedKind kind = RankedKind::kUnigram;
  std::vector<double> probabilities;
};

inline void write_ranked_csv(std::ostream& os, std::span<const RankedDistribution> dists, bool header = true) {
  if (header) os << "rank,probability,kind\n";
  for (const auto& d : dists)
    for (std::size_t r = 0; r < d.probabilities.size(); ++r)
      os << (r + 1) << ',' << d.probabilities[r] << ',' << to_string(d.kind) << '\n';
}

// Run lengths of equal consecutive values (relative tolerance rel_tol).
inline std::vector<std::size_t> plateau_lengths(std::span<const double> ranked, double rel_tol = 1e-9) {
  std::vector<std::size_t> runs;
  std::size_t run = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (i > 0 && std::abs(ranked[i] - ranked[i - 1]) <= rel_tol * std::abs(ranked[i - 1])) {
      ++run;
    } else {
      if (run > 0) runs.push_back(run);
      run = 1;
    }
  }
  if (run > 0) runs.push_back(run);
  return runs;
}

// Rank-law exponent: minus the log-log slope of probability against rank over
// ranks [rank_lo, rank_hi] (1-based, inclusive).
inline stats::LineFit rank_law_fit(std::span<const double> ranked, std::size_t rank_lo, std::size_t rank_hi,
                                   bool log_rank = true) {
  rank_hi = std::min(rank_hi, ranked.size());
  if (rank_lo < 1 || rank_hi <= rank_lo) throw InvalidArgument("rank_law_fit: empty rank window");
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t r = rank_lo; r <= rank_hi; ++r) {
    if (ranked[r - 1] <= 0.0) continue;
    xs.push_back(log_rank ? std::log(static_cast<double>(r)) : static_cast<double>(r));
    ys.push_back(std::log(ranked[r - 1]));
  }
  return stats::fit_line(xs, ys);
}

struct ModelDiagnostics {
  std::vector<double> stationary;
  double lambda2_real = 0.0;
  double lambda2_imag = 0.0;
  double spectral_gap = 0.0;
  double entropy_rate = 0.0;        // nats
  double stationary_entropy = 0.0;  // nats
  std::size_t n_nodes_used = 0;
  std::vector<std::string> warnings;
};

namespace detail {

// y = W x with dead-end rows acting as the restart distribution M.
inline void apply_right(const TransitionModel& m, std::span<const double> x, std::span<double> y) {
  double restart = 0.0;
  bool have_restart = false;
  for (std::size_t u = 0; u < m.n_nodes; ++u) {
    const auto cols = m.row_columns(u);
    if (cols.empty()) {
      if (!have_restart) {
        for (std::size_t v = 0; v < m.n_nodes; ++v) restart += m.initial[v] * x[v];
        have_restart = true;
      }
      y[u] = restart;
      continue;
    }
    const auto ps = m.row_probs(u);
    double s = 0.0;
    for (std::size_t k = 0; k < cols.size(); ++k) s += ps[k] * x[cols[k]];
    y[u] = s;
  }
}

// y = x W (left action, distributions evolve this way).
inline void apply_left(const TransitionModel& m, std::span<const double> x, std::span<double> y) {
  std::fill(y.begin(), y.end(), 0.0);
  double dead_mass = 0.0;
  for (std::size_t u = 0; u < m.n_nodes; ++u) {
    const auto cols = m.row_columns(u);
    if (cols.empty()) {
      dead_mass += x[u];
      continue;
    }
    const auto ps = m.row_probs(u);
    for (std::size_t k = 0; k < cols.size(); ++k) y[cols[k]] += x[u] * ps[k];
  }
  if (dead_mass != 0.0)
    for (std::size_t v = 0; v < m.n_nodes; ++v) y[v] += dead_mass * m.initial[v];
}

// Keeps only nodes carrying `label` and renormalizes M on them.
inline TransitionModel restrict_model(const TransitionModel& m, const std::vector<std::size_t>& label,
                                      std::size_t keep, std::vector<std::size_t>& kept_nodes) {
  std::vector<std::size_t> new_id(m.n_nodes, SIZE_MAX);
  kept_nodes.clear();
  for (std::size_t u = 0; u < m.n_nodes; ++u)
    if (label[u] == keep) {
      new_id[u] = kept_nodes.size();
      kept_nodes.push_back(u);
    }
  TransitionModel sub;
  sub.n_nodes = kept_nodes.size();
  double mass = 0.0;
  for (auto u : kept_nodes) mass += m.initial[u];
  for (auto u : kept_nodes) {
    const auto cols = m.row_columns(u);
    const auto ps = m.row_probs(u);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      sub.columns.push_back(static_cast<NodeId>(new_id[cols[k]]));
      sub.probs.push_back(ps[k]);
    }
    sub.row_offsets.push_back(sub.columns.size());
    sub.initial.push_back(mass > 0.0 ? m.initial[u] / mass : 1.0 / static_cast<double>(kept_nodes.size()));
  }
  return sub;
}

}  // namespace detail

// Stationary distribution by lazy power iteration p <- (p + pW) / 2, which
// shares the fixed point of W and also converges on periodic chains.
inline std::vector<double> stationary_distribution(const TransitionModel& m, double tol = 1e-12,
                                                   std::size_t max_iter = 200000) {
  std::vector<double> p(m.initial);
  if (std::accumulate(p.begin(), p.end(), 0.0) <= 0.0) std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(m.n_nodes));
  std::vector<double> next(m.n_nodes);
  double change = INFINITY;
  for (std::size_t it = 0; it < max_iter; ++it) {
    detail::apply_left(m, p, next);
    change = 0.0;
    double total = 0.0;
    for (std::size_t v = 0; v < m.n_nodes; ++v) {
      next[v] = 0.5 * (p[v] + next[v]);
      total += next[v];
    }
    for (std::size_t v = 0; v < m.n_nodes; ++v) {
      next[v] /= total;
      change = std::max(change, std::abs(next[v] - p[v]));
    }
    p.swap(next);
    if (change <= tol) return p;
  }
  throw NumericFailure("stationary_distribution: no convergence, last L-inf change " + std::to_string(change));
}

struct SecondEigenvalue {
  std::complex<double> value;
  double residual = 0.0;
};

// Largest-magnitude eigenvalue of W other than the Perron root, found by
// Arnoldi iteration on the deflated operator x -> W x - 1 (pi . x).
inline SecondEigenvalue second_eigenvalue(const TransitionModel& m, std::span<const double> stationary,
                                          double tol = 1e-9, std::size_t max_krylov = 600) {
  const auto n = static_cast<Eigen::Index>(m.n_nodes);
  if (n < 2) return {{0.0, 0.0}, 0.0};
  const auto kmax = static_cast<Eigen::Index>(std::min<std::size_t>(max_krylov, m.n_nodes - 1));
  Eigen::MatrixXd basis(n, kmax + 1);
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(kmax + 1, kmax);
  Rng rng(0x5eed);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
  basis.col(0) = v / v.norm();
  Eigen::VectorXd w(n);
  auto apply = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    detail::apply_right(m, std::span<const double>(x.data(), x.size()), std::span<double>(y.data(), y.size()));
    double dot = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) dot += stationary[i] * x[i];
    y.array() -= dot;
  };
  SecondEigenvalue best{{0.0, 0.0}, INFINITY};
  for (Eigen::Index k = 0; k < kmax; ++k) {
    apply(basis.col(k), w);
    // Two passes of modified Gram-Schmidt keep the basis orthonormal.
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index j = 0; j <= k; ++j) {
        const double h = basis.col(j).dot(w);
        hess(j, k) += h;
        w -= h * basis.col(j);
      }
    const double beta = w.norm();
    hess(k + 1, k) = beta;
    const bool breakdown = beta < 1e-13;
    const bool check = breakdown || k + 1 == kmax || (k + 1) % 20 == 0;
    if (check) {
      const Eigen::Index dim = k + 1;
      Eigen::EigenSolver<Eigen::MatrixXd> es(hess.topLeftCorner(dim, dim));
      const auto vals = es.eigenvalues();
      Eigen::Index arg = 0;
      for (Eigen::Index i = 1; i < dim; ++i)
        if (std::abs(vals[i]) > std::abs(vals[arg])) arg = i;
      const Eigen::VectorXcd vec = es.eigenvectors().col(arg);
      const double res = breakdown ? 0.0 : beta * std::abs(vec[dim - 1]) / vec.norm();
      best = {vals[arg], res};
      if (res <= tol * std::max(1.0, std::abs(vals[arg]))) return best;
    }
    if (breakdown) return best;
    basis.col(k + 1) = w / beta;
  }
  if (kmax == n - 1) return best;  // Krylov space exhausted: exact up to rounding.
  throw NumericFailure("second_eigenvalue: Arnoldi did not converge, residual " + std::to_string(best.residual));
}

// Stationary law, spectral gap 1 - |lambda_2| and entropies (nats). A support
// graph with several components is reduced to its largest component.
inline ModelDiagnostics diagnostics(const TransitionModel& model) {
  model.validate();
  ModelDiagnostics d;
  std::vector<Edge> support;
  for (std::size_t u = 0; u < model.n_nodes; ++u)
    for (auto v : model.row_columns(u))
      if (v != u) support.push_back({static_cast<NodeId>(std::min<std::size_t>(u, v)), static_cast<NodeId>(std::max<std::size_t>(u, v))});
  const auto label = component_labels(model.n_nodes, support);
  const std::size_t n_comp = label.empty() ? 0 : *std::max_element(label.begin(), label.end()) + 1;
  const TransitionModel* m = &model;
  TransitionModel sub;
  std::vector<std::size_t> kept;
  if (n_comp > 1) {
    std::vector<std::size_t> sizes(n_comp, 0);
    for (auto l : label) ++sizes[l];
    const auto giant = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    sub = detail::restrict_model(model, label, giant, kept);
    m = &sub;
    d.warnings.push_back("support graph has " + std::to_string(n_comp) + " components; diagnostics restricted to the largest (" +
                         std::to_string(kept.size()) + " nodes)");
  }
  const auto pi = stationary_distribution(*m);
  const auto lam = second_eigenvalue(*m, pi);
  d.lambda2_real = lam.value.real();
  d.lambda2_imag = lam.value.imag();
  d.spectral_gap = std::clamp(1.0 - std::abs(lam.value), 0.0, 1.0);
  d.stationary_entropy = stats::entropy(pi);
  double rate = 0.0;
  for (std::size_t u = 0; u < m->n_nodes; ++u)
    rate += pi[u] * stats::entropy(m->out_degree(u) > 0 ? m->row_probs(u) : std::span<const double>(m->initial));
  d.entropy_rate = rate;
  d.n_nodes_used = m->n_nodes;
  if (n_comp > 1) {
    d.stationary.assign(model.n_nodes, 0.0);
    for (std::size_t i = 0; i < kept.size(); ++i) d.stationary[kept[i]] = pi[i];
  } else {
    d.stationary = pi;
  }
  return d;
}

// Exact unigram (stationary), pooled conditional p(u|v) over all transitions,
// and joint p(v) p(u|v), each sorted in descending order.
inline std::vector<RankedDistribution> ranked_distributions(const TransitionModel& model,
                                                            std::span<const double> stationary) {
  std::vector<RankedDistribution> out(3);
  out[0] = {RankedKind::kUnigram, std::vector<double>(stationary.begin(), stationary.end())};
  out[1] = {RankedKind::kBigramConditional, model.probs};
  out[2].kind = RankedKind::kBigramJoint;
  out[2].probabilities.reserve(model.n_transitions());
  for (std::size_t u = 0; u < model.n_nodes; ++u)
    for (double p : model.row_probs(u)) out[2].probabilities.push_back(stationary[u] * p);
  for (auto& d : out) std::sort(d.probabilities.begin(), d.probabilities.end(), std::greater<>());
  return out;
}

inline std::vector<RankedDistribution> ranked_distributions(const TransitionModel& model) {
  const auto pi = stationary_distribution(model);
  return ranked_distributions(model, pi);
}

}  // namespace slab

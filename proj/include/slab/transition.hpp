#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "slab/error.hpp"
#include "slab/graph.hpp"
#include "slab/io.hpp"

namespace slab {

// Sparse row-stochastic transition matrix W (CSR, columns sorted per row)
// with the initial-node distribution M. A row may be empty only for models
// built from bigram counts, where a token can end every bigram it appears in.
struct TransitionModel {
  std::size_t n_nodes = 0;
  std::vector<std::uint64_t> row_offsets{0};
  std::vector<NodeId> columns;
  std::vector<double> probs;
  std::vector<double> initial;

  std::span<const NodeId> row_columns(std::size_t u) const {
    return {columns.data() + row_offsets[u], row_offsets[u + 1] - row_offsets[u]};
  }
  std::span<const double> row_probs(std::size_t u) const {
    return {probs.data() + row_offsets[u], row_offsets[u + 1] - row_offsets[u]};
  }
  std::size_t out_degree(std::size_t u) const { return row_offsets[u + 1] - row_offsets[u]; }
  std::size_t n_transitions() const { return columns.size(); }

  double probability(std::size_t u, std::size_t v) const {
    const auto cols = row_columns(u);
    const auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<NodeId>(v));
    return it != cols.end() && *it == v ? row_probs(u)[static_cast<std::size_t>(it - cols.begin())] : 0.0;
  }

  // Largest |row sum - 1| over non-empty rows.
  double max_row_error() const {
    double worst = 0.0;
    for (std::size_t u = 0; u < n_nodes; ++u) {
      if (out_degree(u) == 0) continue;
      double s = 0.0;
      for (double p : row_probs(u)) s += p;
      worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
  }

  void validate() const {
    if (row_offsets.size() != n_nodes + 1 || initial.size() != n_nodes || columns.size() != probs.size() ||
        row_offsets.back() != columns.size())
      throw InvalidArgument("transition model: inconsistent array sizes");
    for (std::size_t u = 0; u < n_nodes; ++u) {
      if (row_offsets[u] > row_offsets[u + 1]) throw InvalidArgument("transition model: decreasing row offsets");
      const auto cols = row_columns(u);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k] >= n_nodes) throw InvalidArgument("transition model: column out of range in row " + std::to_string(u));
        if (k > 0 && cols[k] <= cols[k - 1]) throw InvalidArgument("transition model: unsorted row " + std::to_string(u));
      }
    }
    for (double p : probs)
      if (!(p >= 0.0)) throw InvalidArgument("transition model: negative or NaN probability");
    double m = 0.0;
    for (double p : initial) {
      if (!(p >= 0.0)) throw InvalidArgument("transition model: negative or NaN initial probability");
      m += p;
    }
    if (std::abs(m - 1.0) > 1e-12) throw InvalidArgument("transition model: initial distribution does not sum to 1");
    if (max_row_error() > 1e-12) throw InvalidArgument("transition model: row not stochastic");
  }

  friend bool operator==(const TransitionModel&, const TransitionModel&) = default;
};

namespace detail {

// Row-normalizes nonnegative weights given as per-row (column, weight)
// lists: W = w / rowsum, M = rowsum / total.
inline TransitionModel normalize_rows(std::size_t n_nodes, std::vector<std::vector<std::pair<NodeId, double>>> rows) {
  TransitionModel model;
  model.n_nodes = n_nodes;
  model.row_offsets.assign(1, 0);
  model.initial.assign(n_nodes, 0.0);
  double total = 0.0;
  std::vector<double> row_sum(n_nodes, 0.0);
  for (std::size_t u = 0; u < n_nodes; ++u) {
    auto& row = rows[u];
    std::sort(row.begin(), row.end());
    for (const auto& [v, w] : row) row_sum[u] += w;
    total += row_sum[u];
  }
  for (std::size_t u = 0; u < n_nodes; ++u) {
    for (const auto& [v, w] : rows[u]) {
      model.columns.push_back(v);
      model.probs.push_back(w / row_sum[u]);
    }
    model.row_offsets.push_back(model.columns.size());
    model.initial[u] = row_sum[u] / total;
  }
  return model;
}

}  // namespace detail

// W[u][v] = W_init(u -> v) / sum_j W_init(u -> j), M[u] = rowsum(u) / total.
inline TransitionModel build_transition_model(const WeightedGraph& wg) {
  const auto& g = wg.graph;
  std::vector<std::vector<std::pair<NodeId, double>>> rows(g.n_nodes());
  for (std::size_t i = 0; i < g.n_edges(); ++i) {
    const auto& e = g.edges()[i];
    rows[e.u].emplace_back(e.v, static_cast<double>(wg.forward[i]));
    rows[e.v].emplace_back(e.u, static_cast<double>(wg.backward[i]));
  }
  for (std::size_t u = 0; u < g.n_nodes(); ++u)
    if (rows[u].empty()) throw DegenerateInput("build_transition_model: node " + std::to_string(u) + " is isolated");
  return detail::normalize_rows(g.n_nodes(), std::move(rows));
}

// Unbiased walk: W[u][v] = A_uv / deg(u), M = deg / 2E.
inline TransitionModel build_unbiased_model(const Graph& g) {
  const auto deg = g.degrees();
  std::vector<std::vector<NodeId>> adj(g.n_nodes());
  for (const auto& e : g.edges()) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  TransitionModel model;
  model.n_nodes = g.n_nodes();
  model.initial.resize(g.n_nodes());
  const double two_e = 2.0 * static_cast<double>(g.n_edges());
  for (std::size_t u = 0; u < g.n_nodes(); ++u) {
    if (deg[u] == 0) throw DegenerateInput("build_unbiased_model: node " + std::to_string(u) + " is isolated");
    std::sort(adj[u].begin(), adj[u].end());
    const double p = 1.0 / static_cast<double>(deg[u]);
    for (NodeId v : adj[u]) {
      model.columns.push_back(v);
      model.probs.push_back(p);
    }
    model.row_offsets.push_back(model.columns.size());
    model.initial[u] = static_cast<double>(deg[u]) / two_e;
  }
  return model;
}

// Ordered token-pair counts C_uv.
struct BigramCounts {
  std::size_t vocab_size = 0;
  std::map<std::pair<NodeId, NodeId>, std::uint64_t> counts;

  void add(NodeId u, NodeId v, std::uint64_t c = 1) {
    if (u >= vocab_size || v >= vocab_size) throw InvalidArgument("bigram token outside vocabulary");
    if (c > 0) counts[{u, v}] += c;
  }
};

inline BigramCounts count_bigrams(std::span<const NodeId> tokens, std::size_t vocab_size) {
  BigramCounts bc{vocab_size, {}};
  for (std::size_t i = 1; i < tokens.size(); ++i) bc.add(tokens[i - 1], tokens[i]);
  return bc;
}

// Drops bigrams seen min_count times or fewer, then normalizes the surviving
// counts exactly like graph weights.
inline TransitionModel build_bigram_model(const BigramCounts& bc, std::uint64_t min_count) {
  std::vector<std::vector<std::pair<NodeId, double>>> rows(bc.vocab_size);
  std::size_t kept = 0;
  for (const auto& [pair, c] : bc.counts) {
    if (c <= min_count) continue;
    rows[pair.first].emplace_back(pair.second, static_cast<double>(c));
    ++kept;
  }
  if (kept == 0)
    throw DegenerateInput("build_bigram_model: every bigram has count <= " + std::to_string(min_count));
  return detail::normalize_rows(bc.vocab_size, std::move(rows));
}

// Text format, one "u v count" per line.
inline void write_bigram_counts(std::ostream& os, const BigramCounts& bc) {
  for (const auto& [pair, c] : bc.counts) os << pair.first << ' ' << pair.second << ' ' << c << '\n';
}

inline BigramCounts read_bigram_counts(std::istream& is, std::size_t vocab_size) {
  BigramCounts bc{vocab_size, {}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    std::istringstream ls(line);
    std::uint64_t u = 0;
    std::uint64_t v = 0;
    std::uint64_t c = 0;
    if (!(ls >> u >> v >> c)) throw IoError("bigram counts: malformed line " + std::to_string(line_no));
    if (u >= vocab_size || v >= vocab_size)
      throw IoError("bigram counts: token outside vocabulary at line " + std::to_string(line_no));
    if (c == 0) throw IoError("bigram counts: zero count at line " + std::to_string(line_no));
    bc.add(static_cast<NodeId>(u), static_cast<NodeId>(v), c);
  }
  return bc;
}

// Binary layout (little-endian): "SLTM", u16 version, u64 V, u64[V+1] row
// offsets, u32[nnz] columns, f64[nnz] probabilities, f64[V] initial.
inline constexpr std::uint16_t kTransitionFormatVersion = 1;

inline void write_transition_model(std::ostream& os, const TransitionModel& m) {
  io::write_magic(os, "SLTM");
  io::write_le<std::uint16_t>(os, kTransitionFormatVersion);
  io::write_le<std::uint64_t>(os, m.n_nodes);
  for (auto off : m.row_offsets) io::write_le<std::uint64_t>(os, off);
  for (auto c : m.columns) io::write_le<std::uint32_t>(os, c);
  for (auto p : m.probs) io::write_le<double>(os, p);
  for (auto p : m.initial) io::write_le<double>(os, p);
  if (!os) throw IoError("transition model: write failed");
}

inline TransitionModel read_transition_model(std::istream& is) {
  io::expect_magic(is, "SLTM");
  const auto version = io::read_le<std::uint16_t>(is, "version");
  if (version != kTransitionFormatVersion)
    throw IoError("transition model: unsupported version " + std::to_string(version));
  TransitionModel m;
  m.n_nodes = io::read_le<std::uint64_t>(is, "vocabulary size");
  m.row_offsets.resize(m.n_nodes + 1);
  for (auto& off : m.row_offsets) off = io::read_le<std::uint64_t>(is, "row offsets");
  const auto nnz = m.row_offsets.back();
  m.columns.resize(nnz);
  m.probs.resize(nnz);
  for (auto& c : m.columns) c = io::read_le<std::uint32_t>(is, "column indices");
  for (auto& p : m.probs) p = io::read_le<double>(is, "probabilities");
  m.initial.resize(m.n_nodes);
  for (auto& p : m.initial) p = io::read_le<double>(is, "initial distribution");
  m.validate();
  return m;
}

}  // namespace slab

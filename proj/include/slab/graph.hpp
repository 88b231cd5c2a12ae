#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "slab/error.hpp"
#include "slab/rng.hpp"

namespace slab {

using NodeId = std::uint32_t;

// Undirected edge, stored with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Simple undirected graph: no self-loops, no multi-edges. Edges are kept
// sorted, which makes equality and serialization canonical.
class Graph {
 public:
  Graph() = default;

  Graph(std::size_t n_nodes, std::vector<Edge> edges) : n_nodes_(n_nodes), edges_(std::move(edges)) {
    if (n_nodes_ > std::numeric_limits<NodeId>::max()) throw InvalidArgument("graph: too many nodes");
    for (auto& e : edges_) {
      if (e.u == e.v) throw InvalidArgument("graph: self-loop at node " + std::to_string(e.u));
      if (e.u >= n_nodes_ || e.v >= n_nodes_)
        throw InvalidArgument("graph: edge endpoint out of range (" + std::to_string(e.u) + ", " +
                              std::to_string(e.v) + ")");
      if (e.u > e.v) std::swap(e.u, e.v);
    }
    std::sort(edges_.begin(), edges_.end());
    if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end())
      throw InvalidArgument("graph: duplicate edge");
  }

  std::size_t n_nodes() const { return n_nodes_; }
  std::size_t n_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }

  std::vector<std::size_t> degrees() const {
    std::vector<std::size_t> deg(n_nodes_, 0);
    for (const auto& e : edges_) {
      ++deg[e.u];
      ++deg[e.v];
    }
    return deg;
  }

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  std::size_t n_nodes_ = 0;
  std::vector<Edge> edges_;
};

inline Graph complete_graph(std::size_t n) {
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) edges.push_back({static_cast<NodeId>(u), static_cast<NodeId>(v)});
  return Graph(n, std::move(edges));
}

inline Graph cycle_graph(std::size_t n) {
  if (n < 3) throw InvalidArgument("cycle_graph: need at least 3 nodes");
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    edges.push_back({static_cast<NodeId>(u), static_cast<NodeId>((u + 1) % n)});
  return Graph(n, std::move(edges));
}

inline std::size_t max_edges(std::size_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

// Uniform simple graph with exactly n_edges edges (the G(n, M) ensemble).
inline Graph gen_erdos_renyi(std::size_t n_nodes, std::size_t n_edges, Seed seed) {
  const std::size_t cap = max_edges(n_nodes);
  if (n_edges > cap)
    throw InvalidArgument("gen_erdos_renyi: " + std::to_string(n_edges) + " edges exceed the maximum " +
                          std::to_string(cap) + " for " + std::to_string(n_nodes) + " nodes");
  // Dense requests sample the complement instead.
  const bool complement = n_edges > cap / 2;
  const std::size_t target = complement ? cap - n_edges : n_edges;
  Rng rng(seed);
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(target * 2);
  const auto n = static_cast<std::uint64_t>(n_nodes);
  while (chosen.size() < target) {
    auto u = rng.below(n);
    auto v = rng.below(n);
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    chosen.insert(u * n + v);
  }
  std::vector<Edge> edges;
  edges.reserve(n_edges);
  if (complement) {
    for (std::uint64_t u = 0; u < n; ++u)
      for (std::uint64_t v = u + 1; v < n; ++v)
        if (!chosen.contains(u * n + v)) edges.push_back({static_cast<NodeId>(u), static_cast<NodeId>(v)});
  } else {
    for (auto key : chosen) edges.push_back({static_cast<NodeId>(key / n), static_cast<NodeId>(key % n)});
  }
  return Graph(n_nodes, std::move(edges));
}

// Preferential attachment grown from a complete seed graph on m_attach + 1
// nodes. Every later node attaches to m_attach distinct existing nodes chosen
// with probability proportional to their current degree, so the edge count
// is C(m+1, 2) + (n - m - 1) * m.
inline Graph gen_barabasi_albert(std::size_t n_nodes, std::size_t m_attach, Seed seed) {
  if (m_attach < 1 || m_attach >= n_nodes)
    throw InvalidArgument("gen_barabasi_albert: need 1 <= m_attach < n_nodes (got m=" + std::to_string(m_attach) +
                          ", n=" + std::to_string(n_nodes) + ")");
  Rng rng(seed);
  std::vector<Edge> edges;
  std::vector<NodeId> endpoints;  // each node repeated deg(node) times
  const std::size_t seed_nodes = m_attach + 1;
  for (std::size_t u = 0; u < seed_nodes; ++u)
    for (std::size_t v = u + 1; v < seed_nodes; ++v) {
      edges.push_back({static_cast<NodeId>(u), static_cast<NodeId>(v)});
      endpoints.push_back(static_cast<NodeId>(u));
      endpoints.push_back(static_cast<NodeId>(v));
    }
  std::vector<NodeId> targets;
  for (std::size_t node = seed_nodes; node < n_nodes; ++node) {
    targets.clear();
    while (targets.size() < m_attach) {
      const NodeId pick = endpoints[rng.below(endpoints.size())];
      if (std::find(targets.begin(), targets.end(), pick) == targets.end()) targets.push_back(pick);
    }
    for (NodeId t : targets) {
      edges.push_back({t, static_cast<NodeId>(node)});
      endpoints.push_back(t);
      endpoints.push_back(static_cast<NodeId>(node));
    }
  }
  return Graph(n_nodes, std::move(edges));
}

// Pr(k) proportional to k^-kappa on the integers [k_min, k_max], sampled by
// inverse CDF over the exact normalized table.
class DiscretePowerLaw {
 public:
  DiscretePowerLaw(double kappa, std::uint32_t k_min, std::uint32_t k_max) : k_min_(k_min) {
    if (k_min < 1 || k_min > k_max)
      throw InvalidArgument("power-law weights need 1 <= k_min <= k_max (got " + std::to_string(k_min) + ", " +
                            std::to_string(k_max) + ")");
    if (!(kappa >= 0.0)) throw InvalidArgument("power-law weights need kappa >= 0");
    cdf_.resize(k_max - k_min + 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < cdf_.size(); ++i) {
      acc += std::pow(static_cast<double>(k_min + i), -kappa);
      cdf_[i] = acc;
    }
    for (auto& c : cdf_) c /= acc;
    cdf_.back() = 1.0;
  }

  std::uint32_t operator()(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return k_min_ + static_cast<std::uint32_t>(it - cdf_.begin());
  }

  double probability(std::uint32_t k) const {
    const std::size_t i = k - k_min_;
    return i == 0 ? cdf_[0] : cdf_[i] - cdf_[i - 1];
  }

 private:
  std::uint32_t k_min_;
  std::vector<double> cdf_;
};

// Directed integer weights on an undirected support: edge i = (u, v) with
// u < v carries forward[i] = W(u -> v) and backward[i] = W(v -> u), sampled
// independently.
struct WeightedGraph {
  Graph graph;
  std::vector<std::uint32_t> forward;
  std::vector<std::uint32_t> backward;
  double kappa = 0.0;
  std::uint32_t k_min = 1;
  std::uint32_t k_max = 1;

  friend bool operator==(const WeightedGraph&, const WeightedGraph&) = default;
};

inline WeightedGraph assign_weights(const Graph& graph, double kappa, std::uint32_t k_min, std::uint32_t k_max,
                                    Seed seed) {
  const DiscretePowerLaw law(kappa, k_min, k_max);
  Rng rng(seed);
  WeightedGraph wg{graph, {}, {}, kappa, k_min, k_max};
  wg.forward.resize(graph.n_edges());
  wg.backward.resize(graph.n_edges());
  for (std::size_t i = 0; i < graph.n_edges(); ++i) {
    wg.forward[i] = law(rng);
    wg.backward[i] = law(rng);
  }
  return wg;
}

inline WeightedGraph unit_weights(const Graph& graph) {
  return WeightedGraph{graph, std::vector<std::uint32_t>(graph.n_edges(), 1),
                       std::vector<std::uint32_t>(graph.n_edges(), 1), 0.0, 1, 1};
}

// Connected-component label per node, labels numbered by first appearance.
inline std::vector<std::size_t> component_labels(std::size_t n_nodes, const std::vector<Edge>& edges) {
  std::vector<std::size_t> parent(n_nodes);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& e : edges) {
    const auto a = find(e.u);
    const auto b = find(e.v);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::size_t> label(n_nodes);
  std::vector<std::size_t> remap(n_nodes, SIZE_MAX);
  std::size_t next = 0;
  for (std::size_t v = 0; v < n_nodes; ++v) {
    const auto root = find(v);
    if (remap[root] == SIZE_MAX) remap[root] = next++;
    label[v] = remap[root];
  }
  return label;
}

// Maximum-likelihood tail exponent of a discrete power law above k_min,
// using the continuous approximation with the usual half-integer shift.
inline double tail_exponent_mle(const std::vector<std::size_t>& degrees, std::size_t k_min) {
  double acc = 0.0;
  std::size_t count = 0;
  for (auto d : degrees) {
    if (d < k_min) continue;
    acc += std::log(static_cast<double>(d) / (static_cast<double>(k_min) - 0.5));
    ++count;
  }
  if (count == 0) throw DegenerateInput("tail_exponent_mle: no degrees above the cutoff");
  return 1.0 + static_cast<double>(count) / acc;
}

// Edge-list text format:
//   #nodes=<n> edges=<E>
//   u v [w_uv w_vu]
inline void write_edge_list(std::ostream& os, const Graph& graph, const WeightedGraph* weights = nullptr) {
  os << "#nodes=" << graph.n_nodes() << " edges=" << graph.n_edges() << '\n';
  for (std::size_t i = 0; i < graph.n_edges(); ++i) {
    const auto& e = graph.edges()[i];
    os << e.u << ' ' << e.v;
    if (weights != nullptr) os << ' ' << weights->forward[i] << ' ' << weights->backward[i];
    os << '\n';
  }
}

inline void write_edge_list(std::ostream& os, const WeightedGraph& wg) { write_edge_list(os, wg.graph, &wg); }

struct EdgeListFile {
  Graph graph;
  std::optional<WeightedGraph> weights;
};

inline EdgeListFile read_edge_list(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("edge list: empty input");
  std::size_t n_nodes = 0;
  std::size_t n_edges = 0;
  if (std::sscanf(line.c_str(), "#nodes=%zu edges=%zu", &n_nodes, &n_edges) != 2)
    throw IoError("edge list: bad header '" + line + "'");
  std::vector<Edge> edges;
  std::vector<std::uint32_t> fwd;
  std::vector<std::uint32_t> bwd;
  edges.reserve(n_edges);
  std::size_t line_no = 1;
  int arity = -1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::uint64_t> fields;
    std::uint64_t x = 0;
    while (ls >> x) fields.push_back(x);
    if (!ls.eof() || (fields.size() != 2 && fields.size() != 4))
      throw IoError("edge list: malformed line " + std::to_string(line_no));
    if (arity == -1) arity = static_cast<int>(fields.size());
    if (arity != static_cast<int>(fields.size()))
      throw IoError("edge list: inconsistent weight columns at line " + std::to_string(line_no));
    edges.push_back({static_cast<NodeId>(fields[0]), static_cast<NodeId>(fields[1])});
    if (arity == 4) {
      fwd.push_back(static_cast<std::uint32_t>(fields[2]));
      bwd.push_back(static_cast<std::uint32_t>(fields[3]));
    }
  }
  if (edges.size() != n_edges)
    throw IoError("edge list: header says " + std::to_string(n_edges) + " edges, found " +
                  std::to_string(edges.size()));
  // Keep weights aligned with the canonical (sorted, u < v) edge order.
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (edges[i].u > edges[i].v) {
      std::swap(edges[i].u, edges[i].v);
      if (arity == 4) std::swap(fwd[i], bwd[i]);
    }
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return edges[a] < edges[b]; });
  std::vector<Edge> sorted_edges(edges.size());
  std::vector<std::uint32_t> sf(fwd.size());
  std::vector<std::uint32_t> sb(bwd.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    sorted_edges[i] = edges[order[i]];
    if (arity == 4) {
      sf[i] = fwd[order[i]];
      sb[i] = bwd[order[i]];
    }
  }
  EdgeListFile out{Graph(n_nodes, std::move(sorted_edges)), std::nullopt};
  if (arity == 4) {
    std::uint32_t lo = std::numeric_limits<std::uint32_t>::max();
    std::uint32_t hi = 0;
    for (std::size_t i = 0; i < sf.size(); ++i) {
      lo = std::min({lo, sf[i], sb[i]});
      hi = std::max({hi, sf[i], sb[i]});
    }
    if (lo == 0) throw IoError("edge list: weights must be positive");
    // kappa is not recoverable from the file; the range is.
    out.weights = WeightedGraph{out.graph, std::move(sf), std::move(sb), 0.0, lo, hi};
  }
  return out;
}

}  // namespace slab

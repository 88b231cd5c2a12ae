#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "slab/error.hpp"
#include "slab/parallel.hpp"
#include "slab/rng.hpp"
#include "slab/stats.hpp"
#include "slab/transition.hpp"
#include "slab/walks.hpp"

namespace slab {

// Probability vector pi over V outcomes.
class Distribution {
 public:
  explicit Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw InvalidArgument("distribution: empty");
    double s = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0)) throw InvalidArgument("distribution: negative or NaN entry");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-12) throw InvalidArgument("distribution: entries sum to " + std::to_string(s));
  }

  static Distribution uniform(std::size_t v) { return Distribution(std::vector<double>(v, 1.0 / static_cast<double>(v))); }

  // Dirichlet(1, ..., 1) draw, renormalized so the sum is exact to rounding.
  static Distribution random(std::size_t v, Seed seed) {
    Rng rng(seed);
    std::vector<double> p(v);
    for (auto& x : p) {
      double u = 0.0;
      do {
        u = rng.uniform();
      } while (u <= 0.0);
      x = -std::log(u);
    }
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& x : p) x /= s;
    return Distribution(std::move(p));
  }

  std::size_t size() const { return probs_.size(); }
  std::span<const double> probs() const { return probs_; }
  double entropy() const { return stats::entropy(probs_); }

 private:
  std::vector<double> probs_;
};

enum class LossKind { kMse, kCse };

// E[L] = leading + coeff_1 / D + coeff_2 / D^2.
struct BaselinePrediction {
  LossKind loss_kind = LossKind::kCse;
  double leading = 0.0;
  double coeff_1 = 0.0;
  double coeff_2 = 0.0;

  double value_at(double d) const { return leading + coeff_1 / d + coeff_2 / (d * d); }
};

inline BaselinePrediction mse_expansion(const Distribution& pi) {
  double s = 0.0;
  for (double p : pi.probs()) s += p * (1.0 - p);
  return {LossKind::kMse, 0.0, s / static_cast<double>(pi.size()), 0.0};
}

// Cross-entropy of the counting estimator. order 2 adds
// (5 sum 1/pi_a - 6|V| + 1) / (12 D^2), which collects both the third and the
// fourth central moment of the counts, and needs every pi_a > 0.
inline BaselinePrediction cse_expansion(const Distribution& pi, int order = 1) {
  if (order != 1 && order != 2) throw InvalidArgument("cse_expansion: order must be 1 or 2");
  const auto v = static_cast<double>(pi.size());
  BaselinePrediction b{LossKind::kCse, pi.entropy(), (v - 1.0) / 2.0, 0.0};
  if (order == 2) {
    double inv = 0.0;
    for (std::size_t a = 0; a < pi.size(); ++a) {
      if (pi.probs()[a] < 1e-12)
        throw InvalidArgument("cse_expansion: outcome " + std::to_string(a) + " has zero probability; order-2 term undefined");
      inv += 1.0 / pi.probs()[a];
    }
    b.coeff_2 = (5.0 * inv - 6.0 * v + 1.0) / 12.0;
  }
  return b;
}

inline double expected_mse(const Distribution& pi, double d) {
  if (d < 1.0) throw InvalidArgument("expected_mse: D must be >= 1");
  return mse_expansion(pi).value_at(d);
}

inline double expected_cse(const Distribution& pi, double d, int order = 1) {
  if (d < 1.0) throw InvalidArgument("expected_cse: D must be >= 1");
  return cse_expansion(pi, order).value_at(d);
}

// First-order counting baseline for next-token prediction on a walk:
// sum_v p(v) S(p(.|v)) + sum_v (outdeg(v) - 1) / (2D). For an undirected
// graph the second sum is (2E - n) / 2D.
inline BaselinePrediction walk_baseline_expansion(const TransitionModel& model, std::span<const double> stationary) {
  BaselinePrediction b{LossKind::kCse, 0.0, 0.0, 0.0};
  for (std::size_t v = 0; v < model.n_nodes; ++v) {
    if (stationary[v] <= 0.0 || model.out_degree(v) == 0) continue;
    b.leading += stationary[v] * stats::entropy(model.row_probs(v));
    b.coeff_1 += 0.5 * (static_cast<double>(model.out_degree(v)) - 1.0);
  }
  return b;
}

inline double walk_baseline_cse(const TransitionModel& model, double d) {
  if (d < 1.0) throw InvalidArgument("walk_baseline_cse: D must be >= 1");
  const auto pi = stationary_distribution(model);
  return walk_baseline_expansion(model, pi).value_at(d);
}

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n_trials = 0;
};

inline McEstimate summarize_trials(const std::vector<double>& values) {
  McEstimate e;
  e.n_trials = values.size();
  e.mean = stats::mean(values);
  e.std_error = stats::stddev(values, 1) / std::sqrt(static_cast<double>(values.size()));
  return e;
}

// Monte-Carlo loss of the counting estimator pi_hat = n_a / D over n_trials
// independent size-D samples. Cross-entropy uses additive smoothing
// (n_a + eps) / (D + eps V); MSE uses the raw counts.
inline McEstimate mc_counting_loss(const Distribution& pi, std::uint64_t d, LossKind kind, std::size_t n_trials,
                                   Seed seed, double smoothing = 1e-3) {
  if (n_trials < 2) throw InvalidArgument("mc_counting_loss: need at least 2 trials");
  if (d < 1) throw InvalidArgument("mc_counting_loss: D must be >= 1");
  const auto probs = pi.probs();
  const std::size_t v = probs.size();
  std::vector<double> losses(n_trials);
  parallel_for(n_trials, [&](std::size_t trial) {
    Rng rng(seed, trial);
    // Multinomial draw through sequential conditional binomials.
    std::vector<std::uint64_t> counts(v, 0);
    std::uint64_t left = d;
    double mass_left = 1.0;
    for (std::size_t a = 0; a + 1 < v && left > 0; ++a) {
      const double p = mass_left > 0.0 ? std::min(1.0, probs[a] / mass_left) : 0.0;
      counts[a] = rng.binomial(left, p);
      left -= counts[a];
      mass_left -= probs[a];
    }
    counts[v - 1] += left;
    const auto dd = static_cast<double>(d);
    double loss = 0.0;
    if (kind == LossKind::kMse) {
      for (std::size_t a = 0; a < v; ++a) {
        const double diff = probs[a] - static_cast<double>(counts[a]) / dd;
        loss += diff * diff;
      }
      loss /= static_cast<double>(v);
    } else {
      const double denom = dd + smoothing * static_cast<double>(v);
      for (std::size_t a = 0; a < v; ++a)
        if (probs[a] > 0.0) loss -= probs[a] * std::log((static_cast<double>(counts[a]) + smoothing) / denom);
    }
    losses[trial] = loss;
  });
  return summarize_trials(losses);
}

// Walk version: each trial samples one walk of d transitions started from the
// stationary law, estimates p_hat(u|v) by counting (smoothed over the support
// of row v) and scores sum_v p(v) sum_u p(u|v) (-log p_hat(u|v)).
inline McEstimate mc_counting_loss(const TransitionModel& model, std::uint64_t d, std::size_t n_trials, Seed seed,
                                   double smoothing = 1e-3) {
  if (n_trials < 2) throw InvalidArgument("mc_counting_loss: need at least 2 trials");
  const auto pi = stationary_distribution(model);
  TransitionModel started = model;
  started.initial = pi;
  const WalkSampler sampler(started);
  std::vector<double> losses(n_trials);
  parallel_for(n_trials, [&](std::size_t trial) {
    Rng rng(seed, trial);
    std::vector<double> counts(model.n_transitions(), 0.0);
    std::vector<double> visits(model.n_nodes, 0.0);
    NodeId cur = sampler.initial(rng);
    for (std::uint64_t t = 0; t < d; ++t) {
      const NodeId nxt = sampler.next(cur, rng);
      if (model.out_degree(cur) > 0) {
        const auto cols = model.row_columns(cur);
        const auto k = static_cast<std::size_t>(std::lower_bound(cols.begin(), cols.end(), nxt) - cols.begin());
        counts[model.row_offsets[cur] + k] += 1.0;
        visits[cur] += 1.0;
      }
      cur = nxt;
    }
    double loss = 0.0;
    for (std::size_t v = 0; v < model.n_nodes; ++v) {
      const auto deg = static_cast<double>(model.out_degree(v));
      if (deg == 0.0 || pi[v] <= 0.0) continue;
      const auto ps = model.row_probs(v);
      const double denom = visits[v] + smoothing * deg;
      double row_loss = 0.0;
      for (std::size_t k = 0; k < ps.size(); ++k)
        row_loss -= ps[k] * std::log((counts[model.row_offsets[v] + k] + smoothing) / denom);
      loss += pi[v] * row_loss;
    }
    losses[trial] = loss;
  });
  return summarize_trials(losses);
}

}  // namespace slab

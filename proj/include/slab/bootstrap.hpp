#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slab/error.hpp"
#include "slab/parallel.hpp"
#include "slab/powerfit.hpp"
#include "slab/rng.hpp"
#include "slab/stats.hpp"

namespace slab {

struct ParamInterval {
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double std_error = 0.0;
  double z0 = 0.0;
  double acceleration = 0.0;
  double level_lo = 0.0;  // adjusted quantile levels actually used
  double level_hi = 0.0;
};

// Bias correction z0 = Phi^-1((#{t* < t} + #{t* = t} / 2) / B). The
// proportion is clamped to [1/2B, 1 - 1/2B] so z0 stays finite.
inline double bca_bias_correction(double estimate, std::span<const double> replicates) {
  double below = 0.0;
  for (double t : replicates) {
    if (t < estimate) below += 1.0;
    else if (t == estimate) below += 0.5;
  }
  const auto b = static_cast<double>(replicates.size());
  const double prop = std::clamp(below / b, 0.5 / b, 1.0 - 0.5 / b);
  return stats::normal_quantile(prop);
}

// Jackknife acceleration sum(d^3) / (6 (sum d^2)^1.5), d = mean - t_(i).
// Zero when the leave-one-out estimates do not vary.
inline double bca_acceleration(std::span<const double> jackknife) {
  if (jackknife.size() < 2) return 0.0;
  const double m = stats::mean(jackknife);
  double s2 = 0.0;
  double s3 = 0.0;
  for (double t : jackknife) {
    const double d = m - t;
    s2 += d * d;
    s3 += d * d * d;
  }
  if (!(s2 > 0.0)) return 0.0;
  return s3 / (6.0 * std::pow(s2, 1.5));
}

// Adjusted level Phi(z0 + (z0 + z_q) / (1 - a (z0 + z_q))).
inline double bca_level(double q, double z0, double accel) {
  if (z0 == 0.0 && accel == 0.0) return q;  // plain percentile, no round trip through Phi
  const double zq = stats::normal_quantile(q);
  const double num = z0 + zq;
  const double denom = 1.0 - accel * num;
  if (!(denom > 0.0)) return num > 0.0 ? 1.0 : 0.0;
  return stats::normal_cdf(z0 + num / denom);
}

// BCa interval for one scalar from its bootstrap and jackknife draws.
inline ParamInterval bca_interval(double estimate, std::span<const double> replicates, std::span<const double> jackknife,
                                  double alpha) {
  if (replicates.empty()) throw InvalidArgument("bca_interval: no bootstrap replicates");
  ParamInterval out;
  out.estimate = estimate;
  out.z0 = bca_bias_correction(estimate, replicates);
  out.acceleration = bca_acceleration(jackknife);
  out.level_lo = bca_level(alpha / 2.0, out.z0, out.acceleration);
  out.level_hi = bca_level(1.0 - alpha / 2.0, out.z0, out.acceleration);
  out.lo = stats::quantile(replicates, out.level_lo);
  out.hi = stats::quantile(replicates, out.level_hi);
  out.std_error = replicates.size() > 1 ? stats::stddev(replicates, 1) : 0.0;
  return out;
}

// Residual scaling for the wild bootstrap. Raw residuals of a p-parameter
// fit on n points understate the noise by about sqrt((n - p) / n); the
// leverage-adjusted forms divide r_i by sqrt(1 - h_ii) or (1 - h_ii).
enum class WildResiduals { kRaw, kHc2, kHc3 };

inline const char* to_string(WildResiduals w) {
  switch (w) {
    case WildResiduals::kRaw: return "raw";
    case WildResiduals::kHc2: return "hc2";
    case WildResiduals::kHc3: return "hc3";
  }
  return "?";
}

// Diagonal of J (J^T J)^-1 J^T at the fitted parameters.
inline std::vector<double> leverages(const Series1D& series, const PowerLawFit& fit) {
  const detail::PowerLawProblem problem{series.xs, series.ys, fit.x0, fit.fixed_E_zero};
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  problem(power_law_params(fit), r, &jac);
  const Eigen::MatrixXd gram = jac.transpose() * jac;
  const Eigen::MatrixXd sol = gram.completeOrthogonalDecomposition().solve(jac.transpose());
  std::vector<double> h(series.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    h[i] = std::clamp(jac.row(k).dot(sol.col(k)), 0.0, 0.99);
  }
  return h;
}

struct FitCI {
  ParamInterval E;
  ParamInterval B;
  ParamInterval beta;
  double alpha = 0.05;
  std::size_t n_boot = 0;
  std::size_t n_failed = 0;
  std::size_t n_jackknife_failed = 0;
  bool too_many_failures = false;  // more than 10% of replicates discarded
  WildResiduals residuals = WildResiduals::kHc3;
  std::vector<std::string> warnings;
};

// Fixed-x wild bootstrap with Rademacher sign flips, y* = y_hat + eps r,
// r scaled per `residuals`,
// refit from the base solution with the base cutoff; BCa intervals for
// (E, B, beta). Replicate b draws from stream(seed, b).
inline FitCI bca_ci(const Series1D& series, const PowerLawFit& fit, std::size_t n_boot, double alpha, Seed seed,
                    const PowerLawOptions& opt = {}, WildResiduals residuals = WildResiduals::kHc3) {
  if (n_boot < 100) throw InvalidArgument("bca_ci: n_boot must be >= 100");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("bca_ci: alpha must lie in (0, 1)");
  const std::size_t n = series.size();
  std::vector<double> yhat(n);
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) {
    yhat[i] = fit.predict(series.xs[i]);
    resid[i] = series.ys[i] - yhat[i];
  }
  if (residuals != WildResiduals::kRaw) {
    const auto h = leverages(series, fit);
    for (std::size_t i = 0; i < n; ++i)
      resid[i] /= residuals == WildResiduals::kHc2 ? std::sqrt(1.0 - h[i]) : 1.0 - h[i];
  }

  std::vector<std::optional<PowerLawFit>> reps(n_boot);
  parallel_for(n_boot, [&](std::size_t b) {
    Rng rng(seed, b);
    std::vector<double> ystar(n);
    for (std::size_t i = 0; i < n; ++i) ystar[i] = yhat[i] + rng.rademacher() * resid[i];
    reps[b] = refit_power_law(series.xs, ystar, fit, opt);
  });

  std::vector<std::optional<PowerLawFit>> jack(n);
  parallel_for(n, [&](std::size_t leave) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t i = 0; i < n; ++i)
      if (i != leave) {
        xs.push_back(series.xs[i]);
        ys.push_back(series.ys[i]);
      }
    jack[leave] = refit_power_law(xs, ys, fit, opt);
  });

  FitCI ci;
  ci.alpha = alpha;
  ci.n_boot = n_boot;
  ci.residuals = residuals;
  std::vector<double> e_star;
  std::vector<double> b_star;
  std::vector<double> beta_star;
  for (const auto& r : reps) {
    if (!r) {
      ++ci.n_failed;
      continue;
    }
    e_star.push_back(r->E);
    b_star.push_back(r->B);
    beta_star.push_back(r->beta);
  }
  std::vector<double> e_jack;
  std::vector<double> b_jack;
  std::vector<double> beta_jack;
  for (const auto& r : jack) {
    if (!r) {
      ++ci.n_jackknife_failed;
      continue;
    }
    e_jack.push_back(r->E);
    b_jack.push_back(r->B);
    beta_jack.push_back(r->beta);
  }
  if (e_star.empty()) throw FitFailure("bca_ci: every bootstrap refit failed");
  if (ci.n_failed * 10 > n_boot) {
    ci.too_many_failures = true;
    ci.warnings.push_back(std::to_string(ci.n_failed) + " of " + std::to_string(n_boot) + " bootstrap refits failed");
  }
  if (ci.n_jackknife_failed > 0)
    ci.warnings.push_back(std::to_string(ci.n_jackknife_failed) + " jackknife refits failed and were excluded");
  ci.E = bca_interval(fit.E, e_star, e_jack, alpha);
  ci.B = bca_interval(fit.B, b_star, b_jack, alpha);
  ci.beta = bca_interval(fit.beta, beta_star, beta_jack, alpha);
  return ci;
}

}  // namespace slab

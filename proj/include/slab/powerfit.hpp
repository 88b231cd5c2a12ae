#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slab/error.hpp"
#include "slab/least_squares.hpp"
#include "slab/rng.hpp"
#include "slab/stats.hpp"

namespace slab {

// One slice of a loss table: loss against N (D held fixed) or against D
// (N held fixed). Points are kept sorted by x.
struct Series1D {
  std::vector<double> xs;
  std::vector<double> ys;
  std::string held_label;
  double held_value = 0.0;

  static Series1D make(std::vector<double> xs, std::vector<double> ys, std::string held_label = {},
                       double held_value = 0.0) {
    if (xs.size() != ys.size()) throw InvalidArgument("series: x and y lengths differ");
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
    Series1D s{{}, {}, std::move(held_label), held_value};
    for (auto i : order) {
      s.xs.push_back(xs[i]);
      s.ys.push_back(ys[i]);
    }
    s.validate(1);
    return s;
  }

  std::size_t size() const { return xs.size(); }

  void validate(std::size_t min_points) const {
    if (xs.size() != ys.size()) throw InvalidArgument("series: x and y lengths differ");
    if (xs.size() < min_points)
      throw InvalidArgument("series: " + std::to_string(xs.size()) + " points, need at least " + std::to_string(min_points));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!(xs[i] > 0.0) || !std::isfinite(xs[i])) throw InvalidArgument("series: x values must be positive and finite");
      if (!std::isfinite(ys[i])) throw InvalidArgument("series: y values must be finite");
      if (i > 0 && !(xs[i] > xs[i - 1])) throw InvalidArgument("series: x values must be strictly increasing");
    }
  }
};

struct PowerLawOptions {
  double beta_min = 1e-3;
  double beta_max = 10.0;
  bool fix_E_zero = false;
  int n_starts = 40;
  Seed seed = 0;
  std::optional<double> huber_delta;  // default 1.4826 * MAD(y)
  std::optional<double> pivot;        // default median(x)
  SolverOptions solver;
};

// y = E + B x^-beta, internally E + A (x / x0)^-beta with B = A x0^beta.
struct PowerLawFit {
  double E = 0.0;
  double B = 0.0;
  double beta = 0.0;
  double A = 0.0;
  double x0 = 1.0;
  double huber_delta = 0.0;
  double objective = 0.0;
  double mse = 0.0;
  bool fixed_E_zero = false;
  int n_converged = 0;

  double predict(double x) const { return E + A * std::pow(x / x0, -beta); }
};

// y = a + b exp(-c x).
struct ExpFit {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double huber_delta = 0.0;
  double objective = 0.0;
  double mse = 0.0;
  int n_converged = 0;

  double predict(double x) const { return a + b * std::exp(-c * x); }
};

// 1.4826 * MAD(y), falling back to 0.1 * std(y) when the MAD vanishes.
inline double default_huber_delta(std::span<const double> ys) {
  const double mad = stats::mad(ys);
  if (mad > 0.0) return 1.4826 * mad;
  const double sd = ys.size() > 1 ? stats::stddev(ys) : 0.0;
  if (sd > 0.0) return 0.1 * sd;
  return 1.0;  // constant data: any cutoff gives the same optimum
}

namespace detail {

struct PowerLawProblem {
  std::span<const double> xs;
  std::span<const double> ys;
  double x0;
  bool fix_e;

  // params: [E, log A, log beta] or [log A, log beta] with E = 0.
  void operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) const {
    const Eigen::Index off = fix_e ? 0 : 1;
    const double e = fix_e ? 0.0 : p[0];
    const double a = std::exp(p[off]);
    const double beta = std::exp(p[off + 1]);
    const auto m = static_cast<Eigen::Index>(xs.size());
    r.resize(m);
    if (jac != nullptr) jac->resize(m, off + 2);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double lt = std::log(xs[i] / x0);
      const double term = a * std::exp(-beta * lt);
      r[i] = e + term - ys[i];
      if (jac != nullptr) {
        if (!fix_e) (*jac)(i, 0) = 1.0;
        (*jac)(i, off) = term;
        (*jac)(i, off + 1) = -term * beta * lt;
      }
    }
  }
};

struct ExpProblem {
  std::span<const double> xs;
  std::span<const double> ys;
  double x0;

  // params: [a, log b, log c~] with c = c~ / x0.
  void operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) const {
    const double a = p[0];
    const double b = std::exp(p[1]);
    const double c = std::exp(p[2]);
    const auto m = static_cast<Eigen::Index>(xs.size());
    r.resize(m);
    if (jac != nullptr) jac->resize(m, 3);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double t = xs[i] / x0;
      const double term = b * std::exp(-c * t);
      r[i] = a + term - ys[i];
      if (jac != nullptr) {
        (*jac)(i, 0) = 1.0;
        (*jac)(i, 1) = term;
        (*jac)(i, 2) = -term * c * t;
      }
    }
  }
};

inline double mean_squared(const Eigen::VectorXd& r) { return r.squaredNorm() / static_cast<double>(r.size()); }

// Offset candidates for the multi-start: low y-quantiles shifted just below
// the data, plus two offsets well below the minimum.
inline std::vector<double> offset_seeds(std::span<const double> ys) {
  const double lo = *std::min_element(ys.begin(), ys.end());
  const double hi = *std::max_element(ys.begin(), ys.end());
  const double range = hi > lo ? hi - lo : std::max(std::abs(lo) * 0.1, 1e-3);
  return {stats::quantile(ys, 0.0) - 0.01 * range, stats::quantile(ys, 0.1) - 0.01 * range,
          stats::quantile(ys, 0.25) - 0.01 * range, lo - 0.5 * range, lo - 2.0 * range};
}

// Log-linear seed: regress log(y - offset) on `t` over points above the
// offset. Returns (intercept, slope) or nothing when fewer than two points
// remain.
inline std::optional<std::pair<double, double>> log_linear_seed(std::span<const double> ts, std::span<const double> ys,
                                                                double offset) {
  std::vector<double> tx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < ys.size(); ++i)
    if (ys[i] - offset > 0.0) {
      tx.push_back(ts[i]);
      ly.push_back(std::log(ys[i] - offset));
    }
  if (tx.size() < 2 || tx.front() == tx.back()) return std::nullopt;
  try {
    const auto line = stats::fit_line(tx, ly);
    return std::make_pair(line.intercept, line.slope);
  } catch (const Error&) {
    return std::nullopt;
  }
}

template <class Problem>
SolverResult best_of_starts(const Problem& problem, const std::vector<Eigen::VectorXd>& starts, const Bounds& bounds,
                            const SolverOptions& solver, int& n_converged) {
  SolverResult best;
  n_converged = 0;
  for (const auto& s : starts) {
    auto res = minimize_huber(problem, s, bounds, solver);
    if (!res.converged() || !std::isfinite(res.objective)) continue;
    ++n_converged;
    if (res.objective < best.objective) best = std::move(res);
  }
  return best;
}

}  // namespace detail

inline PowerLawFit power_law_from_params(const Eigen::VectorXd& p, bool fix_e, double x0) {
  PowerLawFit f;
  const Eigen::Index off = fix_e ? 0 : 1;
  f.E = fix_e ? 0.0 : p[0];
  f.A = std::exp(p[off]);
  f.beta = std::exp(p[off + 1]);
  f.x0 = x0;
  f.B = f.A * std::pow(x0, f.beta);
  f.fixed_E_zero = fix_e;
  return f;
}

inline Eigen::VectorXd power_law_params(const PowerLawFit& f) {
  if (f.fixed_E_zero) return Eigen::Vector2d(std::log(f.A), std::log(f.beta));
  return Eigen::Vector3d(f.E, std::log(f.A), std::log(f.beta));
}

namespace detail {

inline Bounds power_law_bounds(bool fix_e, double beta_min, double beta_max) {
  auto b = Bounds::unbounded(fix_e ? 2 : 3);
  const Eigen::Index ib = fix_e ? 1 : 2;
  b.lower[ib] = std::log(beta_min);
  b.upper[ib] = std::log(beta_max);
  return b;
}

inline PowerLawFit finish_power_law(const PowerLawProblem& problem, const SolverResult& res, double delta) {
  auto fit = power_law_from_params(res.params, problem.fix_e, problem.x0);
  Eigen::VectorXd r;
  problem(res.params, r, nullptr);
  fit.mse = mean_squared(r);
  fit.objective = res.objective;
  fit.huber_delta = delta;
  return fit;
}

}  // namespace detail

// Huber-robust multi-start fit of y = E + B x^-beta with beta inside
// [beta_min, beta_max]; the lowest final objective wins.
inline PowerLawFit fit_power_law(const Series1D& series, const PowerLawOptions& opt = {}) {
  const std::size_t n_params = opt.fix_E_zero ? 2 : 3;
  series.validate(n_params + 1);
  if (!(opt.beta_min > 0.0) || !(opt.beta_max > opt.beta_min))
    throw InvalidArgument("fit_power_law: beta bounds must satisfy 0 < beta_min < beta_max");
  const auto& xs = series.xs;
  const auto& ys = series.ys;
  const double x0 = opt.pivot.value_or(stats::median(xs));
  const double delta = opt.huber_delta.value_or(default_huber_delta(ys));
  const detail::PowerLawProblem problem{xs, ys, x0, opt.fix_E_zero};
  const auto bounds = detail::power_law_bounds(opt.fix_E_zero, opt.beta_min, opt.beta_max);
  SolverOptions solver = opt.solver;
  solver.huber_delta = delta;

  std::vector<double> lt(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) lt[i] = std::log(xs[i] / x0);
  const double lo = *std::min_element(ys.begin(), ys.end());
  const double hi = *std::max_element(ys.begin(), ys.end());
  const double range = hi > lo ? hi - lo : std::max(std::abs(lo) * 0.1, 1e-3);
  const double ymed = stats::median(ys);
  auto make_start = [&](double e, double a, double beta) {
    beta = std::clamp(beta, opt.beta_min, opt.beta_max);
    a = std::max(a, 1e-300);
    if (opt.fix_E_zero) return Eigen::VectorXd(Eigen::Vector2d(std::log(a), std::log(beta)));
    return Eigen::VectorXd(Eigen::Vector3d(e, std::log(a), std::log(beta)));
  };

  std::vector<Eigen::VectorXd> starts;
  const auto offsets = opt.fix_E_zero ? std::vector<double>{0.0} : detail::offset_seeds(ys);
  for (double e0 : offsets) {
    const auto seed = detail::log_linear_seed(lt, ys, e0);
    const double a0 = seed ? std::exp(seed->first) : std::max(ymed - e0, range);
    const double b0 = seed && seed->second < 0.0 ? -seed->second : 0.5;
    for (double scale : {1.0, 0.5, 2.0}) starts.push_back(make_start(e0, a0, b0 * scale));
  }
  Rng rng(opt.seed);
  const double lb = std::log(opt.beta_min);
  const double ub = std::log(opt.beta_max);
  while (static_cast<int>(starts.size()) < opt.n_starts) {
    const double e0 = opt.fix_E_zero ? 0.0 : rng.uniform(lo - 2.0 * range, lo);
    const double beta0 = std::exp(rng.uniform(lb, ub));
    starts.push_back(make_start(e0, std::max(ymed - e0, 1e-3 * range), beta0));
  }

  int n_converged = 0;
  const auto best = detail::best_of_starts(problem, starts, bounds, solver, n_converged);
  if (n_converged == 0)
    throw FitFailure("fit_power_law: none of " + std::to_string(starts.size()) + " starts converged (" +
                     std::to_string(series.size()) + " points, delta " + std::to_string(delta) + ")");
  auto fit = detail::finish_power_law(problem, best, delta);
  fit.n_converged = n_converged;
  return fit;
}

// Single warm-started refit keeping the base fit's cutoff, pivot and bounds.
// Returns nothing when the optimizer fails.
inline std::optional<PowerLawFit> refit_power_law(std::span<const double> xs, std::span<const double> ys,
                                                  const PowerLawFit& base, const PowerLawOptions& opt = {}) {
  const detail::PowerLawProblem problem{xs, ys, base.x0, base.fixed_E_zero};
  const auto bounds = detail::power_law_bounds(base.fixed_E_zero, opt.beta_min, opt.beta_max);
  SolverOptions solver = opt.solver;
  solver.huber_delta = base.huber_delta;
  const auto res = minimize_huber(problem, power_law_params(base), bounds, solver);
  if (!res.converged() || !std::isfinite(res.objective)) return std::nullopt;
  auto fit = detail::finish_power_law(problem, res, base.huber_delta);
  fit.n_converged = 1;
  return fit;
}

struct ExpOptions {
  int n_starts = 40;
  Seed seed = 0;
  std::optional<double> huber_delta;
  SolverOptions solver;
};

// Same robust multi-start protocol for y = a + b exp(-c x); x is scaled by
// its median internally so c can span many orders of magnitude.
inline ExpFit fit_exponential(const Series1D& series, const ExpOptions& opt = {}) {
  series.validate(4);
  const auto& xs = series.xs;
  const auto& ys = series.ys;
  const double x0 = stats::median(xs);
  const double delta = opt.huber_delta.value_or(default_huber_delta(ys));
  const detail::ExpProblem problem{xs, ys, x0};
  auto bounds = Bounds::unbounded(3);
  bounds.lower[2] = std::log(1e-6);
  bounds.upper[2] = std::log(1e3);
  SolverOptions solver = opt.solver;
  solver.huber_delta = delta;

  std::vector<double> ts(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) ts[i] = xs[i] / x0;
  const double lo = *std::min_element(ys.begin(), ys.end());
  const double hi = *std::max_element(ys.begin(), ys.end());
  const double range = hi > lo ? hi - lo : std::max(std::abs(lo) * 0.1, 1e-3);
  auto make_start = [&](double a, double b, double c) {
    c = std::clamp(c, 1e-6, 1e3);
    return Eigen::VectorXd(Eigen::Vector3d(a, std::log(std::max(b, 1e-300)), std::log(c)));
  };
  std::vector<Eigen::VectorXd> starts;
  for (double a0 : detail::offset_seeds(ys)) {
    const auto seed = detail::log_linear_seed(ts, ys, a0);
    const double b0 = seed ? std::exp(seed->first) : range;
    const double c0 = seed && seed->second < 0.0 ? -seed->second : 1.0;
    for (double scale : {1.0, 0.5, 2.0}) starts.push_back(make_start(a0, b0, c0 * scale));
  }
  Rng rng(opt.seed);
  while (static_cast<int>(starts.size()) < opt.n_starts) {
    const double a0 = rng.uniform(lo - 2.0 * range, lo);
    const double c0 = std::exp(rng.uniform(std::log(1e-3), std::log(1e2)));
    const double b0 = std::max(hi - a0, 1e-3 * range) * std::exp(c0 * ts.front());
    starts.push_back(make_start(a0, b0, c0));
  }
  int n_converged = 0;
  const auto best = detail::best_of_starts(problem, starts, bounds, solver, n_converged);
  if (n_converged == 0) throw FitFailure("fit_exponential: no start converged");
  ExpFit fit;
  fit.a = best.params[0];
  fit.b = std::exp(best.params[1]);
  fit.c = std::exp(best.params[2]) / x0;
  fit.huber_delta = delta;
  fit.objective = best.objective;
  Eigen::VectorXd r;
  problem(best.params, r, nullptr);
  fit.mse = detail::mean_squared(r);
  fit.n_converged = n_converged;
  return fit;
}

inline double mse_ratio(const PowerLawFit& power, const ExpFit& exp) {
  if (!(exp.mse > 0.0)) throw NumericFailure("mse_ratio: exponential fit has zero MSE, ratio undefined");
  return power.mse / exp.mse;
}

enum class ScalingAxis { kN, kD };

inline const char* to_string(ScalingAxis a) { return a == ScalingAxis::kN ? "N" : "D"; }

struct ExponentSummary {
  ScalingAxis axis = ScalingAxis::kN;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation across slices
  std::vector<double> exponents;
  std::size_t n_dropped = 0;
  // Smallest fitted offset; serves as the entropy proxy.
  double entropy_proxy = 0.0;
};

// Mean and spread of slice exponents, optionally after discarding the
// `drop_extremes` exponents farthest from their median.
inline ExponentSummary summarize_exponents(std::span<const PowerLawFit> fits, ScalingAxis axis,
                                           std::size_t drop_extremes = 0) {
  if (fits.empty()) throw InvalidArgument("summarize_exponents: no fits");
  if (drop_extremes >= fits.size()) throw InvalidArgument("summarize_exponents: would drop every fit");
  ExponentSummary s;
  s.axis = axis;
  for (const auto& f : fits) s.exponents.push_back(f.beta);
  s.entropy_proxy = std::min_element(fits.begin(), fits.end(), [](auto& a, auto& b) { return a.E < b.E; })->E;
  if (drop_extremes > 0) {
    const double med = stats::median(s.exponents);
    std::vector<std::size_t> order(s.exponents.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return std::abs(s.exponents[a] - med) > std::abs(s.exponents[b] - med);
    });
    std::vector<bool> drop(s.exponents.size(), false);
    for (std::size_t k = 0; k < drop_extremes; ++k) drop[order[k]] = true;
    std::vector<double> kept;
    for (std::size_t i = 0; i < s.exponents.size(); ++i)
      if (!drop[i]) kept.push_back(s.exponents[i]);
    s.exponents = std::move(kept);
    s.n_dropped = drop_extremes;
  }
  s.mean = stats::mean(s.exponents);
  s.stddev = stats::stddev(s.exponents);
  return s;
}

}  // namespace slab

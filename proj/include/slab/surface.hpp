#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slab/error.hpp"
#include "slab/least_squares.hpp"
#include "slab/loss_table.hpp"
#include "slab/parallel.hpp"
#include "slab/stats.hpp"

namespace slab {

// Maps raw (N, D) to centered, unit-variance (log10 N, log10 D) and centers
// the loss.
struct Normalizer {
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> scale{1.0, 1.0};
  double y_mean = 0.0;

  static Normalizer fit(std::span<const LossPoint> pts) {
    if (pts.empty()) throw InvalidArgument("normalizer: no points");
    std::vector<double> ln;
    std::vector<double> ld;
    std::vector<double> ys;
    for (const auto& p : pts) {
      ln.push_back(std::log10(p.n));
      ld.push_back(std::log10(p.d));
      ys.push_back(p.loss);
    }
    Normalizer z;
    z.mean = {stats::mean(ln), stats::mean(ld)};
    const double sn = stats::stddev(ln);
    const double sd = stats::stddev(ld);
    z.scale = {sn > 0.0 ? sn : 1.0, sd > 0.0 ? sd : 1.0};
    z.y_mean = stats::mean(ys);
    return z;
  }

  std::array<double, 2> to_unit(double n, double d) const {
    return {(std::log10(n) - mean[0]) / scale[0], (std::log10(d) - mean[1]) / scale[1]};
  }
  std::array<double, 2> from_unit(double u, double v) const {
    return {std::pow(10.0, u * scale[0] + mean[0]), std::pow(10.0, v * scale[1] + mean[1])};
  }
};

enum class SurfaceKind { kChinchilla, kKaplan, kKernel, kMlp };

inline const char* to_string(SurfaceKind k) {
  switch (k) {
    case SurfaceKind::kChinchilla: return "chinchilla";
    case SurfaceKind::kKaplan: return "kaplan";
    case SurfaceKind::kKernel: return "kernel";
    case SurfaceKind::kMlp: return "mlp";
  }
  return "?";
}

// Fitted predictor of loss over raw (N, D).
struct SurfaceModel {
  SurfaceKind kind = SurfaceKind::kChinchilla;
  std::function<double(double, double)> fn;
  Normalizer norm;
  std::map<std::string, double> diagnostics;
  // Range of the training inputs, used by the frontier grid.
  double n_min = 0.0;
  double n_max = 0.0;
  double d_min = 0.0;
  double d_max = 0.0;

  double predict(double n, double d) const { return fn(n, d); }

  void set_range(std::span<const LossPoint> pts) {
    n_min = d_min = std::numeric_limits<double>::infinity();
    n_max = d_max = 0.0;
    for (const auto& p : pts) {
      n_min = std::min(n_min, p.n);
      n_max = std::max(n_max, p.n);
      d_min = std::min(d_min, p.d);
      d_max = std::max(d_max, p.d);
    }
  }
};

inline double mean_squared_error(const SurfaceModel& m, std::span<const LossPoint> pts) {
  if (pts.empty()) throw InvalidArgument("mean_squared_error: no points");
  double s = 0.0;
  for (const auto& p : pts) {
    const double r = m.predict(p.n, p.d) - p.loss;
    s += r * r;
  }
  return s / static_cast<double>(pts.size());
}

namespace detail {

inline void require_grid(std::span<const LossPoint> pts, const char* who) {
  std::set<std::pair<double, double>> cells;
  std::set<double> ns;
  std::set<double> ds;
  for (const auto& p : pts) {
    if (!(p.n > 0.0) || !(p.d > 0.0) || !(p.loss > 0.0))
      throw InvalidArgument(std::string(who) + ": N, D and loss must be positive");
    cells.insert({p.n, p.d});
    ns.insert(p.n);
    ds.insert(p.d);
  }
  if (cells.size() < 10)
    throw InvalidArgument(std::string(who) + ": need at least 10 distinct (N, D) points, got " +
                          std::to_string(cells.size()));
  if (ns.size() < 2 || ds.size() < 2)
    throw FitFailure(std::string(who) + ": table has " + std::to_string(ns.size()) + " distinct N and " +
                     std::to_string(ds.size()) + " distinct D; both exponents need at least two");
}

// Runs every start (in parallel) for at most `screen_iterations`, then
// carries the `keep` lowest objectives on to full convergence and returns the
// best. Ties go to the earlier start so scheduling never changes the answer.
template <class Problem>
SolverResult best_start_parallel(const Problem& problem, const std::vector<Eigen::VectorXd>& starts,
                                 const Bounds& bounds, const SolverOptions& solver, int& n_converged,
                                 int screen_iterations = 30, std::size_t keep = 32) {
  SolverOptions screen = solver;
  screen.max_iterations = std::min(screen_iterations, solver.max_iterations);
  std::vector<SolverResult> first(starts.size());
  parallel_for(starts.size(), [&](std::size_t i) { first[i] = minimize_huber(problem, starts[i], bounds, screen); });
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < first.size(); ++i)
    if (std::isfinite(first[i].objective) && first[i].termination != Termination::kNonFinite) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return first[a].objective < first[b].objective; });
  if (order.size() > keep) order.resize(keep);
  std::vector<SolverResult> results(order.size());
  parallel_for(order.size(), [&](std::size_t k) {
    const auto& r = first[order[k]];
    results[k] = r.termination == Termination::kMaxIterations ? minimize_huber(problem, r.params, bounds, solver) : r;
  });
  SolverResult best;
  n_converged = 0;
  for (auto& r : results) {
    if (!r.converged() || !std::isfinite(r.objective)) continue;
    ++n_converged;
    if (r.objective < best.objective) best = std::move(r);
  }
  return best;
}

inline double lse3(double x, double y, double z, double& sx, double& sy, double& sz) {
  const double m = std::max({x, y, z});
  const double ex = std::exp(x - m);
  const double ey = std::exp(y - m);
  const double ez = std::exp(z - m);
  const double s = ex + ey + ez;
  sx = ex / s;
  sy = ey / s;
  sz = ez / s;
  return m + std::log(s);
}

// log L = LSE(a - alpha ln N, b - beta ln D, e); params [a, b, e, alpha, beta].
struct ChinchillaProblem {
  std::vector<double> ln, ld, ll;

  explicit ChinchillaProblem(std::span<const LossPoint> pts) {
    for (const auto& p : pts) {
      ln.push_back(std::log(p.n));
      ld.push_back(std::log(p.d));
      ll.push_back(std::log(p.loss));
    }
  }

  void operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) const {
    const auto m = static_cast<Eigen::Index>(ln.size());
    r.resize(m);
    if (jac != nullptr) jac->resize(m, 5);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto k = static_cast<std::size_t>(i);
      double s1 = 0.0;
      double s2 = 0.0;
      double s3 = 0.0;
      r[i] = lse3(p[0] - p[3] * ln[k], p[1] - p[4] * ld[k], p[2], s1, s2, s3) - ll[k];
      if (jac != nullptr) {
        (*jac)(i, 0) = s1;
        (*jac)(i, 1) = s2;
        (*jac)(i, 2) = s3;
        (*jac)(i, 3) = -s1 * ln[k];
        (*jac)(i, 4) = -s2 * ld[k];
      }
    }
  }
};

// log L = beta * LSE((alpha/beta)(ln Nc - ln N), ln Dc - ln D);
// params [ln Nc, ln Dc, ln alpha, ln beta].
struct KaplanProblem {
  std::span<const LossPoint> pts;

  void operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) const {
    const double alpha = std::exp(p[2]);
    const double beta = std::exp(p[3]);
    const auto m = static_cast<Eigen::Index>(pts.size());
    r.resize(m);
    if (jac != nullptr) jac->resize(m, 4);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double u = alpha / beta * (p[0] - std::log(pts[i].n));
      const double v = p[1] - std::log(pts[i].d);
      const double mx = std::max(u, v);
      const double eu = std::exp(u - mx);
      const double ev = std::exp(v - mx);
      const double s = mx + std::log(eu + ev);
      const double su = eu / (eu + ev);
      const double sv = ev / (eu + ev);
      r[i] = beta * s - std::log(pts[i].loss);
      if (jac != nullptr) {
        (*jac)(i, 0) = alpha * su;
        (*jac)(i, 1) = beta * sv;
        (*jac)(i, 2) = beta * su * u;
        (*jac)(i, 3) = beta * (s - su * u);
      }
    }
  }
};

}  // namespace detail

struct ChinchillaFit {
  double A = 0.0;
  double B = 0.0;
  double E = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double huber_delta = 1e-3;
  double objective = 0.0;
  double train_mse = 0.0;
  int n_converged = 0;

  double predict(double n, double d) const { return E + A * std::pow(n, -alpha) + B * std::pow(d, -beta); }
};

struct ParametricOptions {
  double huber_delta = 1e-3;
  SolverOptions solver;
};

// Huber fit on log residuals from the full initialization grid
// alpha, beta in {0, .5, ..., 2}, e in {-1, -.5, ..., 1}, a, b in {0, 5, ..., 25}.
inline ChinchillaFit fit_chinchilla_2d(std::span<const LossPoint> pts, const ParametricOptions& opt = {}) {
  detail::require_grid(pts, "fit_chinchilla_2d");
  const detail::ChinchillaProblem problem(pts);
  std::vector<Eigen::VectorXd> starts;
  for (double a = 0; a <= 25; a += 5)
    for (double b = 0; b <= 25; b += 5)
      for (double e = -1; e <= 1; e += 0.5)
        for (double al = 0; al <= 2; al += 0.5)
          for (double be = 0; be <= 2; be += 0.5) {
            Eigen::VectorXd s(5);
            s << a, b, e, al, be;
            starts.push_back(s);
          }
  SolverOptions solver = opt.solver;
  solver.huber_delta = opt.huber_delta;
  int n_converged = 0;
  const auto best = detail::best_start_parallel(problem, starts, Bounds::unbounded(5), solver, n_converged);
  if (n_converged == 0) throw FitFailure("fit_chinchilla_2d: no start out of " + std::to_string(starts.size()) + " converged");
  ChinchillaFit f;
  f.A = std::exp(best.params[0]);
  f.B = std::exp(best.params[1]);
  f.E = std::exp(best.params[2]);
  f.alpha = best.params[3];
  f.beta = best.params[4];
  f.huber_delta = opt.huber_delta;
  f.objective = best.objective;
  f.n_converged = n_converged;
  double s = 0.0;
  for (const auto& p : pts) s += std::pow(f.predict(p.n, p.d) - p.loss, 2);
  f.train_mse = s / static_cast<double>(pts.size());
  return f;
}

struct KaplanFit {
  double N_c = 0.0;
  double D_c = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double huber_delta = 1e-3;
  double objective = 0.0;
  double train_mse = 0.0;
  int n_converged = 0;

  double predict(double n, double d) const {
    return std::pow(std::pow(N_c / n, alpha / beta) + D_c / d, beta);
  }
};

inline KaplanFit fit_kaplan_2d(std::span<const LossPoint> pts, const ParametricOptions& opt = {}) {
  detail::require_grid(pts, "fit_kaplan_2d");
  const detail::KaplanProblem problem{pts};
  std::vector<Eigen::VectorXd> starts;
  for (double lnc = 6; lnc <= 14; lnc += 2)
    for (double ldc = 6; ldc <= 14; ldc += 2)
      for (double al : {0.05, 0.1, 0.2, 0.4, 0.8})
        for (double be : {0.05, 0.1, 0.2, 0.4, 0.8}) {
          Eigen::VectorXd s(4);
          s << lnc * std::log(10.0), ldc * std::log(10.0), std::log(al), std::log(be);
          starts.push_back(s);
        }
  SolverOptions solver = opt.solver;
  solver.huber_delta = opt.huber_delta;
  int n_converged = 0;
  const auto best = detail::best_start_parallel(problem, starts, Bounds::unbounded(4), solver, n_converged);
  if (n_converged == 0) throw FitFailure("fit_kaplan_2d: no start out of " + std::to_string(starts.size()) + " converged");
  KaplanFit f;
  f.N_c = std::exp(best.params[0]);
  f.D_c = std::exp(best.params[1]);
  f.alpha = std::exp(best.params[2]);
  f.beta = std::exp(best.params[3]);
  f.huber_delta = opt.huber_delta;
  f.objective = best.objective;
  f.n_converged = n_converged;
  double s = 0.0;
  for (const auto& p : pts) s += std::pow(f.predict(p.n, p.d) - p.loss, 2);
  f.train_mse = s / static_cast<double>(pts.size());
  return f;
}

inline SurfaceModel as_surface(const ChinchillaFit& f, std::span<const LossPoint> pts) {
  SurfaceModel m;
  m.kind = SurfaceKind::kChinchilla;
  m.fn = [f](double n, double d) { return f.predict(n, d); };
  m.norm = Normalizer::fit(pts);
  m.set_range(pts);
  m.diagnostics = {{"A", f.A}, {"B", f.B}, {"E", f.E}, {"alpha", f.alpha}, {"beta", f.beta},
                   {"objective", f.objective}, {"train_mse", f.train_mse}};
  return m;
}

inline SurfaceModel as_surface(const KaplanFit& f, std::span<const LossPoint> pts) {
  SurfaceModel m;
  m.kind = SurfaceKind::kKaplan;
  m.fn = [f](double n, double d) { return f.predict(n, d); };
  m.norm = Normalizer::fit(pts);
  m.set_range(pts);
  m.diagnostics = {{"N_c", f.N_c}, {"D_c", f.D_c}, {"alpha", f.alpha}, {"beta", f.beta},
                   {"objective", f.objective}, {"train_mse", f.train_mse}};
  return m;
}

// Points of an exact Chinchilla-form surface on a log grid.
inline std::vector<LossPoint> chinchilla_grid(const ChinchillaFit& f, double n_lo, double n_hi, int n_n, double d_lo,
                                              double d_hi, int n_d) {
  std::vector<LossPoint> pts;
  for (int i = 0; i < n_n; ++i)
    for (int j = 0; j < n_d; ++j) {
      const double n = n_lo * std::pow(n_hi / n_lo, n_n > 1 ? static_cast<double>(i) / (n_n - 1) : 0.0);
      const double d = d_lo * std::pow(d_hi / d_lo, n_d > 1 ? static_cast<double>(j) / (n_d - 1) : 0.0);
      pts.push_back({n, d, f.predict(n, d)});
    }
  return pts;
}

}  // namespace slab

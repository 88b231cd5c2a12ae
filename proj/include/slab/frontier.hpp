#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "slab/bootstrap.hpp"
#include "slab/error.hpp"
#include "slab/io.hpp"
#include "slab/parallel.hpp"
#include "slab/powerfit.hpp"
#include "slab/stats.hpp"
#include "slab/surface.hpp"

namespace slab {

struct FrontierSample {
  double c = 0.0;
  // Minimizing over N at fixed C (D = C / 6N) and over D (N = C / 6D).
  double l_by_n = 0.0;
  double n_by_n = 0.0;
  double l_by_d = 0.0;
  double d_by_d = 0.0;
  bool boundary_n = false;
  bool boundary_d = false;
  bool clipped = false;

  // Reported optimum: the lower of the two directions.
  double l_opt() const { return std::min(l_by_n, l_by_d); }
  double n_opt() const { return l_by_n <= l_by_d ? n_by_n : c / (6.0 * d_by_d); }
  double d_opt() const { return l_by_n <= l_by_d ? c / (6.0 * n_by_n) : d_by_d; }
  bool flagged() const { return boundary_n || boundary_d; }
  bool usable() const { return !flagged() && !clipped; }
};

struct FrontierSamples {
  std::vector<double> n_grid;
  std::vector<double> d_grid;
  std::vector<FrontierSample> samples;
  double c_lo = 0.0;  // clip window
  double c_hi = 0.0;
};

struct FrontierOptions {
  int grid_points = 100;
  double clip_lo = 0.1;  // fraction of the log-C range dropped at each end
  double clip_hi = 0.1;
  bool refine = true;    // parabolic refinement of the grid argmin in log space
};

namespace detail {

inline std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  return g;
}

struct LineMin {
  double l = std::numeric_limits<double>::infinity();
  double x = 0.0;
  bool boundary = true;
};

// Minimizes f over the grid points whose partner lies in [lo, hi]; the
// argmin is flagged when it sits on the first or last feasible point.
template <class Fn>
LineMin minimize_on_grid(const std::vector<double>& grid, double c, double lo, double hi, bool refine, Fn&& f) {
  std::vector<std::size_t> feasible;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double partner = c / (6.0 * grid[i]);
    if (partner >= lo * (1.0 - 1e-12) && partner <= hi * (1.0 + 1e-12)) feasible.push_back(i);
  }
  LineMin out;
  if (feasible.empty()) return out;
  std::vector<double> vals(feasible.size());
  std::size_t best = 0;
  for (std::size_t k = 0; k < feasible.size(); ++k) {
    vals[k] = f(grid[feasible[k]]);
    if (vals[k] < vals[best]) best = k;
  }
  out.l = vals[best];
  out.x = grid[feasible[best]];
  out.boundary = best == 0 || best + 1 == feasible.size();
  if (refine && !out.boundary) {
    const double t0 = std::log(grid[feasible[best - 1]]);
    const double t1 = std::log(grid[feasible[best]]);
    const double t2 = std::log(grid[feasible[best + 1]]);
    const double f0 = vals[best - 1];
    const double f1 = vals[best];
    const double f2 = vals[best + 1];
    const double denom = (t1 - t0) * (f1 - f2) - (t1 - t2) * (f1 - f0);
    if (denom != 0.0) {
      const double t = t1 - 0.5 * ((t1 - t0) * (t1 - t0) * (f1 - f2) - (t1 - t2) * (t1 - t2) * (f1 - f0)) / denom;
      if (t > t0 && t < t2) {
        const double x = std::exp(t);
        const double v = f(x);
        if (v < out.l) {
          out.l = v;
          out.x = x;
        }
      }
    }
  }
  return out;
}

}  // namespace detail

inline FrontierSamples sample_frontier(const SurfaceModel& surface, const FrontierOptions& opt = {}) {
  if (opt.grid_points < 20) throw InvalidArgument("sample_frontier: grid_points must be >= 20");
  if (!(opt.clip_lo >= 0.0) || !(opt.clip_hi >= 0.0) || opt.clip_lo + opt.clip_hi >= 1.0)
    throw InvalidArgument("sample_frontier: clip fractions must be non-negative and leave part of the range");
  if (!(surface.n_min > 0.0) || !(surface.n_max > surface.n_min) || !(surface.d_min > 0.0) ||
      !(surface.d_max > surface.d_min))
    throw InvalidArgument("sample_frontier: surface has no usable N, D range");
  FrontierSamples out;
  out.n_grid = detail::log_grid(surface.n_min, surface.n_max, opt.grid_points);
  out.d_grid = detail::log_grid(surface.d_min, surface.d_max, opt.grid_points);
  const double c_min = 6.0 * surface.n_min * surface.d_min;
  const double c_max = 6.0 * surface.n_max * surface.d_max;
  const double span = std::log(c_max / c_min);
  out.c_lo = c_min * std::exp(opt.clip_lo * span);
  out.c_hi = c_max * std::exp(-opt.clip_hi * span);
  if (!(out.c_hi > out.c_lo)) throw InvalidArgument("sample_frontier: empty compute range after clipping");
  const auto cs = detail::log_grid(c_min, c_max, opt.grid_points);
  out.samples.resize(cs.size());
  parallel_for(cs.size(), [&](std::size_t i) {
    const double c = cs[i];
    FrontierSample s;
    s.c = c;
    const auto by_n = detail::minimize_on_grid(out.n_grid, c, surface.d_min, surface.d_max, opt.refine,
                                               [&](double n) { return surface.predict(n, c / (6.0 * n)); });
    const auto by_d = detail::minimize_on_grid(out.d_grid, c, surface.n_min, surface.n_max, opt.refine,
                                               [&](double d) { return surface.predict(c / (6.0 * d), d); });
    s.l_by_n = by_n.l;
    s.n_by_n = by_n.x;
    s.boundary_n = by_n.boundary;
    s.l_by_d = by_d.l;
    s.d_by_d = by_d.x;
    s.boundary_d = by_d.boundary;
    s.clipped = c < out.c_lo * (1.0 - 1e-12) || c > out.c_hi * (1.0 + 1e-12);
    out.samples[i] = s;
  });
  return out;
}

struct FrontierResult {
  double gamma = 0.0;
  double K = 0.0;
  double E_C = 0.0;
  double a = 0.0;
  double N0 = 0.0;
  double b = 0.0;
  double D0 = 0.0;
  double a_plus_b = 0.0;
  std::size_t n_used = 0;
  PowerLawFit l_fit;
  std::optional<FitCI> l_ci;
  stats::LineFit n_fit;
  stats::LineFit d_fit;
};

struct FrontierFitOptions {
  std::size_t n_boot = 200;  // 0 skips the interval
  double alpha = 0.05;
  Seed seed = 0;
  PowerLawOptions power;
};

// L_opt(C) = E_C + K C^-gamma by the robust 1d protocol; N_opt = N0 C^a and
// D_opt = D0 C^b by least squares in log-log.
inline FrontierResult fit_frontier(const FrontierSamples& fs, const FrontierFitOptions& opt = {}) {
  std::vector<double> cs;
  std::vector<double> ls;
  std::vector<double> lc;
  std::vector<double> ln;
  std::vector<double> ld;
  std::size_t unflagged = 0;
  for (const auto& s : fs.samples) {
    if (!s.flagged()) ++unflagged;
    if (!s.usable()) continue;
    cs.push_back(s.c);
    ls.push_back(s.l_opt());
    lc.push_back(std::log(s.c));
    ln.push_back(std::log(s.n_opt()));
    ld.push_back(std::log(s.d_opt()));
  }
  if (unflagged == 0) throw FitFailure("fit_frontier: every sample has its optimum on a grid boundary");
  if (cs.size() < 10)
    throw InvalidArgument("fit_frontier: " + std::to_string(cs.size()) +
                          " usable samples inside the clip window, need at least 10");
  FrontierResult r;
  r.n_used = cs.size();
  const auto series = Series1D::make(cs, ls, "frontier");
  r.l_fit = fit_power_law(series, opt.power);
  r.gamma = r.l_fit.beta;
  r.K = r.l_fit.B;
  r.E_C = r.l_fit.E;
  if (opt.n_boot > 0) r.l_ci = bca_ci(series, r.l_fit, opt.n_boot, opt.alpha, opt.seed, opt.power);
  r.n_fit = stats::fit_line(lc, ln);
  r.d_fit = stats::fit_line(lc, ld);
  r.a = r.n_fit.slope;
  r.N0 = std::exp(r.n_fit.intercept);
  r.b = r.d_fit.slope;
  r.D0 = std::exp(r.d_fit.intercept);
  r.a_plus_b = r.a + r.b;
  return r;
}

struct FrontierExponents {
  double gamma = 0.0;
  double a = 0.0;
  double b = 0.0;
};

inline FrontierExponents closed_form_frontier(double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw InvalidArgument("closed_form_frontier: exponents must be positive");
  return {alpha * beta / (alpha + beta), beta / (alpha + beta), alpha / (alpha + beta)};
}

inline FrontierExponents closed_form_frontier(const ChinchillaFit& f) { return closed_form_frontier(f.alpha, f.beta); }

// C,L_opt,N_opt,D_opt,flagged; flagged marks rows left out of the fit
// (boundary optimum or outside the clip window).
inline void write_frontier_csv(std::ostream& out, const FrontierSamples& fs) {
  out << "C,L_opt,N_opt,D_opt,flagged\n";
  out.precision(17);
  for (const auto& s : fs.samples) {
    out << s.c << ',' << s.l_opt() << ',' << s.n_opt() << ',' << s.d_opt() << ',' << (s.usable() ? 0 : 1) << '\n';
  }
}

}  // namespace slab

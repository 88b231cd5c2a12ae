#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "slab/error.hpp"
#include "slab/kernel_surface.hpp"
#include "slab/mlp_surface.hpp"
#include "slab/parallel.hpp"
#include "slab/powerfit.hpp"
#include "slab/rng.hpp"
#include "slab/surface.hpp"

namespace slab {

enum class FitMethod { kChinchilla, kKaplan, kKernel, kMlp, kOneD };

inline const char* to_string(FitMethod m) {
  switch (m) {
    case FitMethod::kChinchilla: return "chinchilla_2d";
    case FitMethod::kKaplan: return "kaplan_2d";
    case FitMethod::kKernel: return "kernel";
    case FitMethod::kMlp: return "mlp";
    case FitMethod::kOneD: return "1d";
  }
  return "?";
}

inline FitMethod parse_fit_method(const std::string& s) {
  for (auto m : {FitMethod::kChinchilla, FitMethod::kKaplan, FitMethod::kKernel, FitMethod::kMlp, FitMethod::kOneD})
    if (s == to_string(m)) return m;
  if (s == "chinchilla") return FitMethod::kChinchilla;
  if (s == "kaplan") return FitMethod::kKaplan;
  throw InvalidArgument("unknown fit method '" + s + "'");
}

struct CompareOptions {
  std::size_t n_splits = 20;
  double train_fraction = 0.8;
  Seed seed = 0;
  ParametricOptions parametric;
  KernelOptions kernel;
  MlpOptions mlp;
  PowerLawOptions power;
  // 1d slices hold N fixed and fit loss against D; false flips the axes.
  bool slices_fix_n = true;
  std::size_t min_slice_points = 4;
};

struct MethodReport {
  FitMethod method = FitMethod::kChinchilla;
  std::vector<double> train_mse;  // NaN for failed splits
  std::vector<double> val_mse;
  double train_mse_mean = std::numeric_limits<double>::quiet_NaN();
  double val_mse_mean = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_failures = 0;
  std::vector<std::string> failures;
  // 1d only: validation points whose slice had too few training points.
  std::size_t n_uncovered = 0;
};

struct MseReport {
  std::vector<MethodReport> methods;
  std::size_t n_splits = 0;
  std::size_t n_points = 0;
  Seed seed = 0;

  const MethodReport& at(FitMethod m) const {
    for (const auto& r : methods)
      if (r.method == m) return r;
    throw InvalidArgument(std::string("MseReport: no entry for ") + to_string(m));
  }
};

// Train/validation split `index` of the sequence drawn from `seed`.
inline std::pair<std::vector<LossPoint>, std::vector<LossPoint>> split_points(std::span<const LossPoint> pts,
                                                                              double train_fraction, Seed seed,
                                                                              std::size_t index) {
  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, index);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(pts.size())));
  std::pair<std::vector<LossPoint>, std::vector<LossPoint>> out;
  for (std::size_t k = 0; k < order.size(); ++k) (k < n_train ? out.first : out.second).push_back(pts[order[k]]);
  return out;
}

namespace detail {

struct SplitScore {
  double train = std::numeric_limits<double>::quiet_NaN();
  double val = std::numeric_limits<double>::quiet_NaN();
  std::size_t uncovered = 0;
};

// Per-slice 1d power-law fits; points are scored only where their slice was
// fitted.
inline SplitScore score_one_d(const std::vector<LossPoint>& train, const std::vector<LossPoint>& val,
                              const CompareOptions& opt) {
  auto key = [&](const LossPoint& p) { return opt.slices_fix_n ? p.n : p.d; };
  auto xval = [&](const LossPoint& p) { return opt.slices_fix_n ? p.d : p.n; };
  std::map<double, std::vector<LossPoint>> slices;
  for (const auto& p : train) slices[key(p)].push_back(p);
  std::map<double, PowerLawFit> fits;
  for (const auto& [k, sl] : slices) {
    if (sl.size() < opt.min_slice_points) continue;
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& p : sl) {
      xs.push_back(xval(p));
      ys.push_back(p.loss);
    }
    try {
      fits.emplace(k, fit_power_law(Series1D::make(xs, ys), opt.power));
    } catch (const InvalidArgument&) {
      // repeated x within a slice
    }
  }
  if (fits.empty()) throw FitFailure("1d: no slice has enough training points");
  SplitScore s;
  double st = 0.0;
  std::size_t nt = 0;
  for (const auto& p : train) {
    const auto it = fits.find(key(p));
    if (it == fits.end()) continue;
    st += std::pow(it->second.predict(xval(p)) - p.loss, 2);
    ++nt;
  }
  double sv = 0.0;
  std::size_t nv = 0;
  for (const auto& p : val) {
    const auto it = fits.find(key(p));
    if (it == fits.end()) {
      ++s.uncovered;
      continue;
    }
    sv += std::pow(it->second.predict(xval(p)) - p.loss, 2);
    ++nv;
  }
  if (nv == 0) throw FitFailure("1d: no validation point falls in a fitted slice");
  s.train = st / static_cast<double>(nt);
  s.val = sv / static_cast<double>(nv);
  return s;
}

inline SurfaceModel fit_surface(FitMethod m, const std::vector<LossPoint>& train, const CompareOptions& opt,
                                std::size_t split) {
  switch (m) {
    case FitMethod::kChinchilla: return as_surface(fit_chinchilla_2d(train, opt.parametric), train);
    case FitMethod::kKaplan: return as_surface(fit_kaplan_2d(train, opt.parametric), train);
    case FitMethod::kKernel: return as_surface(fit_kernel_surface(train, opt.kernel), train);
    case FitMethod::kMlp: {
      MlpOptions mo = opt.mlp;
      mo.seed = derive_seed(opt.mlp.seed, split);
      return as_surface(fit_mlp_surface(train, mo), train);
    }
    case FitMethod::kOneD: break;
  }
  throw InvalidArgument("fit_surface: 1d is not a surface method");
}

}  // namespace detail

// Every method sees the same split sequence. Failed fits are recorded and
// left out of the means.
inline MseReport compare_fits(std::span<const LossPoint> pts, const std::vector<FitMethod>& methods,
                              const CompareOptions& opt = {}) {
  if (opt.n_splits < 2) throw InvalidArgument("compare_fits: n_splits must be >= 2");
  if (methods.empty()) throw InvalidArgument("compare_fits: no methods");
  if (!(opt.train_fraction > 0.0 && opt.train_fraction < 1.0))
    throw InvalidArgument("compare_fits: train fraction must lie in (0, 1)");
  std::vector<std::pair<std::vector<LossPoint>, std::vector<LossPoint>>> splits;
  for (std::size_t s = 0; s < opt.n_splits; ++s) splits.push_back(split_points(pts, opt.train_fraction, opt.seed, s));
  if (splits[0].second.empty() || splits[0].first.empty())
    throw InvalidArgument("compare_fits: split leaves an empty train or validation set");

  const std::size_t n_tasks = methods.size() * opt.n_splits;
  std::vector<detail::SplitScore> scores(n_tasks);
  std::vector<std::string> errors(n_tasks);
  parallel_for(n_tasks, [&](std::size_t task) {
    const auto m = methods[task / opt.n_splits];
    const std::size_t s = task % opt.n_splits;
    const auto& [train, val] = splits[s];
    try {
      if (m == FitMethod::kOneD) {
        scores[task] = detail::score_one_d(train, val, opt);
      } else {
        const auto model = detail::fit_surface(m, train, opt, s);
        scores[task].train = mean_squared_error(model, train);
        scores[task].val = mean_squared_error(model, val);
      }
      if (!std::isfinite(scores[task].val)) throw NumericFailure("non-finite validation MSE");
    } catch (const Error& e) {
      scores[task] = {};
      errors[task] = e.what();
    }
  });

  MseReport rep;
  rep.n_splits = opt.n_splits;
  rep.n_points = pts.size();
  rep.seed = opt.seed;
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    MethodReport mr;
    mr.method = methods[mi];
    std::vector<double> ok_train;
    std::vector<double> ok_val;
    for (std::size_t s = 0; s < opt.n_splits; ++s) {
      const auto& sc = scores[mi * opt.n_splits + s];
      mr.train_mse.push_back(sc.train);
      mr.val_mse.push_back(sc.val);
      mr.n_uncovered += sc.uncovered;
      if (!errors[mi * opt.n_splits + s].empty()) {
        ++mr.n_failures;
        mr.failures.push_back("split " + std::to_string(s) + ": " + errors[mi * opt.n_splits + s]);
        continue;
      }
      ok_train.push_back(sc.train);
      ok_val.push_back(sc.val);
    }
    if (!ok_val.empty()) {
      mr.train_mse_mean = stats::mean(ok_train);
      mr.val_mse_mean = stats::mean(ok_val);
    }
    rep.methods.push_back(std::move(mr));
  }
  return rep;
}

}  // namespace slab

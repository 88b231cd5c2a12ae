#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slab/error.hpp"
#include "slab/huber.hpp"
#include "slab/surface.hpp"

namespace slab {

// k(x, x') = w_n RBF(n) + w_d RBF(d) + w_nd RBF(n, d) on normalized inputs.
struct KernelOptions {
  double w_n = 1.0;
  double w_d = 1.0;
  double w_nd = 1.0;
  double length = 1.0;
  double lambda = 1e-3;
  double huber_delta = 1e-3;
  int max_iterations = 100;
  double weight_tolerance = 1e-8;
};

struct KernelFit {
  std::vector<std::array<double, 2>> centers;
  Eigen::VectorXd coef;
  Normalizer norm;
  KernelOptions options;
  // Huber objective sum rho(r) + (lambda/2) a^T K a after each solve.
  std::vector<double> objective_history;
  int iterations = 0;
  bool converged = false;

  double kernel(const std::array<double, 2>& a, const std::array<double, 2>& b) const {
    const double l2 = 2.0 * options.length * options.length;
    const double dn = a[0] - b[0];
    const double dd = a[1] - b[1];
    return options.w_n * std::exp(-dn * dn / l2) + options.w_d * std::exp(-dd * dd / l2) +
           options.w_nd * std::exp(-(dn * dn + dd * dd) / l2);
  }

  double predict(double n, double d) const {
    const auto x = norm.to_unit(n, d);
    double s = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) s += coef[static_cast<Eigen::Index>(i)] * kernel(x, centers[i]);
    return s + norm.y_mean;
  }
};

// Kernel ridge regression with Huber weights by IRLS:
// (W K + lambda I) a = W y_c, solved as the symmetric (K + lambda W^-1) a = y_c.
inline KernelFit fit_kernel_surface(std::span<const LossPoint> pts, const KernelOptions& opt = {}) {
  if (pts.size() < 3) throw InvalidArgument("fit_kernel_surface: need at least 3 points");
  if (!(opt.lambda > 0.0)) throw InvalidArgument("fit_kernel_surface: lambda must be positive");
  if (!(opt.huber_delta > 0.0)) throw InvalidArgument("fit_kernel_surface: huber delta must be positive");
  KernelFit fit;
  fit.options = opt;
  fit.norm = Normalizer::fit(pts);
  const auto m = static_cast<Eigen::Index>(pts.size());
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& p = pts[static_cast<std::size_t>(i)];
    fit.centers.push_back(fit.norm.to_unit(p.n, p.d));
    y[i] = p.loss - fit.norm.y_mean;
  }
  Eigen::MatrixXd k(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j <= i; ++j)
      k(i, j) = k(j, i) = fit.kernel(fit.centers[static_cast<std::size_t>(i)], fit.centers[static_cast<std::size_t>(j)]);

  Eigen::VectorXd w = Eigen::VectorXd::Ones(m);
  Eigen::VectorXd a;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    Eigen::MatrixXd sys = k;
    sys.diagonal() += opt.lambda * w.cwiseInverse();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(sys);
    // rcond() alone misses exact zero pivots
    const auto piv = ldlt.vectorD().cwiseAbs();
    const double rcond =
        ldlt.info() == Eigen::Success && piv.maxCoeff() > 0.0 ? std::min(ldlt.rcond(), piv.minCoeff() / piv.maxCoeff()) : 0.0;
    if (!(rcond > 1e-15))
      throw NumericFailure("fit_kernel_surface: system is singular (reciprocal condition estimate " +
                           std::to_string(rcond) + ")");
    a = ldlt.solve(y);
    const Eigen::VectorXd r = y - k * a;
    double obj = 0.5 * opt.lambda * a.dot(k * a);
    for (Eigen::Index i = 0; i < m; ++i) obj += huber_rho(r[i], opt.huber_delta);
    fit.objective_history.push_back(obj);
    fit.iterations = iter + 1;
    double change = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double nw = huber_weight(r[i], opt.huber_delta);
      change = std::max(change, std::abs(nw - w[i]));
      w[i] = nw;
    }
    if (change < opt.weight_tolerance) {
      fit.converged = true;
      break;
    }
  }
  fit.coef = std::move(a);
  return fit;
}

inline SurfaceModel as_surface(const KernelFit& f, std::span<const LossPoint> pts) {
  SurfaceModel m;
  m.kind = SurfaceKind::kKernel;
  auto shared = std::make_shared<const KernelFit>(f);
  m.fn = [shared](double n, double d) { return shared->predict(n, d); };
  m.norm = f.norm;
  m.set_range(pts);
  m.diagnostics = {{"lambda", f.options.lambda},
                   {"huber_delta", f.options.huber_delta},
                   {"iterations", f.iterations},
                   {"converged", f.converged ? 1.0 : 0.0},
                   {"objective", f.objective_history.empty() ? 0.0 : f.objective_history.back()}};
  return m;
}

}  // namespace slab

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "slab/huber.hpp"

namespace slab {

struct Bounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static Bounds unbounded(Eigen::Index n) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    return {Eigen::VectorXd::Constant(n, -inf), Eigen::VectorXd::Constant(n, inf)};
  }
};

struct SolverOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-10;
  double function_tolerance = 1e-15;
  double step_tolerance = 1e-10;
  // Infinite cutoff means plain least squares with objective sum(r^2)/2.
  double huber_delta = std::numeric_limits<double>::infinity();
};

enum class Termination { kGradient, kConverged, kStalled, kMaxIterations, kNonFinite };

struct SolverResult {
  Eigen::VectorXd params;
  double objective = std::numeric_limits<double>::infinity();
  int iterations = 0;
  Termination termination = Termination::kNonFinite;

  bool converged() const {
    return termination == Termination::kGradient || termination == Termination::kConverged ||
           termination == Termination::kStalled;
  }
};

// Bounded Levenberg-Marquardt trust region on a Huber objective.
//
// Each iteration linearizes the residuals, reweights them with the Huber IRLS
// weights and solves the damped normal equations over the variables that are
// not pinned at an active bound. Trial points are projected back into the box
// and accepted only when the true Huber objective decreases.
//
// `model(params, residuals, jacobian)` must fill the residual vector and, when
// `jacobian` is non-null, the m x n Jacobian.
template <class Model>
SolverResult minimize_huber(Model&& model, Eigen::VectorXd start, const Bounds& bounds,
                            const SolverOptions& options = {}) {
  const Eigen::Index n = start.size();
  const double delta = options.huber_delta;
  auto clamp = [&](Eigen::VectorXd x) {
    return x.cwiseMax(bounds.lower).cwiseMin(bounds.upper).eval();
  };
  auto objective_of = [&](const Eigen::VectorXd& r) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) s += huber_rho(r[i], delta);
    return s;
  };

  SolverResult out;
  Eigen::VectorXd x = clamp(std::move(start));
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  model(x, r, &jac);
  double obj = objective_of(r);
  out.params = x;
  if (!std::isfinite(obj) || !jac.allFinite()) return out;

  double damping = 1e-3;
  Eigen::VectorXd trial_r;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    out.iterations = iter;
    Eigen::VectorXd w(r.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) w[i] = huber_weight(r[i], delta);
    const Eigen::VectorXd grad = jac.transpose() * (w.array() * r.array()).matrix();
    const Eigen::MatrixXd hess = jac.transpose() * w.asDiagonal() * jac;

    // Variables at a bound with the gradient pushing outward are frozen.
    std::vector<Eigen::Index> free;
    double pg_norm = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const bool at_lower = x[j] <= bounds.lower[j] && grad[j] > 0.0;
      const bool at_upper = x[j] >= bounds.upper[j] && grad[j] < 0.0;
      if (at_lower || at_upper) continue;
      free.push_back(j);
      pg_norm = std::max(pg_norm, std::abs(grad[j]));
    }
    if (pg_norm <= options.gradient_tolerance) {
      out.termination = Termination::kGradient;
      out.params = x;
      out.objective = obj;
      return out;
    }

    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd h(nf, nf);
    Eigen::VectorXd g(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      g[a] = grad[free[a]];
      for (Eigen::Index b = 0; b < nf; ++b) h(a, b) = hess(free[a], free[b]);
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = h;
      for (Eigen::Index a = 0; a < nf; ++a) damped(a, a) += damping * std::max(h(a, a), 1e-12);
      const Eigen::VectorXd step = damped.ldlt().solve(-g);
      Eigen::VectorXd trial = x;
      for (Eigen::Index a = 0; a < nf; ++a) trial[free[a]] += step[a];
      trial = clamp(std::move(trial));
      double trial_obj = std::numeric_limits<double>::infinity();
      if (step.allFinite()) {
        model(trial, trial_r, nullptr);
        trial_obj = objective_of(trial_r);
      }
      if (std::isfinite(trial_obj) && trial_obj < obj) {
        const double rel_f = (obj - trial_obj) / std::max(obj, std::numeric_limits<double>::min());
        const double rel_x = (trial - x).norm() / (x.norm() + options.step_tolerance);
        x = std::move(trial);
        obj = trial_obj;
        model(x, r, &jac);
        if (!jac.allFinite()) {
          out.termination = Termination::kNonFinite;
          out.params = x;
          out.objective = obj;
          return out;
        }
        damping = std::max(damping / 3.0, 1e-12);
        accepted = true;
        if (rel_f <= options.function_tolerance && rel_x <= options.step_tolerance) {
          out.termination = Termination::kConverged;
          out.params = x;
          out.objective = obj;
          out.iterations = iter + 1;
          return out;
        }
      } else {
        damping *= 4.0;
        if (damping > 1e16) {
          // No descent left at machine precision.
          out.termination = Termination::kStalled;
          out.params = x;
          out.objective = obj;
          return out;
        }
      }
    }
  }
  out.termination = Termination::kMaxIterations;
  out.params = x;
  out.objective = obj;
  out.iterations = options.max_iterations;
  return out;
}

}  // namespace slab

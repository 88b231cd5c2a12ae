#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "slab/error.hpp"
#include "slab/huber.hpp"
#include "slab/rng.hpp"
#include "slab/surface.hpp"

namespace slab {

struct MlpOptions {
  int width = 256;
  int epochs = 5000;
  double lr = 1e-3;
  double lr_min = 1e-5;  // cosine floor
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double huber_delta = 1e-3;
  // Stop once the loss has not improved by more than min_improvement for
  // more than `patience` steps.
  int patience = 200;
  double min_improvement = 1e-6;
  Seed seed = 0;
};

// 2 -> n -> n -> 1 with GeLU on the hidden layers.
struct MlpParams {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;

  void set_zero_like(const MlpParams& o) {
    w1 = Eigen::MatrixXd::Zero(o.w1.rows(), o.w1.cols());
    w2 = Eigen::MatrixXd::Zero(o.w2.rows(), o.w2.cols());
    w3 = Eigen::MatrixXd::Zero(o.w3.rows(), o.w3.cols());
    b1 = Eigen::VectorXd::Zero(o.b1.size());
    b2 = Eigen::VectorXd::Zero(o.b2.size());
    b3 = Eigen::VectorXd::Zero(o.b3.size());
  }

  template <class Fn>
  void for_each(MlpParams& a, MlpParams& b, MlpParams& c, Fn&& fn) {
    fn(w1, a.w1, b.w1, c.w1);
    fn(w2, a.w2, b.w2, c.w2);
    fn(w3, a.w3, b.w3, c.w3);
    fn(b1, a.b1, b.b1, c.b1);
    fn(b2, a.b2, b.b2, c.b2);
    fn(b3, a.b3, b.b3, c.b3);
  }
};

namespace detail {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
inline void fan_in_init(Eigen::MatrixXd& w, Eigen::VectorXd& b, Eigen::Index out, Eigen::Index in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  w.resize(out, in);
  b.resize(out);
  for (Eigen::Index j = 0; j < in; ++j)
    for (Eigen::Index i = 0; i < out; ++i) w(i, j) = rng.uniform(-bound, bound);
  for (Eigen::Index i = 0; i < out; ++i) b[i] = rng.uniform(-bound, bound);
}

}  // namespace detail

struct MlpFit {
  MlpParams params;
  Normalizer norm;
  MlpOptions options;
  double best_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_run = 0;
  bool stopped_early = false;

  // Forward pass on normalized inputs (2 x m); returns the centered output.
  Eigen::RowVectorXd forward(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd h1 = (params.w1 * x).colwise() + params.b1;
    h1 = h1.unaryExpr(&detail::gelu);
    Eigen::MatrixXd h2 = (params.w2 * h1).colwise() + params.b2;
    h2 = h2.unaryExpr(&detail::gelu);
    Eigen::RowVectorXd out = params.w3 * h2;
    out.array() += params.b3[0];
    return out;
  }

  double predict(double n, double d) const {
    const auto u = norm.to_unit(n, d);
    Eigen::MatrixXd x(2, 1);
    x << u[0], u[1];
    return forward(x)[0] + norm.y_mean;
  }
};

// Full-batch AdamW on the mean Huber loss of the centered targets; keeps the
// parameters from the epoch with the lowest loss.
inline MlpFit fit_mlp_surface(std::span<const LossPoint> pts, const MlpOptions& opt = {}) {
  if (pts.empty()) throw InvalidArgument("fit_mlp_surface: no points");
  if (opt.width < 1 || opt.epochs < 1) throw InvalidArgument("fit_mlp_surface: width and epochs must be positive");
  MlpFit fit;
  fit.options = opt;
  fit.norm = Normalizer::fit(pts);
  const auto m = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd x(2, m);
  Eigen::RowVectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& p = pts[static_cast<std::size_t>(i)];
    const auto u = fit.norm.to_unit(p.n, p.d);
    x(0, i) = u[0];
    x(1, i) = u[1];
    y[i] = p.loss - fit.norm.y_mean;
  }

  const Eigen::Index n = opt.width;
  Rng rng(opt.seed);
  MlpParams p;
  detail::fan_in_init(p.w1, p.b1, n, 2, rng);
  detail::fan_in_init(p.w2, p.b2, n, n, rng);
  detail::fan_in_init(p.w3, p.b3, 1, n, rng);
  MlpParams grad;
  MlpParams m1;
  MlpParams m2;
  grad.set_zero_like(p);
  m1.set_zero_like(p);
  m2.set_zero_like(p);
  MlpParams best = p;

  const double delta = opt.huber_delta;
  const double inv_m = 1.0 / static_cast<double>(m);
  double ref = std::numeric_limits<double>::infinity();
  int since = 0;
  double last_finite = std::numeric_limits<double>::quiet_NaN();
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const Eigen::MatrixXd z1 = (p.w1 * x).colwise() + p.b1;
    const Eigen::MatrixXd h1 = z1.unaryExpr(&detail::gelu);
    const Eigen::MatrixXd z2 = (p.w2 * h1).colwise() + p.b2;
    const Eigen::MatrixXd h2 = z2.unaryExpr(&detail::gelu);
    Eigen::RowVectorXd out = p.w3 * h2;
    out.array() += p.b3[0];
    const Eigen::RowVectorXd r = out - y;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) loss += huber_rho(r[i], delta);
    loss *= inv_m;
    if (!std::isfinite(loss))
      throw FitFailure("fit_mlp_surface: loss diverged at epoch " + std::to_string(epoch) + " (last finite loss " +
                       std::to_string(last_finite) + ")");
    last_finite = loss;
    fit.epochs_run = epoch + 1;
    if (loss < fit.best_loss) {
      fit.best_loss = loss;
      fit.best_epoch = epoch;
      best = p;
    }
    if (loss < ref - opt.min_improvement) {
      ref = loss;
      since = 0;
    } else if (++since > opt.patience) {
      fit.stopped_early = true;
      break;
    }

    const Eigen::RowVectorXd g_out = r.unaryExpr([delta](double v) { return std::clamp(v, -delta, delta); }) * inv_m;
    grad.w3 = g_out * h2.transpose();
    grad.b3[0] = g_out.sum();
    const Eigen::MatrixXd g_z2 = (p.w3.transpose() * g_out).cwiseProduct(z2.unaryExpr(&detail::gelu_grad));
    grad.w2.noalias() = g_z2 * h1.transpose();
    grad.b2 = g_z2.rowwise().sum();
    const Eigen::MatrixXd g_z1 = (p.w2.transpose() * g_z2).cwiseProduct(z1.unaryExpr(&detail::gelu_grad));
    grad.w1.noalias() = g_z1 * x.transpose();
    grad.b1 = g_z1.rowwise().sum();

    const double t = static_cast<double>(epoch + 1);
    const double lr =
        opt.lr_min + 0.5 * (opt.lr - opt.lr_min) * (1.0 + std::cos(std::numbers::pi * epoch / static_cast<double>(opt.epochs)));
    const double c1 = 1.0 - std::pow(opt.beta1, t);
    const double c2 = 1.0 - std::pow(opt.beta2, t);
    p.for_each(grad, m1, m2, [&](auto& w, auto& g, auto& mm, auto& vv) {
      mm = opt.beta1 * mm + (1.0 - opt.beta1) * g;
      vv = opt.beta2 * vv + (1.0 - opt.beta2) * g.cwiseAbs2();
      w *= 1.0 - lr * opt.weight_decay;
      w.array() -= lr * (mm.array() / c1) / ((vv.array() / c2).sqrt() + opt.eps);
    });
  }
  fit.params = std::move(best);
  return fit;
}

inline SurfaceModel as_surface(const MlpFit& f, std::span<const LossPoint> pts) {
  SurfaceModel m;
  m.kind = SurfaceKind::kMlp;
  auto shared = std::make_shared<const MlpFit>(f);
  m.fn = [shared](double n, double d) { return shared->predict(n, d); };
  m.norm = f.norm;
  m.set_range(pts);
  m.diagnostics = {{"width", f.options.width},
                   {"best_loss", f.best_loss},
                   {"best_epoch", f.best_epoch},
                   {"epochs_run", f.epochs_run},
                   {"stopped_early", f.stopped_early ? 1.0 : 0.0}};
  return m;
}

}  // namespace slab

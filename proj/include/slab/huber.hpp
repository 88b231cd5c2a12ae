#pragma once

#include <cmath>

namespace slab {

// rho(r) = r^2/2 inside the cutoff, delta * (|r| - delta/2) outside.
inline double huber_rho(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

// IRLS weight psi(r)/r = min(1, delta/|r|).
inline double huber_weight(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 1.0 : delta / a;
}

}  // namespace slab

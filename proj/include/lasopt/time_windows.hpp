#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

namespace lasopt {

// Uniform time grid t_n = n*T/nt, n = 0..nt.
struct TimeGrid {
  int nt{0};
  double T{0.0};
  double dt() const { return T / nt; }
  double node(int n) const { return n * dt(); }
};

// Quadrature weights for integrals of nodal time series over a window
// [a,b] in [0,T]: exact integration of the piecewise-linear interpolant,
// with the terminal node's mass reflected onto node nt-1. The reflection
// keeps every state-dependent time integral independent of the final slice,
// which makes the discrete adjoint vanish at t = T exactly; it perturbs the
// quadrature by one one-sided panel, at the same order as the trapezoid
// error. Weights are C^1 in (a,b), so window costs are differentiable in tau.
inline Eigen::VectorXd window_weights(const TimeGrid& tg, double a, double b) {
  if (b < a) std::swap(a, b);
  a = std::max(a, 0.0);
  b = std::min(b, tg.T);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(tg.nt + 1);
  const double dt = tg.dt();
  for (int n = 0; n < tg.nt; ++n) {
    const double t0 = tg.node(n), t1 = tg.node(n + 1);
    const double lo = std::max(a, t0), hi = std::min(b, t1);
    if (hi <= lo) continue;
    // hat-function integrals over [lo,hi]
    const double mid = 0.5 * (lo + hi), len = hi - lo;
    w[n] += len * (t1 - mid) / dt;
    w[n + 1] += len * (mid - t0) / dt;
  }
  w[tg.nt - 1] += w[tg.nt];
  w[tg.nt] = 0.0;
  return w;
}

// Weights for the full horizon [0,T].
inline Eigen::VectorXd horizon_weights(const TimeGrid& tg) {
  return window_weights(tg, 0.0, tg.T);
}

// Plain trapezoid weights; used for pairings that do not feed the adjoint
// (path penalty, multiplier duality products).
inline Eigen::VectorXd trapezoid_weights(const TimeGrid& tg) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(tg.nt + 1, tg.dt());
  w[0] *= 0.5;
  w[tg.nt] *= 0.5;
  return w;
}

// Interpolation coefficients of the reflected interpolant at time s: linear
// between nodes, constant on the last panel. This is the exact derivative of
// window_weights with respect to the window endpoints.
struct SliceCoeffs {
  int i0{0}, i1{0};
  double c0{1.0}, c1{0.0};
};

inline SliceCoeffs slice_coeffs(const TimeGrid& tg, double s) {
  SliceCoeffs sc;
  const double dt = tg.dt();
  if (s <= 0.0) return sc;  // i0 = 0
  if (s >= tg.node(tg.nt - 1)) {
    sc.i0 = sc.i1 = tg.nt - 1;
    return sc;
  }
  int n = std::min(static_cast<int>(std::floor(s / dt)), tg.nt - 2);
  double frac = (s - tg.node(n)) / dt;
  sc.i0 = n;
  sc.i1 = n + 1;
  sc.c0 = 1.0 - frac;
  sc.c1 = frac;
  return sc;
}

// One-sided slope of the reflected interpolant at s: the slope of the panel
// containing s (forward difference at nodes), zero on the flattened last
// panel.
struct SlopeCoeffs {
  int i0{0}, i1{0};
  double c{0.0};  // slope = c * (q[i1] - q[i0])
};

inline SlopeCoeffs slope_coeffs(const TimeGrid& tg, double s) {
  SlopeCoeffs sl;
  if (s >= tg.node(tg.nt - 1)) return sl;  // flattened panel
  int n = std::clamp(static_cast<int>(std::floor(s / tg.dt())), 0, tg.nt - 2);
  sl.i0 = n;
  sl.i1 = n + 1;
  sl.c = 1.0 / tg.dt();
  return sl;
}

// Interpolated value of a nodal scalar series.
inline double interp_series(const TimeGrid& tg, const Eigen::VectorXd& q, double s) {
  SliceCoeffs sc = slice_coeffs(tg, s);
  return sc.c0 * q[sc.i0] + sc.c1 * q[sc.i1];
}

inline double slope_series(const TimeGrid& tg, const Eigen::VectorXd& q, double s) {
  SlopeCoeffs sl = slope_coeffs(tg, s);
  return sl.c * (q[sl.i1] - q[sl.i0]);
}

}  // namespace lasopt

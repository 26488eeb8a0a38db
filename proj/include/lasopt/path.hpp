#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "lasopt/level_set.hpp"
#include "lasopt/types.hpp"

namespace lasopt {

// Time-sampled planar laser trajectory on the uniform grid t_i = i*T/nt.
// The continuous path is the piecewise-linear interpolant of the samples.
struct LaserPath {
  std::vector<Vec2> values;

  LaserPath() = default;
  explicit LaserPath(std::vector<Vec2> v) : values(std::move(v)) {}

  int nt() const { return static_cast<int>(values.size()) - 1; }
  int nodes() const { return static_cast<int>(values.size()); }
  const Vec2& operator[](int i) const { return values[static_cast<size_t>(i)]; }
  Vec2& operator[](int i) { return values[static_cast<size_t>(i)]; }

  static LaserPath constant(const Vec2& p, int nt) {
    return LaserPath(std::vector<Vec2>(static_cast<size_t>(nt) + 1, p));
  }

  static LaserPath circle(const Vec2& center, double radius, int nt,
                          double turns = 1.0) {
    std::vector<Vec2> v(static_cast<size_t>(nt) + 1);
    for (int i = 0; i <= nt; ++i) {
      double a = 2.0 * M_PI * turns * i / nt;
      v[static_cast<size_t>(i)] =
          center + radius * Vec2(std::cos(a), std::sin(a));
    }
    return LaserPath(std::move(v));
  }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd x(2 * nodes());
    for (int i = 0; i < nodes(); ++i) x.segment<2>(2 * i) = values[static_cast<size_t>(i)];
    return x;
  }

  static LaserPath unflatten(const Eigen::VectorXd& x) {
    if (x.size() % 2 != 0) throw std::invalid_argument("path vector length must be even");
    std::vector<Vec2> v(static_cast<size_t>(x.size() / 2));
    for (int i = 0; i < x.size() / 2; ++i) v[static_cast<size_t>(i)] = x.segment<2>(2 * i);
    return LaserPath(std::move(v));
  }

  bool all_finite() const {
    for (const auto& p : values)
      if (!std::isfinite(p.x()) || !std::isfinite(p.y())) return false;
    return true;
  }
};

inline void require_same_nodes(const LaserPath& a, const LaserPath& b) {
  if (a.nodes() != b.nodes())
    throw std::invalid_argument("path node counts differ: " +
                                std::to_string(a.nodes()) + " vs " +
                                std::to_string(b.nodes()));
}

// Exact squared H^1 seminorm of the piecewise-linear interpolant:
// sum_i |gamma_{i+1}-gamma_i|^2 / dt.
inline double h1_seminorm_sq(const LaserPath& path, double T) {
  const int nt = path.nt();
  if (nt < 1) return 0.0;
  const double dt = T / nt;
  double s = 0.0;
  for (int i = 0; i < nt; ++i) s += (path[i + 1] - path[i]).squaredNorm() / dt;
  return s;
}

// (g o gamma)(t_i); the path is feasible iff every entry is <= 0.
inline Eigen::VectorXd constraint_trace(const LaserPath& path,
                                        const LevelSetRegion& region) {
  Eigen::VectorXd out(path.nodes());
  for (int i = 0; i < path.nodes(); ++i) out[i] = region.value(path[i]);
  return out;
}

// Nodal G'(gamma) dgamma = grad g(gamma(t_i)) . dgamma(t_i).
inline Eigen::VectorXd constraint_jacobian_apply(const LaserPath& path,
                                                 const LevelSetRegion& region,
                                                 const LaserPath& dpath) {
  require_same_nodes(path, dpath);
  Eigen::VectorXd out(path.nodes());
  for (int i = 0; i < path.nodes(); ++i)
    out[i] = region.gradient(path[i]).dot(dpath[i]);
  return out;
}

// Nodal D^2G contraction dgamma1^T hess g(gamma(t_i)) dgamma2.
inline Eigen::VectorXd constraint_hessian_form(const LaserPath& path,
                                               const LevelSetRegion& region,
                                               const LaserPath& dpath1,
                                               const LaserPath& dpath2) {
  require_same_nodes(path, dpath1);
  require_same_nodes(path, dpath2);
  Eigen::VectorXd out(path.nodes());
  for (int i = 0; i < path.nodes(); ++i)
    out[i] = dpath1[i].dot(region.hessian(path[i]) * dpath2[i]);
  return out;
}

}  // namespace lasopt

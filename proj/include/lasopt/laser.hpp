#pragma once

#include <cmath>
#include <iostream>

#include <Eigen/Core>

#include "lasopt/config.hpp"
#include "lasopt/grid.hpp"
#include "lasopt/path.hpp"

namespace lasopt {

// Values on TOP-face nodes for each time step (W m^-2); row r corresponds to
// grid.top_nodes()[r], column n to time t_n.
struct BoundarySourceTrace {
  Eigen::MatrixXd values;
  bool under_resolved{false};

  int steps() const { return static_cast<int>(values.cols()) - 1; }
};

namespace detail {
inline void check_time_match(const SlabGrid& grid, const LaserPath& path) {
  if (path.nt() != grid.nt())
    throw std::invalid_argument("path has " + std::to_string(path.nt()) +
                                " steps, grid expects " + std::to_string(grid.nt()));
}
}  // namespace detail

// Gaussian beam source alpha * 2P/(pi R^2) * exp(-2|x-gamma(t)|^2/R^2) on the
// top face.
inline BoundarySourceTrace source_field(const ModelConfig& cfg,
                                        const SlabGrid& grid,
                                        const LaserPath& path) {
  detail::check_time_match(grid, path);
  const auto& tops = grid.top_nodes();
  BoundarySourceTrace out;
  out.values.resize(static_cast<Eigen::Index>(tops.size()), grid.nt() + 1);
  const double peak = cfg.source_peak();
  const double inv_R2 = 1.0 / (cfg.beam_radius * cfg.beam_radius);
  for (int n = 0; n <= grid.nt(); ++n) {
    const Vec2 c = path[n];
    for (size_t r = 0; r < tops.size(); ++r) {
      const Vec2 x = grid.top_coord(tops[r]);
      out.values(static_cast<Eigen::Index>(r), n) =
          peak * std::exp(-2.0 * (x - c).squaredNorm() * inv_R2);
    }
  }
  if (cfg.beam_radius < 2.0 * std::min(grid.hx(), grid.hy())) {
    out.under_resolved = true;
    std::cerr << "warning: beam radius " << cfg.beam_radius
              << " under-resolved by grid spacing (" << grid.hx() << ", "
              << grid.hy() << ")\n";
  }
  return out;
}

// Robin datum of the first state sensitivity:
// c_R * e^{w(gamma)} (x - gamma(t)) . dgamma(t), with c_R = 8 alpha P/(pi R^4).
inline BoundarySourceTrace linearized_source(const ModelConfig& cfg,
                                             const SlabGrid& grid,
                                             const LaserPath& path,
                                             const LaserPath& dpath) {
  detail::check_time_match(grid, path);
  require_same_nodes(path, dpath);
  const auto& tops = grid.top_nodes();
  BoundarySourceTrace out;
  out.values.resize(static_cast<Eigen::Index>(tops.size()), grid.nt() + 1);
  const double cR = cfg.c_R();
  const double inv_R2 = 1.0 / (cfg.beam_radius * cfg.beam_radius);
  for (int n = 0; n <= grid.nt(); ++n) {
    const Vec2 c = path[n];
    const Vec2 d = dpath[n];
    for (size_t r = 0; r < tops.size(); ++r) {
      const Vec2 rel = grid.top_coord(tops[r]) - c;
      out.values(static_cast<Eigen::Index>(r), n) =
          cR * std::exp(-2.0 * rel.squaredNorm() * inv_R2) * rel.dot(d);
    }
  }
  return out;
}

// Robin datum of the second state sensitivity, without the 8 alpha P/(pi R^4)
// factor (the PDE solve applies it):
// e^{w(gamma)} ((4/R^2)(x-gamma . d1)(x-gamma . d2) - d1 . d2).
inline BoundarySourceTrace second_source(const ModelConfig& cfg,
                                         const SlabGrid& grid,
                                         const LaserPath& path,
                                         const LaserPath& dpath1,
                                         const LaserPath& dpath2) {
  detail::check_time_match(grid, path);
  require_same_nodes(path, dpath1);
  require_same_nodes(path, dpath2);
  const auto& tops = grid.top_nodes();
  BoundarySourceTrace out;
  out.values.resize(static_cast<Eigen::Index>(tops.size()), grid.nt() + 1);
  const double inv_R2 = 1.0 / (cfg.beam_radius * cfg.beam_radius);
  for (int n = 0; n <= grid.nt(); ++n) {
    const Vec2 c = path[n];
    const Vec2 d1 = dpath1[n];
    const Vec2 d2 = dpath2[n];
    for (size_t r = 0; r < tops.size(); ++r) {
      const Vec2 rel = grid.top_coord(tops[r]) - c;
      // the dot products are multiplied first so swapping d1 and d2 is
      // bitwise exact
      out.values(static_cast<Eigen::Index>(r), n) =
          std::exp(-2.0 * rel.squaredNorm() * inv_R2) *
          (4.0 * inv_R2 * (rel.dot(d1) * rel.dot(d2)) - d1.dot(d2));
    }
  }
  return out;
}

}  // namespace lasopt

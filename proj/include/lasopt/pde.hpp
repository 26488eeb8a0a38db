#pragma once

#include <cmath>
#include <optional>

#include <Eigen/Core>

#include "lasopt/config.hpp"
#include "lasopt/grid.hpp"
#include "lasopt/heat_operator.hpp"
#include "lasopt/laser.hpp"
#include "lasopt/path.hpp"
#include "lasopt/time_windows.hpp"

namespace lasopt {

// Nodal values for time steps 0..nt; column n is the slice at t_n.
struct SpaceTimeField {
  Eigen::MatrixXd values;

  int steps() const { return static_cast<int>(values.cols()) - 1; }
  Eigen::VectorXd slice(int n) const { return values.col(n); }
  bool all_finite() const { return values.allFinite(); }

  double l2_Q_norm(const SlabGrid& grid, double T) const {
    // discrete L^2(Q) norm with volume and trapezoid time weights
    TimeGrid tg{grid.nt(), T};
    Eigen::VectorXd tw = trapezoid_weights(tg);
    double s = 0.0;
    for (int n = 0; n <= grid.nt(); ++n)
      s += tw[n] * values.col(n).cwiseAbs2().dot(grid.volume_weights());
    return std::sqrt(s);
  }
};

inline TimeGrid time_grid(const ModelConfig& cfg, const SlabGrid& grid) {
  return TimeGrid{grid.nt(), cfg.T_final};
}

// Evaluate a field descriptor at every grid node (profiles depend on the
// planar coordinates only).
inline Eigen::VectorXd nodal_field(const ModelConfig& cfg, const SlabGrid& grid,
                                   const FieldSpec& spec) {
  Eigen::VectorXd out(grid.node_count());
  for (int id = 0; id < grid.node_count(); ++id)
    out[id] = spec.eval(grid.top_coord(id), cfg.region);
  return out;
}

namespace detail {

// Per-step load vector: top-face source injection plus the bottom Robin datum.
inline Eigen::VectorXd load_vector(const ModelConfig& cfg, const SlabGrid& grid,
                                   const BoundarySourceTrace* src, int n,
                                   const Eigen::VectorXd* yB) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(grid.node_count());
  if (src) {
    const auto& tops = grid.top_nodes();
    for (size_t r = 0; r < tops.size(); ++r)
      f[tops[r]] += grid.top_weights()[tops[r]] *
                    src->values(static_cast<Eigen::Index>(r), n);
  }
  if (yB) {
    for (int id : grid.bottom_nodes())
      f[id] += cfg.h_conv * grid.bottom_weights()[id] * (*yB)[id];
  }
  return f;
}

inline SpaceTimeField march(const ModelConfig& cfg, const SlabGrid& grid,
                            const DiscreteHeatOperator& op,
                            const Eigen::VectorXd& y0,
                            const BoundarySourceTrace* src,
                            const Eigen::VectorXd* yB) {
  const int nt = grid.nt();
  SpaceTimeField out;
  out.values.resize(grid.node_count(), nt + 1);
  out.values.col(0) = y0;
  const double th = op.theta();
  Eigen::VectorXd f_prev = load_vector(cfg, grid, src, 0, yB);
  for (int n = 0; n < nt; ++n) {
    Eigen::VectorXd f_next = load_vector(cfg, grid, src, n + 1, yB);
    out.values.col(n + 1) =
        op.step(out.values.col(n), th * f_next + (1.0 - th) * f_prev);
    f_prev.swap(f_next);
  }
  return out;
}

}  // namespace detail

// Temperature field driven by the Gaussian source along `path`, with the
// Robin data of the state system.
inline SpaceTimeField forward_solve(const ModelConfig& cfg, const SlabGrid& grid,
                                    const LaserPath& path,
                                    const DiscreteHeatOperator* op = nullptr) {
  std::optional<DiscreteHeatOperator> local;
  if (!op) local.emplace(cfg, grid);
  const DiscreteHeatOperator& use = op ? *op : *local;
  BoundarySourceTrace src = source_field(cfg, grid, path);
  Eigen::VectorXd y0 = nodal_field(cfg, grid, cfg.y0_init);
  Eigen::VectorXd yB = nodal_field(cfg, grid, cfg.yB_bottom);
  return detail::march(cfg, grid, use, y0, &src, &yB);
}

// The linear map sigma: Robin datum on the top face -> field with zero
// initial condition and homogeneous data elsewhere.
inline SpaceTimeField sigma_solve(const ModelConfig& cfg, const SlabGrid& grid,
                                  const BoundarySourceTrace& datum,
                                  const DiscreteHeatOperator& op) {
  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(grid.node_count());
  return detail::march(cfg, grid, op, y0, &datum, nullptr);
}

// First directional state sensitivity DS(gamma) dgamma.
inline SpaceTimeField linearized_solve(const ModelConfig& cfg, const SlabGrid& grid,
                                       const LaserPath& path, const LaserPath& dpath,
                                       const DiscreteHeatOperator* op = nullptr) {
  BoundarySourceTrace dv = linearized_source(cfg, grid, path, dpath);
  if (op) return sigma_solve(cfg, grid, dv, *op);
  DiscreteHeatOperator local_op(cfg, grid);
  return sigma_solve(cfg, grid, dv, local_op);
}

// Second directional state sensitivity D^2 S(gamma)[d1, d2].
inline SpaceTimeField second_state_solve(const ModelConfig& cfg, const SlabGrid& grid,
                                         const LaserPath& path,
                                         const LaserPath& dpath1,
                                         const LaserPath& dpath2,
                                         const DiscreteHeatOperator* op = nullptr) {
  BoundarySourceTrace ss = second_source(cfg, grid, path, dpath1, dpath2);
  SpaceTimeField y;
  if (op) {
    y = sigma_solve(cfg, grid, ss, *op);
  } else {
    DiscreteHeatOperator local_op(cfg, grid);
    y = sigma_solve(cfg, grid, ss, local_op);
  }
  y.values *= cfg.c_R();
  return y;
}

// Time weights and nodal targets of the tracking terms at a given tau.
struct TrackingQuadrature {
  TimeGrid tg;
  Eigen::VectorXd w_full, w_Q, w_Om;
  Eigen::VectorXd yQ, yOm;
  double a_Q, b_Q, a_Om, b_Om;
};

inline TrackingQuadrature tracking_quadrature(const ModelConfig& cfg,
                                              const SlabGrid& grid, double tau) {
  require_tau_in_range(cfg, tau);
  TrackingQuadrature q;
  q.tg = time_grid(cfg, grid);
  const double r = cfg.r_window;
  q.a_Q = 0.5 * tau - 0.5 * r;
  q.b_Q = 0.5 * tau + 0.5 * r;
  q.a_Om = tau - r;
  q.b_Om = tau;
  q.w_full = horizon_weights(q.tg);
  q.w_Q = window_weights(q.tg, q.a_Q, q.b_Q);
  q.w_Om = window_weights(q.tg, q.a_Om, q.b_Om);
  q.yQ = nodal_field(cfg, grid, cfg.yQ_target);
  q.yOm = nodal_field(cfg, grid, cfg.yOmega_target);
  return q;
}

// Derivative of the tracking + gradient-energy cost with respect to the state
// slice at t_n.
inline Eigen::VectorXd cost_state_gradient_slice(const ModelConfig& cfg,
                                                 const SlabGrid& grid,
                                                 const TrackingQuadrature& q,
                                                 const SpaceTimeField& state,
                                                 int n) {
  const double r = cfg.r_window;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(grid.node_count());
  if (q.w_full[n] != 0.0)
    g.noalias() += q.w_full[n] * (grid.stiffness() * state.values.col(n));
  if (q.w_Q[n] != 0.0)
    g.noalias() += (cfg.lambda_Q / r) * q.w_Q[n] *
                   grid.volume_weights().cwiseProduct(state.values.col(n) - q.yQ);
  if (q.w_Om[n] != 0.0)
    g.noalias() += (cfg.lambda_Omega / r) * q.w_Om[n] *
                   grid.volume_weights().cwiseProduct(state.values.col(n) - q.yOm);
  return g;
}

// Directional derivative of the tracking + gradient-energy cost along a state
// perturbation v (the sensitivity route of the duality identity).
inline double cost_state_derivative(const ModelConfig& cfg, const SlabGrid& grid,
                                    double tau, const SpaceTimeField& state,
                                    const SpaceTimeField& v) {
  TrackingQuadrature q = tracking_quadrature(cfg, grid, tau);
  double s = 0.0;
  for (int n = 0; n <= grid.nt(); ++n)
    s += cost_state_gradient_slice(cfg, grid, q, state, n).dot(v.values.col(n));
  return s;
}

// Discrete adjoint: the exact transpose of the theta scheme, marched backward
// from p(T) = 0, with step right-hand sides assembled from the stiffness
// action on the state and the window-restricted tracking misfits. The stored
// slices are the theta-combined step multipliers divided by dt, so the
// boundary pairing with dt time weights reproduces cost derivatives exactly.
inline SpaceTimeField adjoint_solve(const ModelConfig& cfg, const SlabGrid& grid,
                                    const LaserPath& path, double tau,
                                    const SpaceTimeField& state,
                                    const DiscreteHeatOperator* op = nullptr) {
  detail::check_time_match(grid, path);
  require_tau_in_range(cfg, tau);
  std::optional<DiscreteHeatOperator> local;
  if (!op) local.emplace(cfg, grid);
  const DiscreteHeatOperator& use = op ? *op : *local;
  TrackingQuadrature q = tracking_quadrature(cfg, grid, tau);
  const int nt = grid.nt();
  const double th = use.theta();
  const double dt = use.dt();

  SpaceTimeField out;
  out.values.setZero(grid.node_count(), nt + 1);
  // terminal multiplier vanishes because no time quadrature weights the final
  // slice; p_next tracks the step multiplier p^{n+1}
  Eigen::VectorXd p_next = Eigen::VectorXd::Zero(grid.node_count());
  for (int n = nt - 1; n >= 1; --n) {
    Eigen::VectorXd g = cost_state_gradient_slice(cfg, grid, q, state, n);
    Eigen::VectorXd p = use.solve_implicit(use.apply_explicit(p_next) + g);
    out.values.col(n) = (th * p + (1.0 - th) * p_next) / dt;
    p_next.swap(p);
  }
  out.values.col(0) = (1.0 - th) / dt * p_next;
  return out;
}

// Time-weighted boundary pairing of a top-face trace with the stored adjoint,
// <trace, p> over Sigma_1.
inline double boundary_pairing(const SlabGrid& grid, double T,
                               const BoundarySourceTrace& trace,
                               const SpaceTimeField& adjoint) {
  const auto& tops = grid.top_nodes();
  const double dt = T / grid.nt();
  double s = 0.0;
  for (int n = 0; n <= grid.nt(); ++n) {
    double slice = 0.0;
    for (size_t r = 0; r < tops.size(); ++r)
      slice += grid.top_weights()[tops[r]] *
               trace.values(static_cast<Eigen::Index>(r), n) *
               adjoint.values(tops[r], n);
    s += dt * slice;
  }
  return s;
}

}  // namespace lasopt

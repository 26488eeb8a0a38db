#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "lasopt/config.hpp"
#include "lasopt/grid.hpp"
#include "lasopt/heat_operator.hpp"
#include "lasopt/laser.hpp"
#include "lasopt/multiplier.hpp"
#include "lasopt/path.hpp"
#include "lasopt/pde.hpp"
#include "lasopt/time_windows.hpp"

namespace lasopt {

struct CostBreakdown {
  double tracking_Q{0.0};
  double tracking_Omega{0.0};
  double gradient_energy{0.0};
  double path_seminorm_term{0.0};
  double time_term{0.0};
  double total{0.0};
};

namespace detail {
inline Eigen::VectorXd tracking_misfit_series(const SlabGrid& grid,
                                              const SpaceTimeField& state,
                                              const Eigen::VectorXd& target) {
  Eigen::VectorXd q(grid.nt() + 1);
  for (int n = 0; n <= grid.nt(); ++n)
    q[n] = (state.values.col(n) - target).cwiseAbs2().dot(grid.volume_weights());
  return q;
}

inline Eigen::VectorXd dirichlet_series(const SlabGrid& grid,
                                        const SpaceTimeField& state) {
  Eigen::VectorXd e(grid.nt() + 1);
  for (int n = 0; n <= grid.nt(); ++n) e[n] = grid.dirichlet_energy(state.values.col(n));
  return e;
}
}  // namespace detail

inline CostBreakdown eval_cost(const ModelConfig& cfg, const SlabGrid& grid,
                               const SpaceTimeField& state, const LaserPath& path,
                               double tau) {
  TrackingQuadrature q = tracking_quadrature(cfg, grid, tau);
  const double r = cfg.r_window;
  CostBreakdown out;
  out.tracking_Q =
      0.5 * cfg.lambda_Q / r *
      q.w_Q.dot(detail::tracking_misfit_series(grid, state, q.yQ));
  out.tracking_Omega =
      0.5 * cfg.lambda_Omega / r *
      q.w_Om.dot(detail::tracking_misfit_series(grid, state, q.yOm));
  out.gradient_energy = 0.5 * q.w_full.dot(detail::dirichlet_series(grid, state));
  out.path_seminorm_term = 0.5 * cfg.lambda_gamma * h1_seminorm_sq(path, cfg.T_final);
  out.time_term = cfg.beta_T * tau;
  out.total = out.tracking_Q + out.tracking_Omega + out.gradient_energy +
              out.path_seminorm_term + out.time_term;
  return out;
}

inline double reduced_cost(const ModelConfig& cfg, const SlabGrid& grid,
                           const LaserPath& path, double tau,
                           const DiscreteHeatOperator* op = nullptr) {
  SpaceTimeField y = forward_solve(cfg, grid, path, op);
  return eval_cost(cfg, grid, y, path, tau).total;
}

// Dual representation of a path-space derivative: a time-weighted planar
// kernel plus the seminorm velocity term. The action is what line searches
// and stationarity checks consume.
struct PathGradient {
  std::vector<Vec2> kernel;       // P(t_i)
  std::vector<Vec2> velocity;     // lambda_gamma * gamma' per interval
  Eigen::VectorXd node_weights;   // kernel quadrature weights w_i

  double action(const LaserPath& dpath) const {
    const int nodes = static_cast<int>(kernel.size());
    if (dpath.nodes() != nodes)
      throw std::invalid_argument("direction node count mismatch in PathGradient");
    double s = 0.0;
    for (int i = 0; i < nodes; ++i) s += node_weights[i] * kernel[static_cast<size_t>(i)].dot(dpath[i]);
    for (size_t i = 0; i + 1 < static_cast<size_t>(nodes); ++i)
      s += velocity[i].dot(dpath[static_cast<int>(i) + 1] - dpath[static_cast<int>(i)]);
    return s;
  }

  // Euclidean gradient with respect to the stacked nodal coordinates.
  Eigen::VectorXd nodal() const {
    const int nodes = static_cast<int>(kernel.size());
    Eigen::VectorXd g(2 * nodes);
    for (int i = 0; i < nodes; ++i) {
      Vec2 v = node_weights[i] * kernel[static_cast<size_t>(i)];
      if (i > 0) v += velocity[static_cast<size_t>(i) - 1];
      if (i + 1 < nodes) v -= velocity[static_cast<size_t>(i)];
      g.segment<2>(2 * i) = v;
    }
    return g;
  }
};

// Boundary-integral kernel of D_gamma J: P(t_i) = sum over top nodes of
// face-weight * c_R e^{w} (x - gamma) * p, paired with dt time weights, plus
// the seminorm velocity term. Exact for the discrete scheme because the
// stored adjoint carries the step multipliers.
inline PathGradient grad_gamma(const ModelConfig& cfg, const SlabGrid& grid,
                               const LaserPath& path, double tau,
                               const SpaceTimeField& state,
                               const SpaceTimeField& adjoint) {
  (void)state;
  (void)tau;
  detail::check_time_match(grid, path);
  if (adjoint.values.cols() != grid.nt() + 1)
    throw std::invalid_argument("adjoint time step count mismatch");
  const int nt = grid.nt();
  const double dt = cfg.T_final / nt;
  const double cR = cfg.c_R();
  const double inv_R2 = 1.0 / (cfg.beam_radius * cfg.beam_radius);
  const auto& tops = grid.top_nodes();

  PathGradient g;
  g.kernel.resize(static_cast<size_t>(nt) + 1);
  g.velocity.resize(static_cast<size_t>(nt));
  g.node_weights = Eigen::VectorXd::Constant(nt + 1, dt);
  for (int n = 0; n <= nt; ++n) {
    Vec2 P = Vec2::Zero();
    const Vec2 c = path[n];
    for (size_t rix = 0; rix < tops.size(); ++rix) {
      const int id = tops[rix];
      const Vec2 rel = grid.top_coord(id) - c;
      P += grid.top_weights()[id] * cR *
           std::exp(-2.0 * rel.squaredNorm() * inv_R2) * adjoint.values(id, n) * rel;
    }
    g.kernel[static_cast<size_t>(n)] = P;
  }
  for (int i = 0; i < nt; ++i)
    g.velocity[static_cast<size_t>(i)] = cfg.lambda_gamma * (path[i + 1] - path[i]) / dt;
  return g;
}

// D_tau J from window-endpoint slices of the state:
// (lambda_Q/4r)[q_Q(tau/2+r/2) - q_Q(tau/2-r/2)]
// + (lambda_Omega/2r)[q_Om(tau) - q_Om(tau-r)] + beta_T,
// with slices interpolated linearly in time.
inline double grad_tau(const ModelConfig& cfg, const SlabGrid& grid,
                       const LaserPath& path, double tau,
                       const SpaceTimeField& state) {
  (void)path;
  TrackingQuadrature q = tracking_quadrature(cfg, grid, tau);
  const double r = cfg.r_window;
  Eigen::VectorXd qQ = detail::tracking_misfit_series(grid, state, q.yQ);
  Eigen::VectorXd qOm = detail::tracking_misfit_series(grid, state, q.yOm);
  return 0.25 * cfg.lambda_Q / r *
             (interp_series(q.tg, qQ, q.b_Q) - interp_series(q.tg, qQ, q.a_Q)) +
         0.5 * cfg.lambda_Omega / r *
             (interp_series(q.tg, qOm, q.b_Om) - interp_series(q.tg, qOm, q.a_Om)) +
         cfg.beta_T;
}

// Penalty J(gamma) = int [g(gamma)]_+^2 dt by trapezoid quadrature.
inline double penalty_value(const LaserPath& path, const LevelSetRegion& region,
                            double T) {
  TimeGrid tg{path.nt(), T};
  Eigen::VectorXd w = trapezoid_weights(tg);
  double s = 0.0;
  for (int i = 0; i <= path.nt(); ++i) {
    double gp = std::max(region.value(path[i]), 0.0);
    s += w[i] * gp * gp;
  }
  return s;
}

// Exact gradient of penalty_value: 2 [g(gamma)]_+ grad g(gamma) nodally.
inline PathGradient penalty_gradient(const LaserPath& path,
                                     const LevelSetRegion& region, double T) {
  TimeGrid tg{path.nt(), T};
  PathGradient g;
  g.kernel.resize(static_cast<size_t>(path.nodes()));
  g.velocity.assign(static_cast<size_t>(path.nt()), Vec2::Zero());
  g.node_weights = trapezoid_weights(tg);
  for (int i = 0; i <= path.nt(); ++i) {
    double gp = std::max(region.value(path[i]), 0.0);
    g.kernel[static_cast<size_t>(i)] =
        gp > 0.0 ? Vec2(2.0 * gp * region.gradient(path[i])) : Vec2(Vec2::Zero());
  }
  return g;
}

// Lagrangian value J_r(gamma,tau) + <lambda, g o gamma> + mu tau, with the
// multiplier pairing on trapezoid weights.
inline double lagrangian_value(const ModelConfig& cfg, const SlabGrid& grid,
                               const LaserPath& path, double tau,
                               const MultiplierEstimate& mult,
                               const DiscreteHeatOperator* op = nullptr) {
  TimeGrid tg = time_grid(cfg, grid);
  Eigen::VectorXd w = trapezoid_weights(tg);
  double pairing = 0.0;
  for (int i = 0; i <= grid.nt(); ++i)
    pairing += w[i] * mult.lambda[i] * cfg.region.value(path[i]);
  return reduced_cost(cfg, grid, path, tau, op) + pairing + mult.mu * tau;
}

struct Direction {
  LaserPath dgamma;
  double dtau{0.0};

  static Direction path_only(LaserPath d) { return Direction{std::move(d), 0.0}; }
};

// Precomputed quantities for Hessian evaluations at a fixed (path, tau):
// state, adjoint, factorized operator and window data. One context per
// concurrent task.
class HessianContext {
 public:
  HessianContext(const ModelConfig& cfg, const SlabGrid& grid, LaserPath path,
                 double tau)
      : cfg_(&cfg),
        grid_(&grid),
        path_(std::move(path)),
        tau_(tau),
        op_(cfg, grid),
        quad_(tracking_quadrature(cfg, grid, tau)) {
    state_ = forward_solve(cfg, grid, path_, &op_);
    adjoint_ = adjoint_solve(cfg, grid, path_, tau_, state_, &op_);
    trap_w_ = trapezoid_weights(quad_.tg);
  }

  const ModelConfig& cfg() const { return *cfg_; }
  const SlabGrid& grid() const { return *grid_; }
  const LaserPath& path() const { return path_; }
  double tau() const { return tau_; }
  const DiscreteHeatOperator& op() const { return op_; }
  const SpaceTimeField& state() const { return state_; }
  const SpaceTimeField& adjoint() const { return adjoint_; }
  const TrackingQuadrature& quad() const { return quad_; }
  const Eigen::VectorXd& trapezoid() const { return trap_w_; }

  SpaceTimeField linearize(const LaserPath& dgamma) const {
    return linearized_solve(*cfg_, *grid_, path_, dgamma, &op_);
  }

  // d/dtau of the tracking pairing with a state perturbation v.
  double mixed_term(const SpaceTimeField& v) const {
    const double r = cfg_->r_window;
    Eigen::VectorXd mQ(grid_->nt() + 1), mOm(grid_->nt() + 1);
    for (int n = 0; n <= grid_->nt(); ++n) {
      Eigen::VectorXd dv = grid_->volume_weights().cwiseProduct(v.values.col(n));
      mQ[n] = (state_.values.col(n) - quad_.yQ).dot(dv);
      mOm[n] = (state_.values.col(n) - quad_.yOm).dot(dv);
    }
    return 0.5 * cfg_->lambda_Q / r *
               (interp_series(quad_.tg, mQ, quad_.b_Q) -
                interp_series(quad_.tg, mQ, quad_.a_Q)) +
           cfg_->lambda_Omega / r *
               (interp_series(quad_.tg, mOm, quad_.b_Om) -
                interp_series(quad_.tg, mOm, quad_.a_Om));
  }

  // d^2/dtau^2 of the tracking terms, via one-sided slopes of the misfit
  // series at the four window times.
  double tau_tau_term() const {
    const double r = cfg_->r_window;
    Eigen::VectorXd qQ = detail::tracking_misfit_series(*grid_, state_, quad_.yQ);
    Eigen::VectorXd qOm = detail::tracking_misfit_series(*grid_, state_, quad_.yOm);
    return 0.125 * cfg_->lambda_Q / r *
               (slope_series(quad_.tg, qQ, quad_.b_Q) -
                slope_series(quad_.tg, qQ, quad_.a_Q)) +
           0.5 * cfg_->lambda_Omega / r *
               (slope_series(quad_.tg, qOm, quad_.b_Om) -
                slope_series(quad_.tg, qOm, quad_.a_Om));
  }

 private:
  const ModelConfig* cfg_;
  const SlabGrid* grid_;
  LaserPath path_;
  double tau_;
  DiscreteHeatOperator op_;
  SpaceTimeField state_, adjoint_;
  TrackingQuadrature quad_;
  Eigen::VectorXd trap_w_;
};

// Lagrangian Hessian bilinear form
//   D^2 J_r[(d1),(d2)] + sum_i w_i lambda_i d1^T hess g(gamma_i) d2,
// assembled from two linearized solves, the second-source boundary pairing
// with the stored adjoint (no extra PDE solve), the mixed window-endpoint
// terms and the one-sided tau-tau term.
inline double lagrangian_hessian_form(const HessianContext& ctx,
                                      const MultiplierEstimate& mult,
                                      const Direction& d1, const Direction& d2,
                                      const SpaceTimeField* v1_cache = nullptr,
                                      const SpaceTimeField* v2_cache = nullptr) {
  const ModelConfig& cfg = ctx.cfg();
  const SlabGrid& grid = ctx.grid();
  const TrackingQuadrature& q = ctx.quad();
  require_same_nodes(ctx.path(), d1.dgamma);
  require_same_nodes(ctx.path(), d2.dgamma);
  if (mult.lambda.size() != grid.nt() + 1)
    throw std::invalid_argument("multiplier node count mismatch");
  const double r = cfg.r_window;
  const int nt = grid.nt();

  std::optional<SpaceTimeField> v1_own, v2_own;
  const SpaceTimeField* v1 = v1_cache;
  const SpaceTimeField* v2 = v2_cache;
  if (!v1) {
    v1_own = ctx.linearize(d1.dgamma);
    v1 = &*v1_own;
  }
  if (!v2) {
    if (&d1.dgamma == &d2.dgamma) {
      v2 = v1;
    } else {
      v2_own = ctx.linearize(d2.dgamma);
      v2 = &*v2_own;
    }
  }

  // (a) bilinear v-terms
  double t_vv = 0.0;
  for (int n = 0; n <= nt; ++n) {
    const Eigen::VectorXd a = v1->values.col(n);
    const Eigen::VectorXd b = v2->values.col(n);
    if (q.w_full[n] != 0.0) t_vv += q.w_full[n] * a.dot(grid.stiffness() * b);
    const double tr = (cfg.lambda_Q / r) * q.w_Q[n] + (cfg.lambda_Omega / r) * q.w_Om[n];
    if (tr != 0.0) t_vv += tr * a.dot(grid.volume_weights().cwiseProduct(b));
  }

  // (b) D^2 S pairing through the adjoint identity
  BoundarySourceTrace ss = second_source(cfg, grid, ctx.path(), d1.dgamma, d2.dgamma);
  double t_ss = cfg.c_R() * boundary_pairing(grid, cfg.T_final, ss, ctx.adjoint());

  // (c) mixed gamma-tau terms
  double t_mix = d2.dtau * ctx.mixed_term(*v1) + d1.dtau * ctx.mixed_term(*v2);

  // (d) tau-tau term
  double t_tt = d1.dtau * d2.dtau * ctx.tau_tau_term();

  // seminorm term
  const double dt = cfg.T_final / nt;
  double t_sem = 0.0;
  for (int i = 0; i < nt; ++i)
    t_sem += (d1.dgamma[i + 1] - d1.dgamma[i]).dot(d2.dgamma[i + 1] - d2.dgamma[i]) / dt;
  t_sem *= cfg.lambda_gamma;

  // multiplier curvature term
  double t_mult = 0.0;
  for (int i = 0; i <= nt; ++i)
    if (mult.lambda[i] != 0.0)
      t_mult += ctx.trapezoid()[i] * mult.lambda[i] *
                d1.dgamma[i].dot(cfg.region.hessian(ctx.path()[i]) * d2.dgamma[i]);

  return t_vv + t_ss + t_mix + t_tt + t_sem + t_mult;
}

inline double lagrangian_hessian_form(const ModelConfig& cfg, const SlabGrid& grid,
                                      const LaserPath& path, double tau,
                                      const MultiplierEstimate& mult,
                                      const Direction& d1, const Direction& d2) {
  HessianContext ctx(cfg, grid, path, tau);
  return lagrangian_hessian_form(ctx, mult, d1, d2);
}

}  // namespace lasopt

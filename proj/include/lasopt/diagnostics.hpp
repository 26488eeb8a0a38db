#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SparseCore>

#include "lasopt/config.hpp"
#include "lasopt/grid.hpp"
#include "lasopt/multiplier.hpp"
#include "lasopt/objective.hpp"
#include "lasopt/optimize.hpp"

namespace lasopt {

// ---------------------------------------------------------------------------
// First-order (KKT) residuals
// ---------------------------------------------------------------------------

struct KKTReport {
  double resid_gamma{0.0};     // |D_gamma J + G'(gamma)* lambda| (nodal l2)
  double resid_tau{0.0};       // |D_tau J + mu|
  double complementarity{0.0}; // |sum w_i lambda_i g(gamma_i)|
  double min_lambda{0.0};
  bool tau_cone_ok{false};
  double grad_tau_value{0.0};
  double lambda_l1{0.0};       // trapezoid-weighted
  double tol_gamma{0.0}, tol_tau{0.0}, tol_comp{0.0};
  bool pass{false};
};

// Nodal residual of D_gamma J + G'(gamma)* lambda; the multiplier pairs with
// trapezoid weights, matching the penalty gradient at lambda = 2 kappa [g]_+.
inline Eigen::VectorXd kkt_gamma_residual(const ModelConfig& cfg,
                                          const SlabGrid& grid,
                                          const LaserPath& path, double tau,
                                          const MultiplierEstimate& mult,
                                          const SpaceTimeField& state,
                                          const SpaceTimeField& adjoint) {
  Eigen::VectorXd r = grad_gamma(cfg, grid, path, tau, state, adjoint).nodal();
  Eigen::VectorXd w = trapezoid_weights(TimeGrid{grid.nt(), cfg.T_final});
  for (int i = 0; i <= grid.nt(); ++i)
    if (mult.lambda[i] != 0.0)
      r.segment<2>(2 * i) += w[i] * mult.lambda[i] * cfg.region.gradient(path[i]);
  return r;
}

inline KKTReport kkt_check(const ModelConfig& cfg, const SlabGrid& grid,
                           const LaserPath& path, double tau,
                           const MultiplierEstimate& mult, double tol) {
  if (mult.lambda.size() != grid.nt() + 1)
    throw std::invalid_argument("multiplier node count mismatch");
  DiscreteHeatOperator op(cfg, grid);
  SpaceTimeField state = forward_solve(cfg, grid, path, &op);
  SpaceTimeField adjoint = adjoint_solve(cfg, grid, path, tau, state, &op);

  KKTReport rep;
  rep.resid_gamma =
      kkt_gamma_residual(cfg, grid, path, tau, mult, state, adjoint).norm();
  rep.grad_tau_value = grad_tau(cfg, grid, path, tau, state);
  rep.resid_tau = std::abs(rep.grad_tau_value + mult.mu);

  Eigen::VectorXd w = trapezoid_weights(TimeGrid{grid.nt(), cfg.T_final});
  double comp = 0.0, l1 = 0.0;
  for (int i = 0; i <= grid.nt(); ++i) {
    comp += w[i] * mult.lambda[i] * cfg.region.value(path[i]);
    l1 += w[i] * std::abs(mult.lambda[i]);
  }
  rep.complementarity = std::abs(comp);
  rep.lambda_l1 = l1;
  rep.min_lambda = mult.lambda.minCoeff();

  // normal cone of [3r, T]: mu <= 0 at the left endpoint, mu >= 0 at the
  // right endpoint, mu = 0 inside
  const double edge = 1e-10 * cfg.T_final;
  if (tau <= cfg.tau_min() + edge)
    rep.tau_cone_ok = mult.mu <= tol;
  else if (tau >= cfg.tau_max() - edge)
    rep.tau_cone_ok = mult.mu >= -tol;
  else
    rep.tau_cone_ok = std::abs(mult.mu) <= tol;

  rep.tol_gamma = tol;
  rep.tol_tau = tol;
  rep.tol_comp = std::max(1e-6 * l1 * cfg.region.scale(), 1e-14);
  rep.pass = rep.resid_gamma <= rep.tol_gamma && rep.resid_tau <= rep.tol_tau &&
             rep.complementarity <= rep.tol_comp &&
             rep.min_lambda >= -1e-14 && rep.tau_cone_ok;
  return rep;
}

// ---------------------------------------------------------------------------
// Critical cone
// ---------------------------------------------------------------------------

enum class TauDirections { Free, NonNegative, NonPositive, Zero };

struct CriticalCone {
  std::vector<int> strongly_active;  // lambda_i > eps_mult
  std::vector<int> weakly_active;    // active with lambda_i <= eps_mult
  Eigen::MatrixXd basis;             // orthonormal equality-subspace basis
  std::vector<Eigen::VectorXd> generators;  // inequality directions on A0
  TauDirections tau_dirs{TauDirections::Free};
  bool includes_gradient_row{false};
  double eps_act{0.0}, eps_mult{0.0};

  int dim() const { return static_cast<int>(basis.rows()); }
};

inline CriticalCone critical_cone(const ModelConfig& cfg, const SlabGrid& grid,
                                  const LaserPath& path, double tau,
                                  const MultiplierEstimate& mult,
                                  double eps_act = -1.0, double eps_mult = -1.0,
                                  double grad_tol = 1e-6) {
  if (path.nodes() == 0) throw std::invalid_argument("empty path");
  const int nodes = path.nodes();
  const int n = 2 * nodes + 1;  // stacked path coordinates + tau
  CriticalCone cone;
  cone.eps_act = eps_act > 0.0 ? eps_act : 1e-6 * cfg.region.scale();
  cone.eps_mult = eps_mult > 0.0
                      ? eps_mult
                      : 1e-8 * std::max(mult.lambda.maxCoeff(), 0.0);

  for (int i = 0; i < nodes; ++i) {
    if (cfg.region.value(path[i]) < -cone.eps_act) continue;
    if (mult.lambda[i] > cone.eps_mult)
      cone.strongly_active.push_back(i);
    else
      cone.weakly_active.push_back(i);
  }

  const double edge = 1e-10 * cfg.T_final;
  const bool at_lo = tau <= cfg.tau_min() + edge;
  const bool at_hi = tau >= cfg.tau_max() - edge;
  const bool mu_active = std::abs(mult.mu) > cone.eps_mult;
  if (at_lo)
    cone.tau_dirs = mu_active ? TauDirections::Zero : TauDirections::NonNegative;
  else if (at_hi)
    cone.tau_dirs = mu_active ? TauDirections::Zero : TauDirections::NonPositive;

  // stationarity residual decides whether the J' = 0 row is needed
  DiscreteHeatOperator op(cfg, grid);
  SpaceTimeField state = forward_solve(cfg, grid, path, &op);
  SpaceTimeField adjoint = adjoint_solve(cfg, grid, path, tau, state, &op);
  Eigen::VectorXd kkt_res =
      kkt_gamma_residual(cfg, grid, path, tau, mult, state, adjoint);
  cone.includes_gradient_row = kkt_res.norm() > 10.0 * grad_tol;

  std::vector<Eigen::VectorXd> rows;
  for (int i : cone.strongly_active) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
    row.segment<2>(2 * i) = cfg.region.gradient(path[i]);
    rows.push_back(row);
  }
  if (at_lo || at_hi) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
    row[n - 1] = 1.0;  // subspace part of a half-line is {0}
    rows.push_back(row);
  }
  if (cone.includes_gradient_row) {
    Eigen::VectorXd row(n);
    row.head(2 * nodes) = grad_gamma(cfg, grid, path, tau, state, adjoint).nodal();
    row[n - 1] = grad_tau(cfg, grid, path, tau, state);
    rows.push_back(row);
  }

  if (rows.empty()) {
    cone.basis = Eigen::MatrixXd::Identity(n, n);
  } else {
    Eigen::MatrixXd At(n, static_cast<Eigen::Index>(rows.size()));
    for (size_t c = 0; c < rows.size(); ++c) At.col(static_cast<Eigen::Index>(c)) = rows[c];
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(At);
    qr.setThreshold(1e-12);
    const Eigen::Index rank = qr.rank();
    Eigen::MatrixXd Q = qr.householderQ();
    cone.basis = Q.rightCols(n - rank);
  }

  for (int i : cone.weakly_active) {
    Vec2 gr = cfg.region.gradient(path[i]);
    if (gr.norm() == 0.0) continue;
    Eigen::VectorXd gen = Eigen::VectorXd::Zero(n);
    gen.segment<2>(2 * i) = -gr.normalized();
    cone.generators.push_back(gen);
  }
  if (cone.tau_dirs == TauDirections::NonNegative ||
      cone.tau_dirs == TauDirections::NonPositive) {
    Eigen::VectorXd gen = Eigen::VectorXd::Zero(n);
    gen[n - 1] = cone.tau_dirs == TauDirections::NonNegative ? 1.0 : -1.0;
    cone.generators.push_back(gen);
  }
  return cone;
}

// ---------------------------------------------------------------------------
// Second-order check
// ---------------------------------------------------------------------------

// Euclidean representation of the Lagrangian Hessian applied to a direction:
// form(d, e) = hessian_vector_product(d) . e for every e. Costs one
// linearized solve, one transpose solve and one adjoint-weighted pairing.
inline Eigen::VectorXd hessian_vector_product(const HessianContext& ctx,
                                              const MultiplierEstimate& mult,
                                              const Eigen::VectorXd& d) {
  const ModelConfig& cfg = ctx.cfg();
  const SlabGrid& grid = ctx.grid();
  const TrackingQuadrature& q = ctx.quad();
  const int nt = grid.nt();
  const int nodes = nt + 1;
  if (d.size() != 2 * nodes + 1)
    throw std::invalid_argument("direction length mismatch");
  const double r = cfg.r_window;
  const double dt = cfg.T_final / nt;
  const double dtau = d[2 * nodes];
  LaserPath dgamma = LaserPath::unflatten(d.head(2 * nodes));

  SpaceTimeField v = ctx.linearize(dgamma);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * nodes + 1);

  // data of the transpose solve: tracking/Dirichlet pairings with v plus the
  // window-endpoint terms carrying dtau
  SliceCoeffs cQb = slice_coeffs(q.tg, q.b_Q), cQa = slice_coeffs(q.tg, q.a_Q);
  SliceCoeffs cOb = slice_coeffs(q.tg, q.b_Om), cOa = slice_coeffs(q.tg, q.a_Om);
  auto window_coeff = [](const SliceCoeffs& b, const SliceCoeffs& a, int n) {
    double c = 0.0;
    if (b.i0 == n) c += b.c0;
    if (b.i1 == n) c += b.c1;
    if (a.i0 == n) c -= a.c0;
    if (a.i1 == n) c -= a.c1;
    return c;
  };

  const double th = ctx.op().theta();
  Eigen::VectorXd p_next = Eigen::VectorXd::Zero(grid.node_count());
  SpaceTimeField pa;
  pa.values.setZero(grid.node_count(), nt + 1);
  for (int n = nt - 1; n >= 1; --n) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(grid.node_count());
    if (q.w_full[n] != 0.0)
      a.noalias() += q.w_full[n] * (grid.stiffness() * v.values.col(n));
    const double tr = (cfg.lambda_Q / r) * q.w_Q[n] + (cfg.lambda_Omega / r) * q.w_Om[n];
    if (tr != 0.0)
      a.noalias() += tr * grid.volume_weights().cwiseProduct(v.values.col(n));
    if (dtau != 0.0) {
      const double cq = window_coeff(cQb, cQa, n);
      if (cq != 0.0)
        a.noalias() += dtau * 0.5 * cfg.lambda_Q / r * cq *
                       grid.volume_weights().cwiseProduct(ctx.state().values.col(n) - q.yQ);
      const double co = window_coeff(cOb, cOa, n);
      if (co != 0.0)
        a.noalias() += dtau * cfg.lambda_Omega / r * co *
                       grid.volume_weights().cwiseProduct(ctx.state().values.col(n) - q.yOm);
    }
    Eigen::VectorXd p = ctx.op().solve_implicit(ctx.op().apply_explicit(p_next) + a);
    pa.values.col(n) = (th * p + (1.0 - th) * p_next) / dt;
    p_next.swap(p);
  }
  pa.values.col(0) = (1.0 - th) / dt * p_next;

  const double cR = cfg.c_R();
  const double inv_R2 = 1.0 / (cfg.beam_radius * cfg.beam_radius);
  const auto& tops = grid.top_nodes();
  for (int n = 0; n <= nt; ++n) {
    Vec2 acc = Vec2::Zero();
    const Vec2 c = ctx.path()[n];
    const Vec2 dg = dgamma[n];
    for (int id : tops) {
      const Vec2 rel = grid.top_coord(id) - c;
      const double e = std::exp(-2.0 * rel.squaredNorm() * inv_R2);
      // transpose-solve pairing (first sensitivity kernel)
      acc += grid.top_weights()[id] * cR * e * pa.values(id, n) * rel;
      // second-source pairing with the base adjoint
      acc += grid.top_weights()[id] * cR * e * ctx.adjoint().values(id, n) *
             Vec2(4.0 * inv_R2 * rel.dot(dg) * rel - dg);
    }
    out.segment<2>(2 * n) += dt * acc;
  }

  // seminorm second differences
  for (int i = 0; i < nt; ++i) {
    Vec2 dvel = cfg.lambda_gamma * (dgamma[i + 1] - dgamma[i]) / dt;
    out.segment<2>(2 * i) -= dvel;
    out.segment<2>(2 * (i + 1)) += dvel;
  }

  // multiplier curvature
  for (int i = 0; i < nodes; ++i)
    if (mult.lambda[i] != 0.0)
      out.segment<2>(2 * i) += ctx.trapezoid()[i] * mult.lambda[i] *
                               (cfg.region.hessian(ctx.path()[i]) * dgamma[i]);

  out[2 * nodes] = ctx.mixed_term(v) + dtau * ctx.tau_tau_term();
  return out;
}

// Discrete H^1(0,T;R^2) x R gram matrix (trapezoid L^2 part plus the
// seminorm coupling; unit weight on the tau coordinate).
inline Eigen::SparseMatrix<double> h1_gram(const ModelConfig& cfg,
                                           const SlabGrid& grid) {
  const int nt = grid.nt();
  const int n = 2 * (nt + 1) + 1;
  const double dt = cfg.T_final / nt;
  Eigen::VectorXd w = trapezoid_weights(TimeGrid{nt, cfg.T_final});
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i <= nt; ++i)
    for (int c = 0; c < 2; ++c) trip.emplace_back(2 * i + c, 2 * i + c, w[i]);
  for (int i = 0; i < nt; ++i)
    for (int c = 0; c < 2; ++c) {
      const int a = 2 * i + c, b = 2 * (i + 1) + c;
      trip.emplace_back(a, a, 1.0 / dt);
      trip.emplace_back(b, b, 1.0 / dt);
      trip.emplace_back(a, b, -1.0 / dt);
      trip.emplace_back(b, a, -1.0 / dt);
    }
  trip.emplace_back(n - 1, n - 1, 1.0);
  Eigen::SparseMatrix<double> N(n, n);
  N.setFromTriplets(trip.begin(), trip.end());
  return N;
}

struct SocOptions {
  int samples{200};
  unsigned seed{2024};
  int lanczos_steps{80};
  int max_restarts{12};
  double ritz_tol{1e-9};
};

struct SocReport {
  double lambda_min_subspace{0.0};
  double min_sampled{0.0};
  double margin{0.0};
  std::string verdict;  // POSITIVE / SEMIDEFINITE / INDEFINITE
  Eigen::VectorXd attaining_direction;
  bool attaining_from_subspace{true};
  int hessian_products{0};
  int subspace_dim{0};
  double eps_semi{0.0};
};

// Smallest Rayleigh quotient of the Lagrangian Hessian over the discrete
// critical cone: restarted Lanczos on the equality subspace in the H^1
// metric, plus random sampling of the inequality part. The subspace value is
// exact (up to Lanczos convergence); the sampled value is a certified upper
// bound for the cone minimum.
inline SocReport soc_check(const ModelConfig& cfg, const SlabGrid& grid,
                           const LaserPath& path, double tau,
                           const MultiplierEstimate& mult,
                           const CriticalCone& cone,
                           const SocOptions& opts = {}) {
  HessianContext ctx(cfg, grid, path, tau);
  const int n = cone.dim();
  const Eigen::MatrixXd& B = cone.basis;
  const int k = static_cast<int>(B.cols());
  Eigen::SparseMatrix<double> N = h1_gram(cfg, grid);

  SocReport rep;
  rep.subspace_dim = k;

  auto apply_H = [&](const Eigen::VectorXd& x) {
    ++rep.hessian_products;
    return hessian_vector_product(ctx, mult, x);
  };

  double lam_min = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_dir = Eigen::VectorXd::Zero(n);
  if (k > 0) {
    // reduced pencil B^T H B z = theta (B^T N B) z, transformed to a standard
    // problem with the Cholesky factor of the gram
    Eigen::MatrixXd C = B.transpose() * (N * B);
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() != Eigen::Success)
      throw SolverError("critical-cone gram factorization failed", 0.0, 0);
    auto op_tilde = [&](const Eigen::VectorXd& z) {
      Eigen::VectorXd y = llt.matrixU().solve(z);       // L^{-T} z
      Eigen::VectorXd x = B * y;
      Eigen::VectorXd hx = apply_H(x);
      Eigen::VectorXd w = B.transpose() * hx;
      return Eigen::VectorXd(llt.matrixL().solve(w));   // L^{-1} w
    };

    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> gauss;
    Eigen::VectorXd start(k);
    for (int i = 0; i < k; ++i) start[i] = gauss(rng);
    start.normalize();

    double prev = std::numeric_limits<double>::infinity();
    Eigen::VectorXd ritz_vec = start;
    for (int restart = 0; restart < opts.max_restarts; ++restart) {
      const int m = std::min(opts.lanczos_steps, k);
      Eigen::MatrixXd V(k, m);
      Eigen::VectorXd alpha(m), beta(m);
      Eigen::VectorXd q = ritz_vec.normalized();
      Eigen::VectorXd q_prev = Eigen::VectorXd::Zero(k);
      double b_prev = 0.0;
      int built = 0;
      for (int j = 0; j < m; ++j) {
        V.col(j) = q;
        ++built;
        Eigen::VectorXd w = op_tilde(q);
        alpha[j] = q.dot(w);
        w -= alpha[j] * q + b_prev * q_prev;
        // full reorthogonalization
        for (int pass = 0; pass < 2; ++pass)
          w -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * w);
        double b = w.norm();
        beta[j] = b;
        if (b < 1e-13 || j + 1 == m) break;
        q_prev = q;
        q = w / b;
        b_prev = b;
      }
      Eigen::MatrixXd Tm = Eigen::MatrixXd::Zero(built, built);
      for (int j = 0; j < built; ++j) {
        Tm(j, j) = alpha[j];
        if (j + 1 < built) {
          Tm(j, j + 1) = beta[j];
          Tm(j + 1, j) = beta[j];
        }
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Tm);
      int imin;
      es.eigenvalues().minCoeff(&imin);
      double theta = es.eigenvalues()[imin];
      ritz_vec = V.leftCols(built) * es.eigenvectors().col(imin);
      if (std::abs(theta - prev) <= opts.ritz_tol * std::max(1.0, std::abs(theta)) ||
          built >= k) {
        prev = theta;
        break;
      }
      prev = theta;
    }
    lam_min = prev;
    Eigen::VectorXd y = llt.matrixU().solve(ritz_vec);
    best_dir = B * y;
    double nn = std::sqrt(best_dir.dot(N * best_dir));
    if (nn > 0.0) best_dir /= nn;
  }
  rep.lambda_min_subspace = lam_min;

  // random cone samples: subspace part plus nonnegative generator combinations
  std::mt19937_64 rng(opts.seed + 1);
  std::normal_distribution<double> gauss;
  double min_samp = std::numeric_limits<double>::infinity();
  Eigen::VectorXd min_samp_dir = Eigen::VectorXd::Zero(n);
  for (int s = 0; s < opts.samples; ++s) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (k > 0) {
      Eigen::VectorXd z(k);
      for (int i = 0; i < k; ++i) z[i] = gauss(rng);
      x += B * z;
    }
    for (const auto& gen : cone.generators) x += std::abs(gauss(rng)) * gen;
    double nn = std::sqrt(x.dot(N * x));
    if (nn < 1e-14) continue;
    x /= nn;
    LaserPath dg = LaserPath::unflatten(x.head(n - 1));
    Direction d{dg, x[n - 1]};
    double val = lagrangian_hessian_form(ctx, mult, d, d);
    rep.hessian_products += 1;
    if (val < min_samp) {
      min_samp = val;
      min_samp_dir = x;
    }
  }
  rep.min_sampled = min_samp;

  rep.margin = std::min(lam_min, min_samp);
  // scale for the semidefinite band: the seminorm weight is the natural unit
  // of the form on H^1-normalized directions
  double scale = std::max({cfg.lambda_gamma, std::abs(lam_min), std::abs(min_samp)});
  rep.eps_semi = 1e-7 * std::max(scale, 1e-12);
  if (rep.margin > rep.eps_semi)
    rep.verdict = "POSITIVE";
  else if (rep.margin >= -rep.eps_semi)
    rep.verdict = "SEMIDEFINITE";
  else
    rep.verdict = "INDEFINITE";

  // prefer the subspace minimizer when both attain the margin
  if (lam_min <= min_samp + rep.eps_semi) {
    rep.attaining_direction = best_dir;
    rep.attaining_from_subspace = true;
  } else {
    rep.attaining_direction = min_samp_dir;
    rep.attaining_from_subspace = false;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Regularity diagnostics
// ---------------------------------------------------------------------------

struct AppendixMode {
  double M{0.0};
  LaserPath anchor;
  double kappa{0.0};
};

struct RegularityReport {
  double v_start{0.0}, v_end{0.0};  // endpoint discrete speeds
  double h2_seminorm{0.0};
  Eigen::VectorXd ode_residual;  // nodal |lambda_gamma gamma'' - P - lambda grad g|
  double ode_residual_l2{0.0};
  double ode_residual_max{0.0};
  bool has_appendix{false};
  double appendix_residual_l2{0.0};
};

// Discrete second difference with one-sided copies at the ends.
inline Vec2 second_difference(const LaserPath& path, int i, double dt) {
  const int nt = path.nt();
  int c = std::clamp(i, 1, nt - 1);
  return (path[c + 1] - 2.0 * path[c] + path[c - 1]) / (dt * dt);
}

inline RegularityReport regularity_check(const ModelConfig& cfg,
                                         const SlabGrid& grid,
                                         const LaserPath& path, double tau,
                                         const MultiplierEstimate& mult,
                                         const SpaceTimeField& adjoint,
                                         const std::optional<AppendixMode>& appendix = {}) {
  const int nt = grid.nt();
  const double dt = cfg.T_final / nt;
  RegularityReport rep;
  rep.v_start = (path[1] - path[0]).norm() / dt;
  rep.v_end = (path[nt] - path[nt - 1]).norm() / dt;

  Eigen::VectorXd w = trapezoid_weights(TimeGrid{nt, cfg.T_final});
  double h2 = 0.0;
  for (int i = 1; i < nt; ++i) h2 += dt * second_difference(path, i, dt).squaredNorm();
  rep.h2_seminorm = std::sqrt(h2);

  DiscreteHeatOperator op(cfg, grid);
  SpaceTimeField state = forward_solve(cfg, grid, path, &op);
  PathGradient pg = grad_gamma(cfg, grid, path, tau, state, adjoint);

  rep.ode_residual.resize(nt + 1);
  double l2 = 0.0;
  for (int i = 0; i <= nt; ++i) {
    Vec2 res = cfg.lambda_gamma * second_difference(path, i, dt) -
               pg.kernel[static_cast<size_t>(i)] -
               mult.lambda[i] * cfg.region.gradient(path[i]);
    rep.ode_residual[i] = res.norm();
    l2 += w[i] * res.squaredNorm();
  }
  rep.ode_residual_l2 = std::sqrt(l2);
  rep.ode_residual_max = rep.ode_residual.maxCoeff();

  if (appendix) {
    rep.has_appendix = true;
    require_same_nodes(path, appendix->anchor);
    LaserPath diff = path;
    for (int j = 0; j <= nt; ++j) diff[j] = path[j] - appendix->anchor[j];
    double al2 = 0.0;
    for (int i = 0; i <= nt; ++i) {
      Vec2 res = pg.kernel[static_cast<size_t>(i)] -
                 cfg.lambda_gamma * second_difference(path, i, dt) -
                 appendix->M * second_difference(diff, i, dt) +
                 appendix->M * diff[i] +
                 2.0 * appendix->kappa * std::max(cfg.region.value(path[i]), 0.0) *
                     cfg.region.gradient(path[i]);
      al2 += w[i] * res.squaredNorm();
    }
    rep.appendix_residual_l2 = std::sqrt(al2);
  }
  return rep;
}

}  // namespace lasopt

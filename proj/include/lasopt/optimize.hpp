#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "lasopt/config.hpp"
#include "lasopt/grid.hpp"
#include "lasopt/multiplier.hpp"
#include "lasopt/objective.hpp"
#include "lasopt/pde.hpp"

namespace lasopt {

struct InnerOptions {
  int max_iterations{800};
  int lbfgs_memory{12};
  double armijo_c1{1e-4};
  double stall_step{1e-14};
  // proximal terms around an anchor (regularity-experiment mode)
  bool proximal{false};
  LaserPath anchor_path{};
  double anchor_tau{0.0};
  double proximal_weight{1.0};
};

struct InnerResult {
  LaserPath path;
  double tau{0.0};
  bool converged{false};
  int iterations{0};
  double stationarity{0.0};
  double value{0.0};
};

namespace detail {

// Value and gradient of J_r + kappa * penalty (+ proximal), sharing one
// forward solve per path.
class PenalizedObjective {
 public:
  PenalizedObjective(const ModelConfig& cfg, const SlabGrid& grid, double kappa,
                     const InnerOptions& opts, const DiscreteHeatOperator& op)
      : cfg_(&cfg), grid_(&grid), kappa_(kappa), opts_(&opts), op_(&op) {
    trap_w_ = trapezoid_weights(TimeGrid{grid.nt(), cfg.T_final});
  }

  double tau_min() const { return cfg_->tau_min(); }
  double tau_max() const { return cfg_->tau_max(); }

  // forward solve for a candidate path; cost pieces that depend on tau only
  // reuse it
  SpaceTimeField solve(const LaserPath& path) const {
    return forward_solve(*cfg_, *grid_, path, op_);
  }

  double value(const LaserPath& path, const SpaceTimeField& state, double tau) const {
    double f = eval_cost(*cfg_, *grid_, state, path, tau).total;
    f += kappa_ * penalty_value(path, cfg_->region, cfg_->T_final);
    if (opts_->proximal) {
      double prox = 0.0;
      for (int i = 0; i <= grid_->nt(); ++i)
        prox += trap_w_[i] * (path[i] - opts_->anchor_path[i]).squaredNorm();
      prox += (tau - opts_->anchor_tau) * (tau - opts_->anchor_tau);
      f += opts_->proximal_weight * prox;
    }
    return f;
  }

  Eigen::VectorXd path_gradient(const LaserPath& path, double tau,
                                const SpaceTimeField& state) const {
    SpaceTimeField adj = adjoint_solve(*cfg_, *grid_, path, tau, state, op_);
    Eigen::VectorXd g = grad_gamma(*cfg_, *grid_, path, tau, state, adj).nodal();
    g += kappa_ * penalty_gradient(path, cfg_->region, cfg_->T_final).nodal();
    if (opts_->proximal) {
      for (int i = 0; i <= grid_->nt(); ++i)
        g.segment<2>(2 * i) += 2.0 * opts_->proximal_weight * trap_w_[i] *
                               (path[i] - opts_->anchor_path[i]);
    }
    return g;
  }

  double tau_gradient(const LaserPath& path, double tau,
                      const SpaceTimeField& state) const {
    double g = grad_tau(*cfg_, *grid_, path, tau, state);
    if (opts_->proximal)
      g += 2.0 * opts_->proximal_weight * (tau - opts_->anchor_tau);
    return g;
  }

 private:
  const ModelConfig* cfg_;
  const SlabGrid* grid_;
  double kappa_;
  const InnerOptions* opts_;
  const DiscreteHeatOperator* op_;
  Eigen::VectorXd trap_w_;
};

inline Eigen::VectorXd lbfgs_direction(const Eigen::VectorXd& g,
                                       const std::deque<Eigen::VectorXd>& S,
                                       const std::deque<Eigen::VectorXd>& Y) {
  Eigen::VectorXd q = g;
  const int m = static_cast<int>(S.size());
  std::vector<double> alpha(static_cast<size_t>(m)), rho(static_cast<size_t>(m));
  for (int i = m - 1; i >= 0; --i) {
    rho[static_cast<size_t>(i)] = 1.0 / Y[static_cast<size_t>(i)].dot(S[static_cast<size_t>(i)]);
    alpha[static_cast<size_t>(i)] = rho[static_cast<size_t>(i)] * S[static_cast<size_t>(i)].dot(q);
    q -= alpha[static_cast<size_t>(i)] * Y[static_cast<size_t>(i)];
  }
  if (m > 0) {
    const auto& s = S.back();
    const auto& y = Y.back();
    q *= s.dot(y) / y.dot(y);
  }
  for (int i = 0; i < m; ++i) {
    double beta = rho[static_cast<size_t>(i)] * Y[static_cast<size_t>(i)].dot(q);
    q += (alpha[static_cast<size_t>(i)] - beta) * S[static_cast<size_t>(i)];
  }
  return -q;
}

}  // namespace detail

// Inner solver for the penalized problem at fixed kappa: limited-memory
// quasi-Newton with Armijo backtracking on the path, projected gradient on
// tau (tau moves do not need a new forward solve). Returns when the combined
// projected stationarity measure drops below tol, or flagged non-converged at
// the iteration cap / a stalled line search.
inline InnerResult inner_solve(const ModelConfig& cfg, const SlabGrid& grid,
                               const LaserPath& start_path, double start_tau,
                               double kappa, double tol,
                               const InnerOptions& opts = {},
                               const DiscreteHeatOperator* op = nullptr) {
  if (!(tol > 0.0)) throw std::invalid_argument("inner tolerance must be positive");
  if (!start_path.all_finite()) throw std::invalid_argument("start path not finite");
  std::optional<DiscreteHeatOperator> local;
  if (!op) local.emplace(cfg, grid);
  const DiscreteHeatOperator& use = op ? *op : *local;

  InnerOptions o = opts;
  if (o.proximal && o.anchor_path.nodes() != start_path.nodes())
    throw std::invalid_argument("proximal anchor node count mismatch");
  detail::PenalizedObjective obj(cfg, grid, kappa, o, use);

  LaserPath path = start_path;
  double tau = std::clamp(start_tau, obj.tau_min(), obj.tau_max());
  SpaceTimeField state = obj.solve(path);
  double f = obj.value(path, state, tau);
  Eigen::VectorXd g = obj.path_gradient(path, tau, state);
  double gt = obj.tau_gradient(path, tau, state);

  std::deque<Eigen::VectorXd> S, Y;
  double tau_step = 1.0;
  InnerResult res;
  res.iterations = 0;

  auto stationarity = [&]() {
    double tproj = std::clamp(tau - gt, obj.tau_min(), obj.tau_max());
    return std::sqrt(g.squaredNorm() + (tau - tproj) * (tau - tproj));
  };

  for (int it = 0; it < o.max_iterations; ++it) {
    res.iterations = it;
    res.stationarity = stationarity();
    if (res.stationarity <= tol) {
      res.converged = true;
      break;
    }

    // tau update: projected gradient with backtracking (no PDE solve needed)
    double tproj = std::clamp(tau - gt, obj.tau_min(), obj.tau_max());
    if (std::abs(tau - tproj) > 1e-16) {
      double a = tau_step;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        double tau_trial = std::clamp(tau - a * gt, obj.tau_min(), obj.tau_max());
        double f_trial = obj.value(path, state, tau_trial);
        if (f_trial <= f + o.armijo_c1 * gt * (tau_trial - tau)) {
          tau = tau_trial;
          f = f_trial;
          tau_step = std::min(2.0 * a, 1e6);
          moved = true;
          break;
        }
        a *= 0.5;
      }
      if (moved) {
        gt = obj.tau_gradient(path, tau, state);
        g = obj.path_gradient(path, tau, state);
      }
    }

    // path update: L-BFGS direction with Armijo backtracking
    Eigen::VectorXd d = detail::lbfgs_direction(g, S, Y);
    double slope = d.dot(g);
    if (!(slope < 0.0)) {
      d = -g;
      slope = -g.squaredNorm();
      S.clear();
      Y.clear();
    }
    double t = 1.0;
    bool accepted = false;
    LaserPath trial_path = path;
    SpaceTimeField trial_state;
    double trial_f = f;
    for (int ls = 0; ls < 60; ++ls) {
      Eigen::VectorXd x = path.flatten() + t * d;
      trial_path = LaserPath::unflatten(x);
      trial_state = obj.solve(trial_path);
      trial_f = obj.value(trial_path, trial_state, tau);
      if (trial_f <= f + o.armijo_c1 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
      if (t * d.lpNorm<Eigen::Infinity>() < o.stall_step) break;
    }
    if (!accepted) {
      res.converged = false;  // stalled line search
      res.iterations = it + 1;
      break;
    }

    Eigen::VectorXd g_new = obj.path_gradient(trial_path, tau, trial_state);
    Eigen::VectorXd s = t * d;
    Eigen::VectorXd y = g_new - g;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      S.push_back(s);
      Y.push_back(y);
      if (static_cast<int>(S.size()) > o.lbfgs_memory) {
        S.pop_front();
        Y.pop_front();
      }
    }
    path = std::move(trial_path);
    state = std::move(trial_state);
    f = trial_f;
    g = std::move(g_new);
    gt = obj.tau_gradient(path, tau, state);
  }

  res.stationarity = stationarity();
  if (res.stationarity <= tol) res.converged = true;
  res.path = std::move(path);
  res.tau = tau;
  res.value = f;
  return res;
}

struct PenaltySchedule {
  double kappa0{10.0};
  double growth{10.0};
  int outer{5};
  double tol0{1e-2};  // inner tolerance at kappa = 1, tightened as 1/sqrt(kappa)

  void validate() const {
    if (!(kappa0 > 0.0)) throw ConfigError("optimize.kappa0", "must be positive");
    if (!(growth >= 2.0)) throw ConfigError("optimize.growth", "must be >= 2");
    if (outer < 1) throw ConfigError("optimize.outer", "must be >= 1");
    if (!(tol0 > 0.0)) throw ConfigError("optimize.tol0", "must be positive");
  }
  double kappa(int j) const { return kappa0 * std::pow(growth, j); }
  double tol(int j) const { return tol0 / std::sqrt(kappa(j)); }
};

struct OuterRecord {
  double kappa{0.0};
  double cost{0.0};           // reduced cost at the iterate (no penalty)
  double penalty{0.0};        // int [g]_+^2
  double max_violation{0.0};  // max_i [g(gamma_i)]_+
  double grad_norm{0.0};
  int inner_iterations{0};
  bool converged{false};
  bool bound_ok{true};  // kappa * penalty <= feasible reference cost
};

struct OptimReport {
  LaserPath path;
  double tau{0.0};
  std::vector<OuterRecord> outers;
  MultiplierEstimate multiplier;
  bool aborted{false};
  double feasible_reference_cost{0.0};

  bool all_finite() const {
    for (const auto& r : outers)
      if (!std::isfinite(r.cost) || !std::isfinite(r.max_violation) ||
          !std::isfinite(r.grad_norm))
        return false;
    return path.all_finite() && std::isfinite(tau);
  }
};

inline double max_violation(const LaserPath& path, const LevelSetRegion& region) {
  double m = 0.0;
  for (int i = 0; i <= path.nt(); ++i)
    m = std::max(m, std::max(region.value(path[i]), 0.0));
  return m;
}

// lambda = 2 kappa [g o gamma]_+, mu = -D_tau J; the scaled violation is the
// penalty estimate of the Lagrange multiplier.
inline MultiplierEstimate recover_multiplier(const LaserPath& path, double tau,
                                             const LevelSetRegion& region,
                                             double kappa, const ModelConfig& cfg,
                                             const SlabGrid& grid,
                                             const SpaceTimeField& state) {
  MultiplierEstimate m;
  m.lambda.resize(path.nodes());
  m.eps_act = 1e-6 * region.scale();
  for (int i = 0; i <= path.nt(); ++i) {
    double gv = region.value(path[i]);
    m.lambda[i] = 2.0 * kappa * std::max(gv, 0.0);
    if (gv >= -m.eps_act) m.active_set.push_back(i);
  }
  m.mu = -grad_tau(cfg, grid, path, tau, state);
  return m;
}

// Quadratic-penalty outer loop with warm starts. Aborts after two
// consecutive inner failures; otherwise records every outer iterate and
// recovers the multiplier at the final kappa.
inline OptimReport penalty_loop(const ModelConfig& cfg, const SlabGrid& grid,
                                const PenaltySchedule& schedule,
                                const LaserPath& start_path, double start_tau,
                                const InnerOptions& opts = {}) {
  schedule.validate();
  DiscreteHeatOperator op(cfg, grid);

  OptimReport report;
  // feasible reference for the penalty bound: the start path retracted into
  // the scan region
  LaserPath ref = start_path;
  for (int i = 0; i <= ref.nt(); ++i)
    ref[i] = cfg.region.project_inside(ref[i]);
  report.feasible_reference_cost =
      reduced_cost(cfg, grid, ref, std::clamp(start_tau, cfg.tau_min(), cfg.tau_max()), &op);

  LaserPath path = start_path;
  double tau = start_tau;
  int consecutive_failures = 0;
  for (int j = 0; j < schedule.outer; ++j) {
    const double kappa = schedule.kappa(j);
    InnerResult inner =
        inner_solve(cfg, grid, path, tau, kappa, schedule.tol(j), opts, &op);
    path = inner.path;
    tau = inner.tau;

    OuterRecord rec;
    rec.kappa = kappa;
    rec.cost = reduced_cost(cfg, grid, path, tau, &op);
    rec.penalty = penalty_value(path, cfg.region, cfg.T_final);
    rec.max_violation = max_violation(path, cfg.region);
    rec.grad_norm = inner.stationarity;
    rec.inner_iterations = inner.iterations;
    rec.converged = inner.converged;
    rec.bound_ok = kappa * rec.penalty <=
                   report.feasible_reference_cost * (1.0 + 1e-9) + 1e-15;
    report.outers.push_back(rec);

    if (!inner.converged) {
      if (++consecutive_failures >= 2) {
        report.aborted = true;
        break;
      }
    } else {
      consecutive_failures = 0;
    }
  }

  report.path = path;
  report.tau = tau;
  SpaceTimeField state = forward_solve(cfg, grid, path, &op);
  const double kappa_final = report.outers.empty() ? schedule.kappa0
                                                   : report.outers.back().kappa;
  report.multiplier =
      recover_multiplier(path, tau, cfg.region, kappa_final, cfg, grid, state);
  return report;
}

}  // namespace lasopt

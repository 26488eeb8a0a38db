#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "lasopt/optimize.hpp"
#include "test_support.hpp"

using namespace lasopt;

namespace {

ModelConfig pull_config() {
  // tracking target centered outside the scan region pulls the path out;
  // the penalty pushes back
  ModelConfig cfg = testing::desk_config();
  cfg.lambda_Q = 5.0;
  cfg.lambda_Omega = 5.0;
  cfg.yQ_target = FieldSpec::column_disk(1.0, 0.0, Vec2(0.85, 0.5), 0.1);
  cfg.yOmega_target = FieldSpec::column_disk(1.0, 0.0, Vec2(0.85, 0.5), 0.1);
  return cfg;
}

}  // namespace

TEST_CASE("degenerate objective keeps the start path and drives tau to 3r") {
  ModelConfig cfg = testing::desk_config();
  cfg.laser_power = 0.0;
  cfg.lambda_Q = 0.0;
  cfg.lambda_Omega = 0.0;
  cfg.beta_T = 0.5;
  SlabGrid grid = testing::tiny_grid(16);
  LaserPath start = LaserPath::constant(Vec2(0.5, 0.5), 16);

  InnerResult res = inner_solve(cfg, grid, start, cfg.T_final, 1.0, 1e-10);
  CHECK(res.converged);
  CHECK(res.tau == cfg.tau_min());
  for (int i = 0; i <= 16; ++i) CHECK(res.path[i] == start[i]);
  CHECK(res.stationarity <= 1e-10);
}

TEST_CASE("penalty-only problem retracts a straddling path into the region") {
  ModelConfig cfg = testing::desk_config();
  cfg.laser_power = 0.0;
  cfg.lambda_Q = 0.0;
  cfg.lambda_Omega = 0.0;
  cfg.beta_T = 0.0;
  SlabGrid grid = testing::tiny_grid(16);

  // constant start outside the disk
  LaserPath start = LaserPath::constant(Vec2(0.8, 0.5), 16);
  const double kappa = 100.0;
  const double tol = 1e-9;
  InnerResult res = inner_solve(cfg, grid, start, 0.7, kappa, tol);
  CHECK(res.converged);
  CHECK(res.stationarity <= tol);

  // dense 1-D oracle along the segment toward the region center: the
  // penalty landscape is minimized at any feasible constant path
  double oracle = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 100000; ++k) {
    double s = double(k) / 100000;
    Vec2 x = Vec2(0.8, 0.5) + s * (Vec2(0.5, 0.5) - Vec2(0.8, 0.5));
    LaserPath cand = LaserPath::constant(x, 16);
    double f = 0.5 * cfg.lambda_gamma * h1_seminorm_sq(cand, cfg.T_final) +
               kappa * penalty_value(cand, cfg.region, cfg.T_final);
    oracle = std::min(oracle, f);
  }
  double f_ret = 0.5 * cfg.lambda_gamma * h1_seminorm_sq(res.path, cfg.T_final) +
                 kappa * penalty_value(res.path, cfg.region, cfg.T_final);
  CHECK(f_ret <= oracle + 1e-9);
  CHECK(max_violation(res.path, cfg.region) <= 1e-5);
}

TEST_CASE("penalty loop on a feasible-interior problem never activates the penalty") {
  ModelConfig cfg = testing::desk_config();
  SlabGrid grid = testing::tiny_grid(20);
  PenaltySchedule sched;
  sched.kappa0 = 100.0;
  sched.growth = 10.0;
  sched.outer = 3;
  sched.tol0 = 3e-2;
  LaserPath start = LaserPath::constant(Vec2(0.5, 0.5), 20);

  OptimReport rep = penalty_loop(cfg, grid, sched, start, 0.8);
  REQUIRE(rep.outers.size() == 3);
  for (const auto& r : rep.outers) {
    CHECK(r.max_violation == 0.0);
    CHECK(r.bound_ok);
  }
  CHECK(rep.multiplier.lambda.cwiseAbs().maxCoeff() == 0.0);
  CHECK(rep.multiplier.active_set.empty());
  CHECK(rep.all_finite());
}

TEST_CASE("penalty loop on the infeasible pull: decreasing violations, valid multiplier") {
  ModelConfig cfg = pull_config();
  SlabGrid grid = testing::tiny_grid(20);
  PenaltySchedule sched;
  sched.kappa0 = 100.0;
  sched.growth = 10.0;
  sched.outer = 3;  // kappa in {1e2, 1e3, 1e4}
  sched.tol0 = 1e-2;
  LaserPath start = LaserPath::constant(Vec2(0.6, 0.5), 20);

  OptimReport rep = penalty_loop(cfg, grid, sched, start, 0.8);
  REQUIRE(rep.outers.size() == 3);
  CHECK(!rep.aborted);

  // the target sits outside, so the penalty must be active
  CHECK(rep.outers[0].max_violation > 0.0);
  // violations non-increasing across outer iterations (10% slack)
  for (size_t j = 1; j < rep.outers.size(); ++j)
    CHECK(rep.outers[j].max_violation <= 1.1 * rep.outers[j - 1].max_violation);
  // strictly smaller at the end
  CHECK(rep.outers[2].max_violation < rep.outers[0].max_violation);

  // Eq. add8 analog: kappa * penalty bounded by the feasible reference cost
  for (const auto& r : rep.outers) CHECK(r.bound_ok);

  // warm-started outer loop: reduced cost non-increasing up to tolerance slack
  for (size_t j = 1; j < rep.outers.size(); ++j)
    CHECK(rep.outers[j].cost <= rep.outers[j - 1].cost + 10.0 * sched.tol(static_cast<int>(j)));

  // recovered multiplier: nonnegative, supported on the active set
  CHECK(rep.multiplier.lambda.minCoeff() >= 0.0);
  CHECK(rep.multiplier.lambda.maxCoeff() > 0.0);
  for (int i = 0; i <= 20; ++i)
    if (rep.multiplier.lambda[i] > 0.0)
      CHECK(cfg.region.value(rep.path[i]) > -rep.multiplier.eps_act);
}

TEST_CASE("recover_multiplier formulas") {
  ModelConfig cfg = testing::desk_config();
  SlabGrid grid = testing::tiny_grid(10);
  DiscreteHeatOperator op(cfg, grid);

  // strictly feasible path: zero multiplier, empty active set
  LaserPath inside = LaserPath::constant(Vec2(0.5, 0.5), 10);
  SpaceTimeField y = forward_solve(cfg, grid, inside, &op);
  MultiplierEstimate m0 = recover_multiplier(inside, 0.8, cfg.region, 1e4, cfg, grid, y);
  CHECK(m0.lambda.cwiseAbs().maxCoeff() == 0.0);
  CHECK(m0.active_set.empty());

  // node with g = 1e-3 at kappa = 1e4 gives lambda = 20
  LaserPath touch = inside;
  double rho = 0.25;
  touch[4] = Vec2(0.5 + std::sqrt(rho * rho + 1e-3), 0.5);
  SpaceTimeField y2 = forward_solve(cfg, grid, touch, &op);
  MultiplierEstimate m1 = recover_multiplier(touch, 0.8, cfg.region, 1e4, cfg, grid, y2);
  CHECK_THAT(m1.lambda[4], Catch::Matchers::WithinRel(20.0, 1e-10));
  CHECK(std::find(m1.active_set.begin(), m1.active_set.end(), 4) != m1.active_set.end());

  // interior stationary tau: |mu| below the inner tolerance
  ModelConfig deg = testing::desk_config();
  deg.laser_power = 0.0;
  deg.lambda_Q = 0.0;
  deg.lambda_Omega = 0.0;
  deg.beta_T = 0.0;  // flat in tau: any interior tau is stationary
  SpaceTimeField y3 = forward_solve(deg, grid, inside, &op);
  MultiplierEstimate m2 = recover_multiplier(inside, 0.8, deg.region, 1e2, deg, grid, y3);
  CHECK(std::abs(m2.mu) <= 1e-12);
}

TEST_CASE("inner solver reports a stalled line search instead of looping") {
  ModelConfig cfg = testing::desk_config();
  SlabGrid grid = testing::tiny_grid(8);
  LaserPath start = LaserPath::constant(Vec2(0.5, 0.5), 8);
  // absurd tolerance cannot be met; the cap must end the loop with a flag
  InnerOptions opts;
  opts.max_iterations = 3;
  InnerResult res = inner_solve(cfg, grid, start, 0.8, 1.0, 1e-300, opts);
  CHECK(!res.converged);
  CHECK(res.iterations <= 3);
}

TEST_CASE("proximal regularity-experiment mode anchors the iterate") {
  ModelConfig cfg = testing::desk_config();
  cfg.laser_power = 0.0;
  cfg.lambda_Q = 0.0;
  cfg.lambda_Omega = 0.0;
  SlabGrid grid = testing::tiny_grid(12);
  LaserPath anchor = testing::wiggly_interior_path(cfg, 12, 51);
  LaserPath start = LaserPath::constant(Vec2(0.5, 0.5), 12);

  InnerOptions opts;
  opts.proximal = true;
  opts.anchor_path = anchor;
  opts.anchor_tau = 0.75;
  opts.proximal_weight = 50.0;  // strong anchor dominates the seminorm
  InnerResult res = inner_solve(cfg, grid, start, 0.9, 1.0, 1e-8, opts);
  CHECK(res.converged);
  // the minimizer is pulled toward the anchor, not the seminorm kernel
  double d_anchor = 0.0, d_start = 0.0;
  for (int i = 0; i <= 12; ++i) {
    d_anchor += (res.path[i] - anchor[i]).squaredNorm();
    d_start += (res.path[i] - start[i]).squaredNorm();
  }
  CHECK(d_anchor < d_start);
  CHECK(std::abs(res.tau - 0.75) < 0.05);
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "lasopt/objective.hpp"
#include "lasopt/pde.hpp"
#include "test_support.hpp"

using namespace lasopt;

TEST_CASE("zero data gives the zero field exactly") {
  ModelConfig cfg = testing::desk_config();
  cfg.laser_power = 0.0;
  cfg.y0_init = FieldSpec::constant(0.0);
  cfg.yB_bottom = FieldSpec::constant(0.0);
  SlabGrid grid = testing::tiny_grid(10);
  SpaceTimeField y = forward_solve(cfg, grid, LaserPath::constant(Vec2(0.5, 0.5), 10));
  CHECK(y.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("homogeneous implicit steps dissipate the mass-weighted norm") {
  ModelConfig cfg = testing::desk_config();
  cfg.laser_power = 0.0;
  cfg.y0_init = FieldSpec::constant(3.0);
  cfg.yB_bottom = FieldSpec::constant(0.0);
  SlabGrid grid = testing::tiny_grid(30);
  DiscreteHeatOperator op(cfg, grid);
  SpaceTimeField y = forward_solve(cfg, grid, LaserPath::constant(Vec2(0.5, 0.5), 30), &op);
  double prev = std::numeric_limits<double>::infinity();
  for (int n = 0; n <= 30; ++n) {
    double norm = std::sqrt(y.values.col(n).cwiseAbs2().dot(op.mass_diag()));
    CHECK(norm <= prev * (1 + 1e-14));
    prev = norm;
  }
}

TEST_CASE("dense 3x3x2 oracle confirms the implicit step is a contraction") {
  ModelConfig cfg = testing::desk_config();
  SlabGrid grid(1.0, 1.0, 0.2, 3, 3, 2, 4);
  DiscreteHeatOperator op(cfg, grid);
  const int n = grid.node_count();

  // independently assembled dense implicit matrix M + dt A
  Eigen::MatrixXd A = Eigen::MatrixXd(cfg.kappa * grid.stiffness());
  A += Eigen::MatrixXd((cfg.h_conv * grid.boundary_weights()).asDiagonal());
  Eigen::VectorXd m = cfg.rho * cfg.c_heat * grid.volume_weights();
  Eigen::MatrixXd MdtA = op.dt() * A;
  MdtA += Eigen::MatrixXd(m.asDiagonal());
  Eigen::MatrixXd step = MdtA.inverse() * Eigen::MatrixXd(m.asDiagonal());

  // in the mass norm: eigenvalues of M^{1/2} (M + dt A)^{-1} M^{1/2} in (0,1]
  Eigen::VectorXd sqrt_m = m.cwiseSqrt();
  Eigen::MatrixXd sym = Eigen::MatrixXd(sqrt_m.asDiagonal()) * MdtA.inverse() *
                        Eigen::MatrixXd(sqrt_m.asDiagonal());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
  CHECK(es.eigenvalues().maxCoeff() <= 1.0 + 1e-12);

  // the solver step agrees with the dense oracle
  std::mt19937_64 rng(2);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd y0(n);
  for (int i = 0; i < n; ++i) y0[i] = gauss(rng);
  Eigen::VectorXd via_solver = op.step(y0, Eigen::VectorXd::Zero(n));
  Eigen::VectorXd via_dense = step * y0;
  CHECK((via_solver - via_dense).norm() <= 1e-12 * via_dense.norm());
}

TEST_CASE("forward solve is superposed in the source") {
  ModelConfig cfg = testing::desk_config();
  cfg.y0_init = FieldSpec::constant(0.0);
  cfg.yB_bottom = FieldSpec::constant(0.0);
  SlabGrid grid = testing::tiny_grid(12);
  DiscreteHeatOperator op(cfg, grid);

  LaserPath p1 = LaserPath::circle(Vec2(0.5, 0.5), 0.1, 12);
  LaserPath p2 = LaserPath::constant(Vec2(0.4, 0.6), 12);
  BoundarySourceTrace s1 = source_field(cfg, grid, p1);
  BoundarySourceTrace s2 = source_field(cfg, grid, p2);
  BoundarySourceTrace sum = s1;
  sum.values += s2.values;

  SpaceTimeField y1 = sigma_solve(cfg, grid, s1, op);
  SpaceTimeField y2 = sigma_solve(cfg, grid, s2, op);
  SpaceTimeField ys = sigma_solve(cfg, grid, sum, op);
  double scale = ys.values.cwiseAbs().maxCoeff();
  CHECK((ys.values - y1.values - y2.values).cwiseAbs().maxCoeff() <= 1e-12 * scale);
}

TEST_CASE("linearized solve: zero direction, finite differences, linearity") {
  ModelConfig cfg = testing::desk_config();
  SlabGrid grid = testing::tiny_grid(20);
  DiscreteHeatOperator op(cfg, grid);
  LaserPath path = testing::wiggly_interior_path(cfg, 20, 5);
  std::mt19937_64 rng(17);

  LaserPath zero = LaserPath::constant(Vec2::Zero(), 20);
  CHECK(linearized_solve(cfg, grid, path, zero, &op).values.cwiseAbs().maxCoeff() == 0.0);

  LaserPath d = testing::random_direction(20, rng, 0.05);
  const double eps = 1e-5;
  Eigen::VectorXd x = path.flatten(), dx = d.flatten();
  SpaceTimeField yp = forward_solve(cfg, grid, LaserPath::unflatten(x + eps * dx), &op);
  SpaceTimeField ym = forward_solve(cfg, grid, LaserPath::unflatten(x - eps * dx), &op);
  SpaceTimeField fd;
  fd.values = (yp.values - ym.values) / (2 * eps);
  SpaceTimeField lin = linearized_solve(cfg, grid, path, d, &op);
  SpaceTimeField diff;
  diff.values = lin.values - fd.values;
  CHECK(diff.l2_Q_norm(grid, cfg.T_final) <=
        1e-6 * fd.l2_Q_norm(grid, cfg.T_final));

  LaserPath d2 = testing::random_direction(20, rng);
  LaserPath combo = d;
  for (int i = 0; i <= 20; ++i) combo[i] = 0.8 * d[i] + 2.5 * d2[i];
  SpaceTimeField l1 = linearized_solve(cfg, grid, path, d, &op);
  SpaceTimeField l2 = linearized_solve(cfg, grid, path, d2, &op);
  SpaceTimeField lc = linearized_solve(cfg, grid, path, combo, &op);
  double scale = lc.values.cwiseAbs().maxCoeff();
  CHECK((lc.values - 0.8 * l1.values - 2.5 * l2.values).cwiseAbs().maxCoeff() <=
        1e-12 * scale);
}

TEST_CASE("second state solve: zero direction, symmetry, second differences") {
  ModelConfig cfg = testing::desk_config();
  SlabGrid grid = testing::tiny_grid(16);
  DiscreteHeatOperator op(cfg, grid);
  LaserPath path = testing::wiggly_interior_path(cfg, 16, 3);
  std::mt19937_64 rng(23);

  LaserPath zero = LaserPath::constant(Vec2::Zero(), 16);
  LaserPath d1 = testing::random_direction(16, rng, 0.1);
  LaserPath d2 = testing::random_direction(16, rng, 0.1);
  CHECK(second_state_solve(cfg, grid, path, zero, d2, &op).values.cwiseAbs().maxCoeff() == 0.0);

  SpaceTimeField s12 = second_state_solve(cfg, grid, path, d1, d2, &op);
  SpaceTimeField s21 = second_state_solve(cfg, grid, path, d2, d1, &op);
  double scale = s12.values.cwiseAbs().maxCoeff();
  CHECK((s12.values - s21.values).cwiseAbs().maxCoeff() <= 1e-12 * scale);

  const double eps = 1e-4;
  Eigen::VectorXd x = path.flatten(), dx = d1.flatten();
  SpaceTimeField yp = forward_solve(cfg, grid, LaserPath::unflatten(x + eps * dx), &op);
  SpaceTimeField y0 = forward_solve(cfg, grid, path, &op);
  SpaceTimeField ym = forward_solve(cfg, grid, LaserPath::unflatten(x - eps * dx), &op);
  SpaceTimeField fd2;
  fd2.values = (yp.values - 2.0 * y0.values + ym.values) / (eps * eps);
  SpaceTimeField dss = second_state_solve(cfg, grid, path, d1, d1, &op);
  SpaceTimeField diff;
  diff.values = dss.values - fd2.values;
  CHECK(diff.l2_Q_norm(grid, cfg.T_final) <=
        1e-4 * fd2.l2_Q_norm(grid, cfg.T_final));
}

TEST_CASE("adjoint of zero misfit vanishes and the final slice is always zero") {
  ModelConfig cfg = testing::desk_config();
  cfg.laser_power = 0.0;
  cfg.yQ_target = FieldSpec::constant(0.0);
  cfg.yOmega_target = FieldSpec::constant(0.0);
  SlabGrid grid = testing::tiny_grid(10);
  LaserPath path = LaserPath::constant(Vec2(0.5, 0.5), 10);
  SpaceTimeField y = forward_solve(cfg, grid, path);
  SpaceTimeField p = adjoint_solve(cfg, grid, path, 0.8, y);
  CHECK(p.values.cwiseAbs().maxCoeff() == 0.0);

  // generic problem: p(.,T) = 0 exactly, for theta = 1 and theta = 1/2,
  // including tau = T
  ModelConfig cfg2 = testing::desk_config();
  for (double theta : {1.0, 0.5}) {
    for (double tau : {0.73, cfg2.T_final}) {
      cfg2.solver.theta = theta;
      LaserPath path2 = testing::wiggly_interior_path(cfg2, 10, 9);
      SpaceTimeField y2 = forward_solve(cfg2, grid, path2);
      SpaceTimeField p2 = adjoint_solve(cfg2, grid, path2, tau, y2);
      CHECK(p2.values.col(10).cwiseAbs().maxCoeff() == 0.0);
      CHECK(p2.values.allFinite());
    }
  }

  CHECK_THROWS_AS(adjoint_solve(cfg2, grid, path, 0.1, y), std::domain_error);
}

TEST_CASE("adjoint duality: boundary pairing equals the sensitivity route") {
  ModelConfig cfg = testing::desk_config();
  SlabGrid grid = testing::desk_grid(40);
  std::mt19937_64 rng(77);

  for (double theta : {1.0, 0.5}) {
    cfg.solver.theta = theta;
    DiscreteHeatOperator op(cfg, grid);
    LaserPath path = testing::wiggly_interior_path(cfg, 40, 41);
    const double tau = 0.77;
    SpaceTimeField y = forward_solve(cfg, grid, path, &op);
    SpaceTimeField p = adjoint_solve(cfg, grid, path, tau, y, &op);

    const int dirs = theta == 1.0 ? 20 : 5;
    for (int k = 0; k < dirs; ++k) {
      LaserPath d = testing::random_direction(40, rng);
      BoundarySourceTrace dv = linearized_source(cfg, grid, path, d);
      SpaceTimeField v = sigma_solve(cfg, grid, dv, op);
      double lhs = boundary_pairing(grid, cfg.T_final, dv, p);
      double rhs = cost_state_derivative(cfg, grid, tau, y, v);
      CHECK_THAT(lhs, Catch::Matchers::WithinRel(rhs, 1e-10));
    }
  }
}

TEST_CASE("implicit matrix is positive definite, Robin stiffness semidefinite") {
  ModelConfig cfg = testing::desk_config();
  SlabGrid grid = testing::tiny_grid(8);
  DiscreteHeatOperator op(cfg, grid);
  std::mt19937_64 rng(10);
  std::normal_distribution<double> gauss;
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd x(grid.node_count());
    for (int i = 0; i < x.size(); ++i) x[i] = gauss(rng);
    CHECK(x.dot(op.implicit_matrix() * x) > 0.0);
    CHECK(x.dot(op.robin_stiffness() * x) >= 0.0);
    CHECK(x.dot(grid.stiffness() * x) >= -1e-13 * x.squaredNorm());
  }
}

TEST_CASE("iterative solver path agrees with the dense one") {
  ModelConfig cfg = testing::desk_config();
  SlabGrid grid = testing::tiny_grid(6);
  DiscreteHeatOperator dense_op(cfg, grid);
  cfg.solver.dense_threshold = 1;  // force PCG
  DiscreteHeatOperator pcg_op(cfg, grid);
  LaserPath path = LaserPath::circle(Vec2(0.5, 0.5), 0.1, 6);
  SpaceTimeField yd = forward_solve(cfg, grid, path, &dense_op);
  SpaceTimeField yi = forward_solve(cfg, grid, path, &pcg_op);
  double scale = yd.values.cwiseAbs().maxCoeff();
  CHECK((yd.values - yi.values).cwiseAbs().maxCoeff() <= 1e-9 * scale);

  cfg.solver.cg_max_iter = 2;  // starve the solver
  DiscreteHeatOperator bad_op(cfg, grid);
  CHECK_THROWS_AS(forward_solve(cfg, grid, path, &bad_op), SolverError);
}

TEST_CASE("grid convergence in time at order >= 1") {
  ModelConfig cfg = testing::desk_config();
  cfg.beam_radius = 0.4;
  cfg.y0_init = FieldSpec::constant(2.0);
  cfg.laser_power = 0.3;
  SlabGrid ref_grid(1.0, 1.0, 0.2, 9, 9, 5, 3200);
  LaserPath ref_path = LaserPath::circle(Vec2(0.5, 0.5), 0.15, 3200);
  Eigen::VectorXd ref = forward_solve(cfg, ref_grid, ref_path).slice(3200);

  double errs[3];
  int nts[3] = {25, 50, 100};
  for (int c = 0; c < 3; ++c) {
    SlabGrid g(1.0, 1.0, 0.2, 9, 9, 5, nts[c]);
    LaserPath pth = LaserPath::circle(Vec2(0.5, 0.5), 0.15, nts[c]);
    Eigen::VectorXd yT = forward_solve(cfg, g, pth).slice(nts[c]);
    errs[c] = std::sqrt((yT - ref).cwiseAbs2().dot(g.volume_weights()));
  }
  double o1 = std::log2(errs[0] / errs[1]);
  double o2 = std::log2(errs[1] / errs[2]);
  CHECK(o1 >= 1.0);
  CHECK(o2 >= 1.0);
}

TEST_CASE("grid convergence in space at order >= 1.8") {
  ModelConfig cfg = testing::desk_config();
  cfg.beam_radius = 0.45;
  const int nt = 40;
  LaserPath path = LaserPath::circle(Vec2(0.5, 0.5), 0.1, nt);

  SlabGrid ref_grid(1.0, 1.0, 0.2, 33, 33, 17, nt);
  Eigen::VectorXd ref = forward_solve(cfg, ref_grid, path).slice(nt);

  int sizes[3][3] = {{5, 5, 3}, {9, 9, 5}, {17, 17, 9}};
  int ratios[3] = {8, 4, 2};
  double errs[3];
  for (int c = 0; c < 3; ++c) {
    SlabGrid g(1.0, 1.0, 0.2, sizes[c][0], sizes[c][1], sizes[c][2], nt);
    Eigen::VectorXd yT = forward_solve(cfg, g, path).slice(nt);
    double acc = 0.0;
    for (int k = 0; k < g.nz(); ++k)
      for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
          int id = g.index(i, j, k);
          int rid = ref_grid.index(i * ratios[c], j * ratios[c], k * ratios[c]);
          double d = yT[id] - ref[rid];
          acc += g.volume_weights()[id] * d * d;
        }
    errs[c] = std::sqrt(acc);
  }
  double o1 = std::log2(errs[0] / errs[1]);
  double o2 = std::log2(errs[1] / errs[2]);
  CHECK(o1 >= 1.8);
  CHECK(o2 >= 1.8);
}

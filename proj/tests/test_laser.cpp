#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "lasopt/laser.hpp"
#include "test_support.hpp"

using namespace lasopt;

TEST_CASE("source peak and radial decay") {
  ModelConfig cfg = testing::desk_config();
  cfg.alpha_abs = 1.0;
  cfg.laser_power = M_PI / 2.0;
  cfg.beam_radius = 1.0;
  // wide domain so the beam center and the ring both land on nodes
  SlabGrid grid(4.0, 4.0, 0.2, 9, 9, 3, 4);
  LaserPath path = LaserPath::constant(Vec2(2.0, 2.0), 4);
  BoundarySourceTrace src = source_field(cfg, grid, path);

  const auto& tops = grid.top_nodes();
  double peak = cfg.source_peak();
  CHECK_THAT(peak, Catch::Matchers::WithinRel(1.0, 1e-14));
  for (size_t r = 0; r < tops.size(); ++r) {
    Vec2 x = grid.top_coord(tops[r]);
    double d = (x - Vec2(2.0, 2.0)).norm();
    double v = src.values(static_cast<Eigen::Index>(r), 2);
    if (d < 1e-14) CHECK_THAT(v, Catch::Matchers::WithinRel(1.0, 1e-14));
    if (std::abs(d - 1.0) < 1e-14)
      CHECK_THAT(v, Catch::Matchers::WithinRel(std::exp(-2.0), 1e-13));
    CHECK(v >= 0.0);
    CHECK(v <= peak);
  }
}

TEST_CASE("top-face quadrature of the source recovers the absorbed power") {
  ModelConfig cfg = testing::desk_config();
  cfg.beam_radius = 0.25;
  // domain much wider than R, resolved well below R
  SlabGrid grid(2.0, 2.0, 0.1, 41, 41, 2, 2);
  LaserPath path = LaserPath::constant(Vec2(1.0, 1.0), 2);
  BoundarySourceTrace src = source_field(cfg, grid, path);
  const auto& tops = grid.top_nodes();
  double absorbed = 0.0;
  for (size_t r = 0; r < tops.size(); ++r)
    absorbed += grid.top_weights()[tops[r]] * src.values(static_cast<Eigen::Index>(r), 0);
  double expected = cfg.alpha_abs * cfg.laser_power;  // Gaussian integral over R^2
  CHECK(std::abs(absorbed - expected) <= 0.01 * expected);
}

TEST_CASE("resolution warning fires for narrow beams") {
  ModelConfig cfg = testing::desk_config();
  SlabGrid grid = testing::desk_grid(4);
  cfg.beam_radius = 0.1;  // below 2*min(hx,hy) = 0.25
  LaserPath path = LaserPath::constant(Vec2(0.5, 0.5), 4);
  CHECK(source_field(cfg, grid, path).under_resolved);
  cfg.beam_radius = 0.3;
  CHECK(!source_field(cfg, grid, path).under_resolved);
}

TEST_CASE("linearized source: zeros, beam center, finite differences") {
  ModelConfig cfg = testing::desk_config();
  SlabGrid grid = testing::desk_grid(10);
  std::mt19937_64 rng(4);
  LaserPath path = testing::wiggly_interior_path(cfg, 10, 21);
  LaserPath zero = LaserPath::constant(Vec2::Zero(), 10);

  BoundarySourceTrace lz = linearized_source(cfg, grid, path, zero);
  CHECK(lz.values.cwiseAbs().maxCoeff() == 0.0);

  // at x = gamma(t) the kernel (x - gamma) vanishes
  SlabGrid coarse(1.0, 1.0, 0.2, 5, 5, 2, 4);
  LaserPath center = LaserPath::constant(Vec2(0.5, 0.5), 4);
  LaserPath dir = LaserPath::constant(Vec2(1.0, -2.0), 4);
  BoundarySourceTrace lc = linearized_source(cfg, coarse, center, dir);
  const auto& tops = coarse.top_nodes();
  for (size_t r = 0; r < tops.size(); ++r)
    if ((coarse.top_coord(tops[r]) - Vec2(0.5, 0.5)).norm() < 1e-14)
      CHECK(lc.values(static_cast<Eigen::Index>(r), 2) == 0.0);

  // central finite difference of the source field
  LaserPath d = testing::random_direction(10, rng, 0.05);
  const double eps = 1e-5;
  LaserPath pp = path, pm = path;
  for (int i = 0; i <= 10; ++i) {
    pp[i] += eps * d[i];
    pm[i] -= eps * d[i];
  }
  Eigen::MatrixXd fd =
      (source_field(cfg, grid, pp).values - source_field(cfg, grid, pm).values) /
      (2 * eps);
  Eigen::MatrixXd lin = linearized_source(cfg, grid, path, d).values;
  double scale = fd.cwiseAbs().maxCoeff();
  CHECK((lin - fd).cwiseAbs().maxCoeff() <= 1e-7 * scale);
}

TEST_CASE("linearized source is linear in the direction") {
  ModelConfig cfg = testing::desk_config();
  SlabGrid grid = testing::desk_grid(8);
  std::mt19937_64 rng(9);
  LaserPath path = testing::wiggly_interior_path(cfg, 8, 2);
  LaserPath d1 = testing::random_direction(8, rng);
  LaserPath d2 = testing::random_direction(8, rng);
  LaserPath combo = d1;
  for (int i = 0; i <= 8; ++i) combo[i] = 1.7 * d1[i] - 0.4 * d2[i];
  Eigen::MatrixXd lhs = linearized_source(cfg, grid, path, combo).values;
  Eigen::MatrixXd rhs = 1.7 * linearized_source(cfg, grid, path, d1).values -
                        0.4 * linearized_source(cfg, grid, path, d2).values;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <=
        1e-14 * std::max(1.0, rhs.cwiseAbs().maxCoeff()));
}

TEST_CASE("second source values and symmetry") {
  ModelConfig cfg = testing::desk_config();
  SlabGrid coarse(1.0, 1.0, 0.2, 5, 5, 2, 4);
  LaserPath center = LaserPath::constant(Vec2(0.5, 0.5), 4);

  // orthogonal directions at the beam center: both terms vanish
  LaserPath e1 = LaserPath::constant(Vec2(1.0, 0.0), 4);
  LaserPath e2 = LaserPath::constant(Vec2(0.0, 1.0), 4);
  BoundarySourceTrace s12 = second_source(cfg, coarse, center, e1, e2);
  const auto& tops = coarse.top_nodes();
  size_t center_row = 0;
  for (size_t r = 0; r < tops.size(); ++r)
    if ((coarse.top_coord(tops[r]) - Vec2(0.5, 0.5)).norm() < 1e-14) center_row = r;
  CHECK(s12.values(static_cast<Eigen::Index>(center_row), 1) == 0.0);

  // equal directions at the beam center: -|d|^2 * e^0
  BoundarySourceTrace s11 = second_source(cfg, coarse, center, e1, e1);
  CHECK_THAT(s11.values(static_cast<Eigen::Index>(center_row), 1),
             Catch::Matchers::WithinRel(-1.0, 1e-14));

  std::mt19937_64 rng(13);
  LaserPath d1 = testing::random_direction(4, rng);
  LaserPath d2 = testing::random_direction(4, rng);
  Eigen::MatrixXd a = second_source(cfg, coarse, center, d1, d2).values;
  Eigen::MatrixXd b = second_source(cfg, coarse, center, d2, d1).values;
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("second source matches the second derivative of the source field") {
  ModelConfig cfg = testing::desk_config();
  SlabGrid grid = testing::desk_grid(6);
  std::mt19937_64 rng(31);
  LaserPath path = testing::wiggly_interior_path(cfg, 6, 8);
  LaserPath d = testing::random_direction(6, rng, 0.1);

  const double eps = 1e-4;
  LaserPath pp = path, pm = path;
  for (int i = 0; i <= 6; ++i) {
    pp[i] += eps * d[i];
    pm[i] -= eps * d[i];
  }
  Eigen::MatrixXd fd2 = (source_field(cfg, grid, pp).values -
                         2.0 * source_field(cfg, grid, path).values +
                         source_field(cfg, grid, pm).values) /
                        (eps * eps);
  Eigen::MatrixXd ss = cfg.c_R() * second_source(cfg, grid, path, d, d).values;
  double scale = fd2.cwiseAbs().maxCoeff();
  CHECK((ss - fd2).cwiseAbs().maxCoeff() <= 1e-5 * scale);
}

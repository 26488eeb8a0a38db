#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "lasopt/level_set.hpp"
#include "lasopt/types.hpp"

namespace lasopt {

// Spatial profile for initial/boundary/target temperatures: a constant, or a
// melt-column profile (one value inside a planar sublevel set, ambient
// outside). The column defaults to the scan region; an explicit disk lets
// targets sit anywhere, including outside the scan region.
struct FieldSpec {
  enum class Kind { Constant, Column };
  Kind kind{Kind::Constant};
  double value{0.0};
  double ambient{0.0};
  std::optional<Vec2> column_center;
  double column_radius{0.0};

  static FieldSpec constant(double v) {
    FieldSpec f;
    f.value = v;
    return f;
  }
  static FieldSpec column(double inside, double ambient_value) {
    FieldSpec f;
    f.kind = Kind::Column;
    f.value = inside;
    f.ambient = ambient_value;
    return f;
  }
  static FieldSpec column_disk(double inside, double ambient_value,
                               const Vec2& center, double radius) {
    FieldSpec f = column(inside, ambient_value);
    f.column_center = center;
    f.column_radius = radius;
    return f;
  }

  double eval(const Vec2& xy, const LevelSetRegion& region) const {
    if (kind == Kind::Constant) return value;
    bool inside;
    if (column_center)
      inside = (xy - *column_center).squaredNorm() <= column_radius * column_radius;
    else
      inside = region.contains(xy);
    return inside ? value : ambient;
  }
};

struct SolverOptions {
  double theta{1.0};          // time-stepping parameter, in [1/2, 1]
  double cg_tol{1e-12};       // relative residual for the iterative solver
  int cg_max_iter{0};         // 0 = 10 * unknowns
  int dense_threshold{2000};  // below this, factorize densely
};

// All physical, cost and window constants plus data descriptors. The Robin
// coefficient and the slab thickness are both called h in the literature;
// here they are h_conv and SlabGrid::thickness.
struct ModelConfig {
  // material and laser
  double rho{1.0};         // density (kg m^-3)
  double c_heat{1.0};      // specific heat (J kg^-1 K^-1)
  double kappa{0.02};      // conductivity (W m^-1 K^-1)
  double h_conv{0.5};      // Robin transfer coefficient (W m^-2 K^-1)
  double alpha_abs{0.8};   // absorption coefficient, in (0,1]
  double laser_power{1.0}; // P (W)
  double beam_radius{0.3}; // R (m)

  // horizon and tracking windows
  double T_final{1.0};
  double r_window{0.2};

  // cost weights
  double lambda_Q{1.0};
  double lambda_Omega{1.0};
  double lambda_gamma{0.1};
  double beta_T{0.0};

  // data descriptors
  FieldSpec y0_init{};
  FieldSpec yB_bottom{};
  FieldSpec yQ_target{};
  FieldSpec yOmega_target{};

  LevelSetRegion region{LevelSetRegion::disk(Vec2(0.5, 0.5), 0.25)};

  SolverOptions solver{};

  double source_peak() const {
    return alpha_abs * 2.0 * laser_power / (M_PI * beam_radius * beam_radius);
  }
  // c_R = 8 alpha P / (pi R^4), the scale of the source derivative
  double c_R() const {
    const double R2 = beam_radius * beam_radius;
    return 8.0 * alpha_abs * laser_power / (M_PI * R2 * R2);
  }

  void validate() const {
    auto positive = [](double v, const char* field) {
      if (!(v > 0.0)) throw ConfigError(field, "must be positive");
    };
    positive(rho, "physics.rho");
    positive(c_heat, "physics.c_heat");
    positive(kappa, "physics.kappa");
    positive(h_conv, "physics.h_conv");
    positive(beam_radius, "physics.beam_radius");
    // zero power / zero tracking weights are accepted as degenerate
    // diagnostic configurations (laser off, seminorm-only cost)
    if (laser_power < 0.0)
      throw ConfigError("physics.laser_power", "must be nonnegative");
    if (!(alpha_abs > 0.0) || alpha_abs > 1.0)
      throw ConfigError("physics.alpha_abs", "must lie in (0, 1]");
    positive(T_final, "time.T_final");
    if (!(r_window > 0.0) || !(r_window < T_final / 3.0))
      throw ConfigError("time.r_window", "must lie in (0, T_final/3)");
    if (lambda_Q < 0.0) throw ConfigError("cost.lambda_Q", "must be nonnegative");
    if (lambda_Omega < 0.0)
      throw ConfigError("cost.lambda_Omega", "must be nonnegative");
    positive(lambda_gamma, "cost.lambda_gamma");
    if (beta_T < 0.0) throw ConfigError("cost.beta_T", "must be nonnegative");
    if (solver.theta < 0.5 || solver.theta > 1.0)
      throw ConfigError("solver.theta", "must lie in [1/2, 1]");
    if (!(solver.cg_tol > 0.0))
      throw ConfigError("solver.cg_tol", "must be positive");
  }

  double tau_min() const { return 3.0 * r_window; }
  double tau_max() const { return T_final; }
};

inline void require_tau_in_range(const ModelConfig& cfg, double tau) {
  if (tau < cfg.tau_min() - 1e-12 || tau > cfg.tau_max() + 1e-12)
    throw std::domain_error("tau = " + std::to_string(tau) +
                            " outside [3r, T] = [" +
                            std::to_string(cfg.tau_min()) + ", " +
                            std::to_string(cfg.tau_max()) + "]");
}

}  // namespace lasopt

#pragma once

#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "lasopt/config.hpp"
#include "lasopt/grid.hpp"
#include "lasopt/optimize.hpp"
#include "lasopt/path.hpp"

namespace lasopt {

using nlohmann::json;

inline constexpr const char* kSpecVersion = "1.0";

// Builtin start/simulation paths selectable from the configuration document.
struct PathSpec {
  std::string kind{"constant"};  // constant | circle
  std::optional<Vec2> center;    // defaults to the region anchor
  double radius{0.0};
  double turns{1.0};

  LaserPath build(int nt, const LevelSetRegion& region) const {
    Vec2 c = center.value_or(region.anchor());
    if (kind == "constant") return LaserPath::constant(c, nt);
    if (kind == "circle") return LaserPath::circle(c, radius, nt, turns);
    throw ConfigError("path.kind", "unknown kind '" + kind + "'");
  }
};

struct OptimizeSettings {
  PenaltySchedule schedule{};
  int max_inner{800};
  unsigned seed{7};
  PathSpec start{};
  std::optional<double> tau0;  // defaults to T
};

struct SimulateSettings {
  std::optional<double> tau;  // defaults to T
  PathSpec path{};
};

struct Problem {
  ModelConfig config;
  SlabGrid grid;
  OptimizeSettings optimize;
  SimulateSettings simulate;
};

namespace detail {

inline double num_at(const json& j, const std::string& scope, const char* key,
                     double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number())
    throw ConfigError(scope + "." + key, "must be a number");
  return j.at(key).get<double>();
}

inline int int_at(const json& j, const std::string& scope, const char* key,
                  int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer())
    throw ConfigError(scope + "." + key, "must be an integer");
  return j.at(key).get<int>();
}

inline Vec2 vec2_at(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2)
    throw ConfigError(field, "must be an array of two numbers");
  return Vec2(j.at(0).get<double>(), j.at(1).get<double>());
}

inline FieldSpec field_spec(const json& j, const std::string& scope) {
  FieldSpec f;
  if (j.is_number()) {
    f.value = j.get<double>();
    return f;
  }
  std::string kind = j.value("kind", "constant");
  if (kind == "constant") {
    f.value = num_at(j, scope, "value", 0.0);
  } else if (kind == "column") {
    f.kind = FieldSpec::Kind::Column;
    f.value = num_at(j, scope, "inside", 0.0);
    f.ambient = num_at(j, scope, "ambient", 0.0);
    if (j.contains("center")) {
      f.column_center = vec2_at(j.at("center"), scope + ".center");
      f.column_radius = num_at(j, scope, "radius", 0.0);
      if (!(f.column_radius > 0.0))
        throw ConfigError(scope + ".radius", "column radius must be positive");
    }
  } else {
    throw ConfigError(scope + ".kind", "unknown field kind '" + kind + "'");
  }
  return f;
}

inline LevelSetRegion region_spec(const json& j) {
  std::string kind = j.value("kind", "disk");
  if (kind == "disk") {
    Vec2 c = j.contains("center") ? vec2_at(j.at("center"), "region.center")
                                  : Vec2(0.5, 0.5);
    double radius = num_at(j, "region", "radius", 0.25);
    if (!(radius > 0.0)) throw ConfigError("region.radius", "must be positive");
    return LevelSetRegion::disk(c, radius);
  }
  if (kind == "superellipse") {
    Vec2 c = j.contains("center") ? vec2_at(j.at("center"), "region.center")
                                  : Vec2(0.5, 0.5);
    Vec2 ax = j.contains("semi_axes")
                  ? vec2_at(j.at("semi_axes"), "region.semi_axes")
                  : Vec2(0.25, 0.25);
    int degree = int_at(j, "region", "degree", 4);
    if (degree < 4 || degree % 2 != 0)
      throw ConfigError("region.degree", "must be even and >= 4");
    return LevelSetRegion::superellipse(c, ax, degree);
  }
  throw ConfigError("region.kind", "unknown kind '" + kind + "'");
}

inline PathSpec path_spec(const json& j, const std::string& scope) {
  PathSpec p;
  p.kind = j.value("kind", "constant");
  if (p.kind != "constant" && p.kind != "circle")
    throw ConfigError(scope + ".kind", "unknown kind '" + p.kind + "'");
  if (j.contains("center")) p.center = vec2_at(j.at("center"), scope + ".center");
  p.radius = num_at(j, scope, "radius", 0.0);
  p.turns = num_at(j, scope, "turns", 1.0);
  return p;
}

}  // namespace detail

inline Problem load_problem(const json& doc) {
  if (!doc.contains("spec_version"))
    throw ConfigError("spec_version", "missing (expected \"" +
                                          std::string(kSpecVersion) + "\")");
  const std::string version = doc.at("spec_version").get<std::string>();
  if (version != kSpecVersion)
    throw ConfigError("spec_version", "unsupported version '" + version + "'");

  ModelConfig cfg;
  const json phys = doc.value("physics", json::object());
  cfg.rho = detail::num_at(phys, "physics", "rho", cfg.rho);
  cfg.c_heat = detail::num_at(phys, "physics", "c_heat", cfg.c_heat);
  cfg.kappa = detail::num_at(phys, "physics", "kappa", cfg.kappa);
  cfg.h_conv = detail::num_at(phys, "physics", "h_conv", cfg.h_conv);
  cfg.alpha_abs = detail::num_at(phys, "physics", "alpha_abs", cfg.alpha_abs);
  cfg.laser_power = detail::num_at(phys, "physics", "laser_power", cfg.laser_power);
  cfg.beam_radius = detail::num_at(phys, "physics", "beam_radius", cfg.beam_radius);

  const json time = doc.value("time", json::object());
  cfg.T_final = detail::num_at(time, "time", "T_final", cfg.T_final);
  cfg.r_window = detail::num_at(time, "time", "r_window", cfg.r_window);
  const int nt = detail::int_at(time, "time", "nt", 100);

  const json cost = doc.value("cost", json::object());
  cfg.lambda_Q = detail::num_at(cost, "cost", "lambda_Q", cfg.lambda_Q);
  cfg.lambda_Omega = detail::num_at(cost, "cost", "lambda_Omega", cfg.lambda_Omega);
  cfg.lambda_gamma = detail::num_at(cost, "cost", "lambda_gamma", cfg.lambda_gamma);
  cfg.beta_T = detail::num_at(cost, "cost", "beta_T", cfg.beta_T);

  if (doc.contains("region")) cfg.region = detail::region_spec(doc.at("region"));

  const json fields = doc.value("fields", json::object());
  if (fields.contains("y0")) cfg.y0_init = detail::field_spec(fields.at("y0"), "fields.y0");
  if (fields.contains("yB")) cfg.yB_bottom = detail::field_spec(fields.at("yB"), "fields.yB");
  if (fields.contains("yQ")) cfg.yQ_target = detail::field_spec(fields.at("yQ"), "fields.yQ");
  if (fields.contains("yOmega"))
    cfg.yOmega_target = detail::field_spec(fields.at("yOmega"), "fields.yOmega");

  const json solver = doc.value("solver", json::object());
  cfg.solver.theta = detail::num_at(solver, "solver", "theta", cfg.solver.theta);
  cfg.solver.cg_tol = detail::num_at(solver, "solver", "cg_tol", cfg.solver.cg_tol);
  cfg.solver.cg_max_iter = detail::int_at(solver, "solver", "cg_max_iter", 0);
  cfg.solver.dense_threshold =
      detail::int_at(solver, "solver", "dense_threshold", cfg.solver.dense_threshold);

  cfg.validate();

  const json gj = doc.value("grid", json::object());
  SlabGrid grid(detail::num_at(gj, "grid", "Lx", 1.0),
                detail::num_at(gj, "grid", "Ly", 1.0),
                detail::num_at(gj, "grid", "thickness", 0.2),
                detail::int_at(gj, "grid", "nx", 9),
                detail::int_at(gj, "grid", "ny", 9),
                detail::int_at(gj, "grid", "nz", 5), nt);

  OptimizeSettings opt;
  const json oj = doc.value("optimize", json::object());
  opt.schedule.kappa0 = detail::num_at(oj, "optimize", "kappa0", opt.schedule.kappa0);
  opt.schedule.growth = detail::num_at(oj, "optimize", "growth", opt.schedule.growth);
  opt.schedule.outer = detail::int_at(oj, "optimize", "outer", opt.schedule.outer);
  opt.schedule.tol0 = detail::num_at(oj, "optimize", "tol0", opt.schedule.tol0);
  opt.schedule.validate();
  opt.max_inner = detail::int_at(oj, "optimize", "max_inner", opt.max_inner);
  opt.seed = static_cast<unsigned>(detail::int_at(oj, "optimize", "seed", 7));
  if (oj.contains("start")) opt.start = detail::path_spec(oj.at("start"), "optimize.start");
  if (oj.contains("tau0")) opt.tau0 = detail::num_at(oj, "optimize", "tau0", cfg.T_final);

  SimulateSettings sim;
  const json sj = doc.value("simulate", json::object());
  if (sj.contains("tau")) sim.tau = detail::num_at(sj, "simulate", "tau", cfg.T_final);
  if (sj.contains("path")) sim.path = detail::path_spec(sj.at("path"), "simulate.path");

  return Problem{std::move(cfg), std::move(grid), std::move(opt), std::move(sim)};
}

inline Problem load_problem_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("(file)", "cannot open '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("(file)", std::string("JSON parse failure: ") + e.what());
  }
  return load_problem(doc);
}

// Fully resolved configuration echo, embedded in every emitted report.
inline json resolved_config(const Problem& p) {
  const ModelConfig& c = p.config;
  json j;
  j["spec_version"] = kSpecVersion;
  j["physics"] = {{"rho", c.rho},          {"c_heat", c.c_heat},
                  {"kappa", c.kappa},      {"h_conv", c.h_conv},
                  {"alpha_abs", c.alpha_abs}, {"laser_power", c.laser_power},
                  {"beam_radius", c.beam_radius}};
  j["time"] = {{"T_final", c.T_final}, {"r_window", c.r_window}, {"nt", p.grid.nt()}};
  j["cost"] = {{"lambda_Q", c.lambda_Q},
               {"lambda_Omega", c.lambda_Omega},
               {"lambda_gamma", c.lambda_gamma},
               {"beta_T", c.beta_T}};
  j["grid"] = {{"Lx", p.grid.Lx()},   {"Ly", p.grid.Ly()},
               {"thickness", p.grid.thickness()}, {"nx", p.grid.nx()},
               {"ny", p.grid.ny()},   {"nz", p.grid.nz()}};
  j["solver"] = {{"theta", c.solver.theta},
                 {"cg_tol", c.solver.cg_tol},
                 {"cg_max_iter", c.solver.cg_max_iter},
                 {"dense_threshold", c.solver.dense_threshold}};
  j["optimize"] = {{"kappa0", p.optimize.schedule.kappa0},
                   {"growth", p.optimize.schedule.growth},
                   {"outer", p.optimize.schedule.outer},
                   {"tol0", p.optimize.schedule.tol0},
                   {"max_inner", p.optimize.max_inner},
                   {"seed", p.optimize.seed}};
  return j;
}

}  // namespace lasopt

#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lasopt/config_io.hpp"
#include "lasopt/diagnostics.hpp"
#include "lasopt/objective.hpp"
#include "lasopt/optimize.hpp"
#include "lasopt/pde.hpp"

namespace lasopt {

namespace fs = std::filesystem;

inline std::string timestamp_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return os.str();
}

// Run directories are unique per run: command + timestamp + seed, with a
// numeric suffix on collision.
inline fs::path make_run_dir(const fs::path& base, const std::string& command,
                             unsigned seed) {
  fs::create_directories(base);
  std::string stem = command + "-" + timestamp_now() + "-seed" + std::to_string(seed);
  fs::path dir = base / stem;
  for (int k = 1; fs::exists(dir); ++k) dir = base / (stem + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

inline void write_json(const fs::path& file, const json& j) {
  std::ofstream out(file);
  out << j.dump(2) << "\n";
}

inline json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  json j;
  in >> j;
  return j;
}

// --- CSV ------------------------------------------------------------------

inline void write_snapshot_csv(const fs::path& file, const SlabGrid& grid,
                               const Eigen::VectorXd& slice) {
  std::ofstream out(file);
  out << "x,y,z,value\n";
  out << std::setprecision(17);
  for (int id = 0; id < grid.node_count(); ++id) {
    Eigen::Vector3d c = grid.coord(id);
    out << c.x() << "," << c.y() << "," << c.z() << "," << slice[id] << "\n";
  }
}

inline void write_path_csv(const fs::path& file, const LaserPath& path, double T) {
  std::ofstream out(file);
  out << "t,x,y\n";
  out << std::setprecision(17);
  const double dt = T / path.nt();
  for (int i = 0; i <= path.nt(); ++i)
    out << i * dt << "," << path[i].x() << "," << path[i].y() << "\n";
}

inline LaserPath read_path_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<Vec2> pts;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    double v[3] = {0, 0, 0};
    for (int c = 0; c < 3 && std::getline(ls, tok, ','); ++c) v[c] = std::stod(tok);
    pts.emplace_back(v[1], v[2]);
  }
  return LaserPath(std::move(pts));
}

inline void write_multiplier_csv(const fs::path& file,
                                 const MultiplierEstimate& m, double T) {
  std::ofstream out(file);
  out << "t,lambda,active\n";
  out << std::setprecision(17);
  const int nt = static_cast<int>(m.lambda.size()) - 1;
  const double dt = T / nt;
  std::vector<char> act(static_cast<size_t>(nt) + 1, 0);
  for (int i : m.active_set) act[static_cast<size_t>(i)] = 1;
  for (int i = 0; i <= nt; ++i)
    out << i * dt << "," << m.lambda[i] << "," << int(act[static_cast<size_t>(i)]) << "\n";
}

inline void write_iterations_csv(const fs::path& file, const OptimReport& rep) {
  std::ofstream out(file);
  out << "outer,kappa,cost,penalty,max_violation,grad_norm,inner_iterations,converged\n";
  out << std::setprecision(17);
  for (size_t i = 0; i < rep.outers.size(); ++i) {
    const auto& r = rep.outers[i];
    out << i << "," << r.kappa << "," << r.cost << "," << r.penalty << ","
        << r.max_violation << "," << r.grad_norm << "," << r.inner_iterations
        << "," << (r.converged ? 1 : 0) << "\n";
  }
}

inline void write_residuals_csv(const fs::path& file,
                                const RegularityReport& rep, double T) {
  std::ofstream out(file);
  out << "t,ode_residual\n";
  out << std::setprecision(17);
  const int nt = static_cast<int>(rep.ode_residual.size()) - 1;
  const double dt = T / nt;
  for (int i = 0; i <= nt; ++i) out << i * dt << "," << rep.ode_residual[i] << "\n";
}

// --- report serialization ---------------------------------------------------

inline json to_json(const CostBreakdown& c) {
  return json{{"tracking_Q", c.tracking_Q},
              {"tracking_Omega", c.tracking_Omega},
              {"gradient_energy", c.gradient_energy},
              {"path_seminorm_term", c.path_seminorm_term},
              {"time_term", c.time_term},
              {"total", c.total}};
}

inline json to_json(const MultiplierEstimate& m) {
  return json{{"lambda", std::vector<double>(m.lambda.data(), m.lambda.data() + m.lambda.size())},
              {"mu", m.mu},
              {"active_set", m.active_set},
              {"eps_act", m.eps_act}};
}

inline json to_json(const OptimReport& rep) {
  json outs = json::array();
  for (const auto& r : rep.outers)
    outs.push_back(json{{"kappa", r.kappa},
                        {"cost", r.cost},
                        {"penalty", r.penalty},
                        {"max_violation", r.max_violation},
                        {"grad_norm", r.grad_norm},
                        {"inner_iterations", r.inner_iterations},
                        {"converged", r.converged},
                        {"bound_ok", r.bound_ok}});
  return json{{"tau", rep.tau},
              {"outer_iterations", outs},
              {"multiplier", to_json(rep.multiplier)},
              {"aborted", rep.aborted},
              {"feasible_reference_cost", rep.feasible_reference_cost}};
}

inline json to_json(const KKTReport& r) {
  return json{{"verdict", r.pass ? "PASS" : "FAIL"},
              {"resid_gamma", r.resid_gamma},
              {"resid_tau", r.resid_tau},
              {"complementarity", r.complementarity},
              {"min_lambda", r.min_lambda},
              {"lambda_l1", r.lambda_l1},
              {"grad_tau", r.grad_tau_value},
              {"tau_cone_ok", r.tau_cone_ok},
              {"tolerances",
               {{"gamma", r.tol_gamma}, {"tau", r.tol_tau}, {"complementarity", r.tol_comp}}}};
}

inline json to_json(const SocReport& r) {
  return json{{"verdict", r.verdict},
              {"lambda_min_subspace", r.lambda_min_subspace},
              {"min_sampled", r.min_sampled},
              {"margin", r.margin},
              {"eps_semi", r.eps_semi},
              {"subspace_dim", r.subspace_dim},
              {"hessian_products", r.hessian_products},
              {"attaining_from_subspace", r.attaining_from_subspace}};
}

inline json to_json(const RegularityReport& r) {
  json j{{"verdict", "REPORT"},
         {"v_start", r.v_start},
         {"v_end", r.v_end},
         {"h2_seminorm", r.h2_seminorm},
         {"ode_residual_l2", r.ode_residual_l2},
         {"ode_residual_max", r.ode_residual_max}};
  if (r.has_appendix) j["appendix_residual_l2"] = r.appendix_residual_l2;
  return j;
}

// --- optimizer state persistence --------------------------------------------

// An optimize run leaves enough state behind for the check commands to
// recompute fields: final path, tau, final kappa and the multiplier.
inline void write_state_dir(const fs::path& dir, const Problem& problem,
                            const OptimReport& rep) {
  write_path_csv(dir / "final_path.csv", rep.path, problem.config.T_final);
  write_multiplier_csv(dir / "multiplier.csv", rep.multiplier, problem.config.T_final);
  json st{{"tau", rep.tau},
          {"kappa_final", rep.outers.empty() ? 0.0 : rep.outers.back().kappa},
          {"mu", rep.multiplier.mu},
          {"inner_tol_final",
           rep.outers.empty() ? 0.0
                              : (rep.outers.back().grad_norm)},
          {"config", resolved_config(problem)}};
  write_json(dir / "state.json", st);
}

struct LoadedState {
  LaserPath path;
  double tau{0.0};
  double kappa_final{0.0};
  MultiplierEstimate multiplier;
  double inner_tol_final{0.0};
};

inline LoadedState load_state_dir(const fs::path& dir, const Problem& problem) {
  LoadedState st;
  st.path = read_path_csv(dir / "final_path.csv");
  json sj = read_json(dir / "state.json");
  st.tau = sj.at("tau").get<double>();
  st.kappa_final = sj.value("kappa_final", 0.0);
  st.inner_tol_final = sj.value("inner_tol_final", 0.0);
  // rebuild the multiplier from the CSV
  std::ifstream in(dir / "multiplier.csv");
  if (!in) throw std::runtime_error("cannot open multiplier.csv");
  std::string line;
  std::getline(in, line);
  std::vector<double> lam;
  std::vector<int> act;
  int idx = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    double v[3] = {0, 0, 0};
    for (int c = 0; c < 3 && std::getline(ls, tok, ','); ++c) v[c] = std::stod(tok);
    lam.push_back(v[1]);
    if (v[2] > 0.5) act.push_back(idx);
    ++idx;
  }
  st.multiplier.lambda = Eigen::Map<Eigen::VectorXd>(lam.data(), static_cast<Eigen::Index>(lam.size()));
  st.multiplier.active_set = std::move(act);
  st.multiplier.mu = sj.value("mu", 0.0);
  st.multiplier.eps_act = 1e-6 * problem.config.region.scale();
  return st;
}

}  // namespace lasopt

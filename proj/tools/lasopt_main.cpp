#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "lasopt/config_io.hpp"
#include "lasopt/diagnostics.hpp"
#include "lasopt/io.hpp"
#include "lasopt/objective.hpp"
#include "lasopt/optimize.hpp"
#include "lasopt/pde.hpp"

namespace {

using namespace lasopt;

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitAborted = 4;

struct CommonArgs {
  std::string config_file;
  std::string out_dir{"out"};
};

json make_manifest(const CommonArgs& args, const std::string& command,
                   unsigned seed, double wall_ms, int iterations) {
  return json{{"config", args.config_file}, {"command", command},
              {"seed", seed},               {"wall_ms", wall_ms},
              {"iterations", iterations},   {"generated_at", timestamp_now()}};
}

// Seeded wiggly path kept strictly inside the scan region; used when a check
// runs without a prior optimize state.
LaserPath random_interior_path(const Problem& p, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const int nt = p.grid.nt();
  const LevelSetRegion& region = p.config.region;
  double spread = 0.2 * std::sqrt(region.scale());
  LaserPath path = LaserPath::constant(region.anchor(), nt);
  double a1 = unif(rng), a2 = unif(rng), b1 = unif(rng), b2 = unif(rng);
  for (int i = 0; i <= nt; ++i) {
    double t = double(i) / nt;
    Vec2 c = region.anchor() +
             spread * Vec2(a1 * std::sin(2 * M_PI * t) + a2 * std::cos(4 * M_PI * t),
                           b1 * std::cos(2 * M_PI * t) + b2 * std::sin(4 * M_PI * t));
    path[i] = region.project_inside(c, 0.05 * region.scale());
  }
  return path;
}

LaserPath random_direction(int nt, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  LaserPath d = LaserPath::constant(Vec2::Zero(), nt);
  for (int i = 0; i <= nt; ++i) d[i] = Vec2(gauss(rng), gauss(rng));
  return d;
}

int cmd_simulate(const CommonArgs& args, const std::string& path_file,
                 std::optional<double> tau_flag) {
  Problem p = load_problem_file(args.config_file);
  LaserPath path;
  if (!path_file.empty()) {
    path = read_path_csv(path_file);
    if (path.nodes() != p.grid.nt() + 1) {
      std::cerr << "config error: field 'simulate.path': path file has "
                << path.nodes() << " nodes, grid expects " << p.grid.nt() + 1
                << "\n";
      return kExitConfig;
    }
  } else {
    path = p.simulate.path.build(p.grid.nt(), p.config.region);
  }
  double tau = tau_flag.value_or(p.simulate.tau.value_or(p.config.T_final));
  require_tau_in_range(p.config, tau);

  auto t0 = std::chrono::steady_clock::now();
  fs::path dir = make_run_dir(args.out_dir, "simulate", p.optimize.seed);
  SpaceTimeField y = forward_solve(p.config, p.grid, path);
  for (int n = 0; n <= p.grid.nt(); ++n) {
    char name[32];
    std::snprintf(name, sizeof(name), "snap_%04d.csv", n);
    write_snapshot_csv(dir / name, p.grid, y.slice(n));
  }
  CostBreakdown cost = eval_cost(p.config, p.grid, y, path, tau);
  json rep{{"cost", to_json(cost)}, {"tau", tau}, {"config", resolved_config(p)}};
  write_json(dir / "cost_breakdown.json", rep);
  write_path_csv(dir / "path.csv", path, p.config.T_final);
  double ms = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - t0).count();
  write_json(dir / "manifest.json",
             make_manifest(args, "simulate", p.optimize.seed, ms, p.grid.nt()));
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_optimize(const CommonArgs& args, std::optional<double> kappa0,
                 std::optional<double> growth, std::optional<int> outer,
                 std::optional<double> tol) {
  Problem p = load_problem_file(args.config_file);
  PenaltySchedule sched = p.optimize.schedule;
  if (kappa0) sched.kappa0 = *kappa0;
  if (growth) sched.growth = *growth;
  if (outer) sched.outer = *outer;
  if (tol) sched.tol0 = *tol;
  sched.validate();

  LaserPath start = p.optimize.start.build(p.grid.nt(), p.config.region);
  double tau0 = p.optimize.tau0.value_or(p.config.T_final);

  InnerOptions opts;
  opts.max_iterations = p.optimize.max_inner;

  auto t0 = std::chrono::steady_clock::now();
  fs::path dir = make_run_dir(args.out_dir, "optimize", p.optimize.seed);
  OptimReport rep = penalty_loop(p.config, p.grid, sched, start, tau0, opts);
  double ms = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - t0).count();

  json rj = to_json(rep);
  rj["config"] = resolved_config(p);
  write_json(dir / "optim_report.json", rj);
  write_iterations_csv(dir / "iterations.csv", rep);
  write_state_dir(dir, p, rep);
  int total_inner = 0;
  for (const auto& r : rep.outers) total_inner += r.inner_iterations;
  write_json(dir / "manifest.json",
             make_manifest(args, "optimize", p.optimize.seed, ms, total_inner));
  std::cout << dir.string() << "\n";
  return rep.aborted ? kExitAborted : 0;
}

int cmd_grad_check(const CommonArgs& args, const std::string& state_dir,
                   unsigned seed_flag, int n_dirs) {
  Problem p = load_problem_file(args.config_file);
  unsigned seed = seed_flag ? seed_flag : p.optimize.seed;
  LaserPath path;
  double tau;
  if (!state_dir.empty()) {
    LoadedState st = load_state_dir(state_dir, p);
    path = st.path;
    tau = st.tau;
  } else {
    path = random_interior_path(p, seed);
    // interior tau, kept off the time-grid nodes
    tau = 0.5 * (p.config.tau_min() + p.config.tau_max()) +
          0.37 * p.config.T_final / p.grid.nt();
  }

  auto t0 = std::chrono::steady_clock::now();
  DiscreteHeatOperator op(p.config, p.grid);
  SpaceTimeField state = forward_solve(p.config, p.grid, path, &op);
  SpaceTimeField adj = adjoint_solve(p.config, p.grid, path, tau, state, &op);
  PathGradient pg = grad_gamma(p.config, p.grid, path, tau, state, adj);
  double gt = grad_tau(p.config, p.grid, path, tau, state);

  std::mt19937_64 rng(seed);
  const double eps = 1e-5;
  double max_rel = 0.0;
  json dirs = json::array();
  for (int d = 0; d < n_dirs; ++d) {
    LaserPath dg = random_direction(p.grid.nt(), rng);
    double predicted = pg.action(dg);
    Eigen::VectorXd x = path.flatten();
    Eigen::VectorXd dx = dg.flatten();
    double fp = reduced_cost(p.config, p.grid, LaserPath::unflatten(x + eps * dx), tau, &op);
    double fm = reduced_cost(p.config, p.grid, LaserPath::unflatten(x - eps * dx), tau, &op);
    double fd = (fp - fm) / (2 * eps);
    double rel = std::abs(predicted - fd) / std::max(std::abs(fd), 1e-14);
    max_rel = std::max(max_rel, rel);
    dirs.push_back(json{{"direction", d}, {"adjoint", predicted}, {"fd", fd}, {"rel_error", rel}});
  }
  const double eps_t = 1e-6;
  double fp = reduced_cost(p.config, p.grid, path, tau + eps_t, &op);
  double fm = reduced_cost(p.config, p.grid, path, tau - eps_t, &op);
  double fd_tau = (fp - fm) / (2 * eps_t);
  double rel_tau = std::abs(gt - fd_tau) / std::max(std::abs(fd_tau), 1e-14);
  max_rel = std::max(max_rel, rel_tau);

  const double tol = 1e-6;
  bool pass = max_rel <= tol;
  fs::path dir = make_run_dir(args.out_dir, "grad-check", seed);
  double ms = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - t0).count();
  json rep{{"verdict", pass ? "PASS" : "FAIL"},
           {"max_rel_error", max_rel},
           {"tolerance", tol},
           {"tau", tau},
           {"grad_tau", {{"adjoint", gt}, {"fd", fd_tau}, {"rel_error", rel_tau}}},
           {"directions", dirs},
           {"config", resolved_config(p)}};
  write_json(dir / "grad_check.json", rep);
  write_json(dir / "manifest.json", make_manifest(args, "grad-check", seed, ms, n_dirs));
  std::cout << dir.string() << "\n";
  return pass ? 0 : 1;
}

int cmd_kkt_check(const CommonArgs& args, const std::string& state_dir) {
  Problem p = load_problem_file(args.config_file);
  LoadedState st;
  try {
    st = load_state_dir(state_dir, p);
  } catch (const std::exception& e) {
    std::cerr << "config error: field 'state-dir': " << e.what() << "\n";
    return kExitConfig;
  }
  auto t0 = std::chrono::steady_clock::now();
  double tol = std::max(10.0 * st.inner_tol_final, 1e-10);
  KKTReport kkt = kkt_check(p.config, p.grid, st.path, st.tau, st.multiplier, tol);

  DiscreteHeatOperator op(p.config, p.grid);
  SpaceTimeField state = forward_solve(p.config, p.grid, st.path, &op);
  SpaceTimeField adj = adjoint_solve(p.config, p.grid, st.path, st.tau, state, &op);
  RegularityReport reg =
      regularity_check(p.config, p.grid, st.path, st.tau, st.multiplier, adj);

  fs::path dir = make_run_dir(args.out_dir, "kkt-check", p.optimize.seed);
  json kj = to_json(kkt);
  kj["config"] = resolved_config(p);
  write_json(dir / "kkt_report.json", kj);
  json rj = to_json(reg);
  rj["config"] = resolved_config(p);
  write_json(dir / "regularity_report.json", rj);
  write_residuals_csv(dir / "regularity_residuals.csv", reg, p.config.T_final);
  double ms = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - t0).count();
  write_json(dir / "manifest.json",
             make_manifest(args, "kkt-check", p.optimize.seed, ms, 0));
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_soc_check(const CommonArgs& args, const std::string& state_dir) {
  Problem p = load_problem_file(args.config_file);
  LoadedState st;
  try {
    st = load_state_dir(state_dir, p);
  } catch (const std::exception& e) {
    std::cerr << "config error: field 'state-dir': " << e.what() << "\n";
    return kExitConfig;
  }
  auto t0 = std::chrono::steady_clock::now();
  double grad_tol = std::max(st.inner_tol_final, 1e-8);
  CriticalCone cone =
      critical_cone(p.config, p.grid, st.path, st.tau, st.multiplier, -1.0, -1.0, grad_tol);
  SocOptions so;
  so.seed = p.optimize.seed;
  SocReport soc = soc_check(p.config, p.grid, st.path, st.tau, st.multiplier, cone, so);

  fs::path dir = make_run_dir(args.out_dir, "soc-check", p.optimize.seed);
  json sj = to_json(soc);
  sj["cone"] = {{"strongly_active", cone.strongly_active},
                {"weakly_active", cone.weakly_active},
                {"subspace_dim", static_cast<int>(cone.basis.cols())},
                {"eps_act", cone.eps_act},
                {"eps_mult", cone.eps_mult}};
  sj["config"] = resolved_config(p);
  write_json(dir / "soc_report.json", sj);
  double ms = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - t0).count();
  write_json(dir / "manifest.json",
             make_manifest(args, "soc-check", p.optimize.seed, ms, soc.hessian_products));
  std::cout << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("LASOPT_THREADS"))
    Eigen::setNbThreads(std::max(1, std::atoi(threads)));

  CLI::App app{"laser-path optimal control toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string path_file, state_dir;
  std::optional<double> tau_flag, kappa0, growth, tol;
  std::optional<int> outer;
  unsigned seed_flag = 0;
  int n_dirs = 10;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_file, "configuration JSON")->required();
    sub->add_option("--out", args.out_dir, "output base directory");
  };

  CLI::App* sim = app.add_subcommand("simulate", "run the forward heat solve");
  add_common(sim);
  sim->add_option("--path", path_file, "path CSV (t,x,y) with nt+1 rows");
  sim->add_option("--tau", tau_flag, "treatment time for the cost breakdown");

  CLI::App* opt = app.add_subcommand("optimize", "quadratic-penalty optimization");
  add_common(opt);
  opt->add_option("--kappa0", kappa0, "initial penalty parameter");
  opt->add_option("--growth", growth, "penalty growth factor");
  opt->add_option("--outer", outer, "outer iterations");
  opt->add_option("--tol", tol, "base inner tolerance");

  CLI::App* gc = app.add_subcommand("grad-check", "adjoint gradient vs finite differences");
  add_common(gc);
  gc->add_option("--state", state_dir, "state directory of a prior optimize run");
  gc->add_option("--seed", seed_flag, "RNG seed override");
  gc->add_option("--directions", n_dirs, "number of random directions");

  CLI::App* kk = app.add_subcommand("kkt-check", "first-order conditions at a computed solution");
  add_common(kk);
  kk->add_option("--state", state_dir, "state directory of a prior optimize run")->required();

  CLI::App* sc = app.add_subcommand("soc-check", "second-order conditions on the critical cone");
  add_common(sc);
  sc->add_option("--state", state_dir, "state directory of a prior optimize run")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(args, path_file, tau_flag);
    if (opt->parsed()) return cmd_optimize(args, kappa0, growth, outer, tol);
    if (gc->parsed()) return cmd_grad_check(args, state_dir, seed_flag, n_dirs);
    if (kk->parsed()) return cmd_kkt_check(args, state_dir);
    if (sc->parsed()) return cmd_soc_check(args, state_dir);
  } catch (const lasopt::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const lasopt::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

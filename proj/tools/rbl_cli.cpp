// rbl: command-line front end for phantom generation, synthetic data,
// Landweber / RBL reconstructions and noise sweeps.

#include "rbl/errors.hpp"
#include "rbl/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using rbl::ExperimentConfig;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kInvalid = 2;
constexpr int kSolverFailure = 3;

// Command-line overrides; unset options leave the config file's values alone.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<long> n, q, refine;
  std::optional<double> noise, tau, sigma_start, floor, solver_tol;
  std::optional<std::string> omega, setting, clamp;
  std::optional<std::vector<double>> box;
  std::optional<std::int64_t> max_outer, max_inner, max_total;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "noise seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--n", o.n, "interior nodes per side");
  cmd->add_option("--q", o.q, "subdomains per side");
  cmd->add_option("--refine", o.refine, "data-generation refinement factor");
  cmd->add_option("--noise", o.noise, "relative noise level");
  cmd->add_option("--setting", o.setting, "full or partial");
  cmd->add_option("--partial-box", o.box, "x0 x1 y0 y1 of the measured region")->expected(4);
  cmd->add_option("--sigma-start", o.sigma_start, "constant initial guess");
  cmd->add_option("--tau", o.tau, "discrepancy parameter (> 2)");
  cmd->add_option("--omega", o.omega, "damping, a positive number or 'auto'");
  cmd->add_option("--max-outer", o.max_outer, "RBL outer iteration cap");
  cmd->add_option("--max-inner", o.max_inner, "RBL inner iterations per outer iteration");
  cmd->add_option("--max-total", o.max_total, "Landweber / total inner iteration cap");
  cmd->add_option("--solver-tol", o.solver_tol, "relative residual of the linear solver");
  cmd->add_option("--positivity-floor", o.floor, "smallest admissible parameter value");
  cmd->add_option("--clamp", o.clamp, "abort or clamp when the floor is crossed");
}

ExperimentConfig build_config(const Overrides& o) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) {
    std::ifstream is(o.config_path);
    json j;
    try {
      is >> j;
    } catch (const json::exception& e) {
      throw rbl::InvalidArgument(std::string("cannot parse config: ") + e.what());
    }
    rbl::from_json(j, cfg);
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out_dir = *o.out;
  if (o.n) cfg.n = *o.n;
  if (o.q) cfg.q = *o.q;
  if (o.refine) cfg.refine = *o.refine;
  if (o.noise) cfg.noise_level = *o.noise;
  if (o.setting) cfg.setting = rbl::setting_from_string(*o.setting);
  if (o.box) cfg.partial_box = {(*o.box)[0], (*o.box)[1], (*o.box)[2], (*o.box)[3]};
  if (o.sigma_start) cfg.sigma_start = *o.sigma_start;
  if (o.tau) cfg.solver.tau = *o.tau;
  if (o.omega) {
    if (*o.omega == "auto") {
      cfg.solver.omega.reset();
    } else {
      try {
        cfg.solver.omega = std::stod(*o.omega);
      } catch (const std::exception&) {
        throw rbl::InvalidArgument("--omega must be a number or 'auto'");
      }
    }
  }
  if (o.max_outer) cfg.solver.max_outer = *o.max_outer;
  if (o.max_inner) cfg.solver.max_inner = *o.max_inner;
  if (o.max_total) cfg.solver.max_total = *o.max_total;
  if (o.solver_tol) cfg.solver.solver_tol = *o.solver_tol;
  if (o.floor) cfg.solver.positivity_floor = *o.floor;
  if (o.clamp) {
    if (*o.clamp == "abort") cfg.solver.clamp_policy = rbl::ClampPolicy::abort;
    else if (*o.clamp == "clamp") cfg.solver.clamp_policy = rbl::ClampPolicy::clamp;
    else throw rbl::InvalidArgument("--clamp must be abort or clamp");
  }
  cfg.validate();
  // A zero step never moves; the command line insists on a real damping.
  if (cfg.solver.omega && !(*cfg.solver.omega > 0.0)) throw rbl::InvalidArgument("omega must be positive");
  return cfg;
}

std::filesystem::path out_dir(const ExperimentConfig& cfg) {
  std::filesystem::path dir = cfg.out_dir.empty() ? std::filesystem::path(".") : std::filesystem::path(cfg.out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

template <class F>
void write_file(const std::filesystem::path& path, F&& fn) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw rbl::InvalidArgument("cannot write " + path.string());
  fn(os);
}

int cmd_phantom(const ExperimentConfig& cfg) {
  const rbl::Grid grid = rbl::build_grid(cfg.n);
  const rbl::Partition part = rbl::build_partition(grid, cfg.q);
  const rbl::ParameterField sigma = rbl::rasterize_phantom(cfg.phantom, part);
  const auto path = out_dir(cfg) / "sigma_truth.csv";
  write_file(path, [&](std::ostream& os) { rbl::write_grid_csv(os, sigma.values(), cfg.q, rbl::to_string(cfg.setting)); });
  std::cout << path.string() << '\n';
  return kOk;
}

int cmd_forward(const ExperimentConfig& cfg) {
  const rbl::Problem problem(cfg);
  const auto dir = out_dir(cfg);
  const std::string setting = rbl::to_string(cfg.setting);
  const auto& grid = problem.system().grid();
  write_file(dir / "sigma_truth.csv",
             [&](std::ostream& os) { rbl::write_grid_csv(os, problem.truth().values(), cfg.q, setting); });
  write_file(dir / "u_exact.csv", [&](std::ostream& os) { rbl::write_nodal_csv(os, grid, problem.data().exact, setting); });
  write_file(dir / "u_delta.csv",
             [&](std::ostream& os) { rbl::write_nodal_csv(os, grid, problem.measurement().u_delta, setting); });
  json j;
  j["delta"] = problem.measurement().delta;
  j["exact_data_norm"] = problem.data().exact_norm;
  j["relative_noise"] = cfg.noise_level;
  j["setting"] = setting;
  write_file(dir / "measurement.json", [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  std::cout << j.dump(2) << '\n';
  return kOk;
}

int cmd_run(const ExperimentConfig& cfg, bool lw, bool rbl_arm, bool probe) {
  rbl::ExperimentConfig run = cfg;
  if (run.out_dir.empty()) run.out_dir = ".";
  rbl::RunOptions opts;
  opts.run_lw = lw;
  opts.run_rbl = rbl_arm;
  opts.probe_updates = probe;
  const rbl::ExperimentReport report = rbl::run_experiment(run, opts);
  std::cout << report.summary.dump(2) << '\n';
  int code = kOk;
  for (const auto* arm : {&report.lw, &report.rbl}) {
    if (*arm && (*arm)->exit_code != 0) {
      std::cerr << "error: " << (*arm)->error << '\n';
      code = std::max(code, (*arm)->exit_code);
    }
  }
  return code;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::vector<double>& levels) {
  const auto entries = rbl::noise_sweep(cfg, levels);
  const json j = rbl::sweep_to_json(entries);
  const auto dir = out_dir(cfg);
  write_file(dir / "sweep.json", [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  std::cout << j.dump(2) << '\n';
  for (const auto& e : entries) {
    if (!e.error.empty()) return kSolverFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced Basis Landweber conductivity reconstruction"};
  app.require_subcommand(1);

  Overrides o;
  bool probe = false;
  std::vector<double> levels{0.04, 0.02, 0.01};

  auto* phantom = app.add_subcommand("phantom", "rasterize the phantom on the partition");
  auto* fwd = app.add_subcommand("forward", "synthesize exact and noisy data");
  auto* lw = app.add_subcommand("landweber", "full-order damped Landweber");
  auto* rb = app.add_subcommand("rbl", "Reduced Basis Landweber");
  auto* cmp = app.add_subcommand("compare", "both methods on the same data");
  auto* sweep = app.add_subcommand("sweep", "RBL over decreasing noise levels");
  for (auto* cmd : {phantom, fwd, lw, rb, cmp, sweep}) add_common(cmd, o);
  for (auto* cmd : {rb, cmp}) cmd->add_flag("--probe", probe, "record ||s_RBL - s_LW|| at every inner step");
  sweep->add_option("--levels", levels, "relative noise levels, descending");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    const ExperimentConfig cfg = build_config(o);
    if (*phantom) return cmd_phantom(cfg);
    if (*fwd) return cmd_forward(cfg);
    if (*lw) return cmd_run(cfg, true, false, false);
    if (*rb) return cmd_run(cfg, false, true, probe);
    if (*cmp) return cmd_run(cfg, true, true, probe);
    if (*sweep) return cmd_sweep(cfg, levels);
  } catch (const rbl::InvalidArgument& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kInvalid;
  } catch (const rbl::InvalidPhantom& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolverFailure;
  }
  return kOk;
}

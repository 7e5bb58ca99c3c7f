#include "rbl/harness.hpp"

#include "rbl/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace rbl {

using nlohmann::json;

// ---------------------------------------------------------------- phantom

Inclusion Inclusion::rect(std::vector<std::array<double, 4>> boxes, double contrast) {
  Inclusion inc;
  inc.shape = Shape::rect;
  inc.boxes = std::move(boxes);
  inc.contrast = contrast;
  return inc;
}

Inclusion Inclusion::circle(double cx, double cy, double r, double contrast) {
  Inclusion inc;
  inc.shape = Shape::disk;
  inc.disk = {cx, cy, r};
  inc.contrast = contrast;
  return inc;
}

bool Inclusion::contains(double x, double y) const {
  if (shape == Shape::disk) {
    const double dx = x - disk[0];
    const double dy = y - disk[1];
    return std::hypot(dx, dy) < disk[2];
  }
  for (const auto& b : boxes) {
    if (x >= b[0] && x <= b[1] && y >= b[2] && y <= b[3]) return true;
  }
  return false;
}

PhantomSpec PhantomSpec::c_bar_and_disk() {
  constexpr double u = 1.0 / 30.0;
  PhantomSpec spec;
  spec.background = 3.0;
  spec.inclusions.push_back(Inclusion::rect(
      {{5 * u, 9 * u, 3 * u, 27 * u}, {9 * u, 27 * u, 3 * u, 7 * u}, {9 * u, 27 * u, 23 * u, 27 * u}}, 2.0));
  spec.inclusions.push_back(Inclusion::circle(18 * u, 15 * u, 4 * u, -2.0));
  return spec;
}

ParameterField rasterize_phantom(const PhantomSpec& spec, const Partition& partition) {
  Vector values(partition.p());
  for (Index k = 0; k < partition.p(); ++k) {
    const auto c = partition.center(k);
    double v = spec.background;
    for (const auto& inc : spec.inclusions) {
      if (inc.contains(c[0], c[1])) v += inc.contrast;
    }
    if (!(v > 0.0) || !std::isfinite(v)) {
      std::ostringstream msg;
      msg << "phantom value " << v << " on subdomain " << k << " is not positive";
      throw InvalidPhantom(msg.str());
    }
    values[k] = v;
  }
  return ParameterField(std::move(values));
}

// ----------------------------------------------------------------- config

const char* to_string(Setting setting) { return setting == Setting::full ? "full" : "partial"; }

Setting setting_from_string(const std::string& name) {
  if (name == "full") return Setting::full;
  if (name == "partial") return Setting::partial;
  throw InvalidArgument("unknown setting '" + name + "' (expected full or partial)");
}

void ExperimentConfig::validate() const {
  if (n < 2) throw InvalidArgument("n must be >= 2");
  if (q < 1 || (n + 1) % q != 0) {
    throw InvalidArgument("q = " + std::to_string(q) + " must divide n + 1 = " + std::to_string(n + 1));
  }
  if (!(sigma_start > 0.0) || !std::isfinite(sigma_start)) throw InvalidArgument("sigma_start must be positive");
  if (!(noise_level >= 0.0) || !std::isfinite(noise_level)) throw InvalidArgument("noise_level must be >= 0");
  if (refine < 2) throw InvalidArgument("refine must be >= 2");
  const auto& b = partial_box;
  if (setting == Setting::partial && !(b[0] < b[1] && b[2] < b[3])) {
    throw InvalidArgument("partial_box must satisfy x0 < x1 and y0 < y1");
  }
  for (const auto& inc : phantom.inclusions) {
    if (inc.shape == Inclusion::Shape::disk && !(inc.disk[2] > 0.0)) throw InvalidArgument("disk radius must be positive");
    if (inc.shape == Inclusion::Shape::rect && inc.boxes.empty()) throw InvalidArgument("rect inclusion without boxes");
  }
  solver.validate();
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw InvalidArgument("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json inclusion_json(const Inclusion& inc) {
  json j;
  j["contrast"] = inc.contrast;
  if (inc.shape == Inclusion::Shape::disk) {
    j["shape"] = "disk";
    j["center"] = {inc.disk[0], inc.disk[1]};
    j["radius"] = inc.disk[2];
  } else {
    j["shape"] = "rect";
    j["boxes"] = inc.boxes;
  }
  return j;
}

Inclusion inclusion_from(const json& j) {
  const std::string shape = j.at("shape").get<std::string>();
  const double contrast = j.at("contrast").get<double>();
  if (shape == "disk") {
    reject_unknown(j, {"shape", "contrast", "center", "radius"}, "disk inclusion");
    const auto c = j.at("center").get<std::array<double, 2>>();
    return Inclusion::circle(c[0], c[1], j.at("radius").get<double>(), contrast);
  }
  if (shape == "rect") {
    reject_unknown(j, {"shape", "contrast", "boxes"}, "rect inclusion");
    return Inclusion::rect(j.at("boxes").get<std::vector<std::array<double, 4>>>(), contrast);
  }
  throw InvalidArgument("unknown inclusion shape '" + shape + "'");
}

json solver_json(const SolverConfig& s) {
  json j;
  j["tau"] = s.tau;
  if (s.omega) j["omega"] = *s.omega;
  else j["omega"] = "auto";
  j["power_iterations"] = s.power_iterations;
  j["power_seed"] = s.power_seed;
  j["max_outer"] = s.max_outer;
  j["max_inner"] = s.max_inner;
  j["max_total"] = s.max_total;
  j["solver_tol"] = s.solver_tol;
  j["positivity_floor"] = s.positivity_floor;
  j["clamp_policy"] = s.clamp_policy == ClampPolicy::abort ? "abort" : "clamp";
  return j;
}

void solver_from(const json& j, SolverConfig& s) {
  reject_unknown(j,
                 {"tau", "omega", "power_iterations", "power_seed", "max_outer", "max_inner", "max_total",
                  "solver_tol", "positivity_floor", "clamp_policy"},
                 "solver");
  read_opt(j, "tau", s.tau);
  if (j.contains("omega")) {
    const auto& w = j.at("omega");
    if (w.is_string()) {
      if (w.get<std::string>() != "auto") throw InvalidArgument("omega must be a number or \"auto\"");
      s.omega.reset();
    } else {
      s.omega = w.get<double>();
    }
  }
  read_opt(j, "power_iterations", s.power_iterations);
  read_opt(j, "power_seed", s.power_seed);
  read_opt(j, "max_outer", s.max_outer);
  read_opt(j, "max_inner", s.max_inner);
  read_opt(j, "max_total", s.max_total);
  read_opt(j, "solver_tol", s.solver_tol);
  read_opt(j, "positivity_floor", s.positivity_floor);
  if (j.contains("clamp_policy")) {
    const auto p = j.at("clamp_policy").get<std::string>();
    if (p == "abort") s.clamp_policy = ClampPolicy::abort;
    else if (p == "clamp") s.clamp_policy = ClampPolicy::clamp;
    else throw InvalidArgument("clamp_policy must be abort or clamp");
  }
}

}  // namespace

void to_json(json& j, const ExperimentConfig& cfg) {
  j = json::object();
  j["n"] = cfg.n;
  j["q"] = cfg.q;
  json ph;
  ph["background"] = cfg.phantom.background;
  ph["inclusions"] = json::array();
  for (const auto& inc : cfg.phantom.inclusions) ph["inclusions"].push_back(inclusion_json(inc));
  j["phantom"] = ph;
  j["sigma_start"] = cfg.sigma_start;
  j["noise_level"] = cfg.noise_level;
  j["seed"] = cfg.seed;
  j["setting"] = to_string(cfg.setting);
  j["partial_box"] = cfg.partial_box;
  j["refine"] = cfg.refine;
  j["solver"] = solver_json(cfg.solver);
  j["out_dir"] = cfg.out_dir;
}

void from_json(const json& j, ExperimentConfig& cfg) {
  try {
    reject_unknown(j,
                   {"n", "q", "phantom", "sigma_start", "noise_level", "seed", "setting", "partial_box", "refine",
                    "solver", "out_dir"},
                   "config");
    read_opt(j, "n", cfg.n);
    read_opt(j, "q", cfg.q);
    if (j.contains("phantom")) {
      const auto& ph = j.at("phantom");
      reject_unknown(ph, {"background", "inclusions"}, "phantom");
      read_opt(ph, "background", cfg.phantom.background);
      if (ph.contains("inclusions")) {
        cfg.phantom.inclusions.clear();
        for (const auto& inc : ph.at("inclusions")) cfg.phantom.inclusions.push_back(inclusion_from(inc));
      }
    }
    read_opt(j, "sigma_start", cfg.sigma_start);
    read_opt(j, "noise_level", cfg.noise_level);
    read_opt(j, "seed", cfg.seed);
    if (j.contains("setting")) cfg.setting = setting_from_string(j.at("setting").get<std::string>());
    read_opt(j, "partial_box", cfg.partial_box);
    read_opt(j, "refine", cfg.refine);
    if (j.contains("solver")) solver_from(j.at("solver"), cfg.solver);
    read_opt(j, "out_dir", cfg.out_dir);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed config: ") + e.what());
  }
}

// -------------------------------------------------------------- synthesis

namespace {

ComponentSystem build_system(Index n, Index q) {
  const Grid grid = build_grid(n);
  return assemble_components(grid, build_partition(grid, q));
}

std::optional<NodeMask> make_mask(const ExperimentConfig& cfg, const Grid& grid) {
  if (cfg.setting != Setting::partial) return std::nullopt;
  const auto& b = cfg.partial_box;
  return NodeMask::rectangle(grid, b[0], b[1], b[2], b[3]);
}

DataMetric metric_for(const ComponentSystem& cs, const std::optional<NodeMask>& mask) {
  return mask ? DataMetric(cs, *mask) : DataMetric(cs);
}

}  // namespace

SyntheticData synthesize_measurement(const ExperimentConfig& cfg, const ComponentSystem& cs) {
  cfg.validate();
  const Grid& coarse = cs.grid();
  if (coarse.n() != cfg.n || cs.partition().q() != cfg.q) {
    throw InvalidArgument("component system does not match the config's n and q");
  }
  const Index r = cfg.refine;
  const Index n_fine = r * (cfg.n + 1) - 1;
  const ComponentSystem fine = build_system(n_fine, cfg.q);
  const ParameterField truth = rasterize_phantom(cfg.phantom, fine.partition());
  ForwardCache fine_cache(fine, cfg.solver.solver_tol);
  const FeFunction u_fine = forward(fine_cache, truth);

  FeFunction exact(coarse.dofs());
  for (Index b = 1; b <= coarse.n(); ++b) {
    for (Index a = 1; a <= coarse.n(); ++a) {
      exact[coarse.dof(a, b)] = u_fine[fine.grid().dof(r * a, r * b)];
    }
  }

  std::optional<NodeMask> mask = make_mask(cfg, coarse);
  const DataMetric metric = metric_for(cs, mask);
  const double exact_norm = metric.norm(exact);

  FeFunction noise = FeFunction::Zero(coarse.dofs());
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  for (Index i = 0; i < coarse.dofs(); ++i) {
    const double draw = uniform(rng);
    if (!mask || mask->contains(i)) noise[i] = draw;
  }
  double delta = 0.0;
  if (cfg.noise_level > 0.0) {
    const double raw = metric.norm(noise);
    if (!(raw > 0.0)) throw InvalidArgument("noise support is empty");
    noise *= cfg.noise_level * exact_norm / raw;
    delta = metric.norm(noise);
  } else {
    noise.setZero();
  }

  SyntheticData out{Measurement{exact + noise, delta, std::move(mask)}, exact, exact_norm};
  return out;
}

Problem::Problem(const ExperimentConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      cs_(build_system(cfg.n, cfg.q)),
      truth_(rasterize_phantom(cfg.phantom, cs_.partition())),
      start_(ParameterField::constant(cs_.p(), cfg.sigma_start)),
      data_(synthesize_measurement(cfg, cs_)) {}

DataMetric Problem::metric() const { return metric_for(cs_, data_.meas.mask); }

// ------------------------------------------------------------- experiment

namespace {

double seconds(std::int64_t ns) { return static_cast<double>(ns) * 1e-9; }

double ratio(double num, double den) { return den > 0.0 ? num / den : std::numeric_limits<double>::quiet_NaN(); }

// NaN has no JSON representation.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json arm_json(const ArmReport& arm) {
  json j;
  j["status"] = arm.error.empty() ? "ok" : "failed";
  if (!arm.error.empty()) {
    j["error"] = arm.error;
    j["exit_code"] = arm.exit_code;
  }
  if (!arm.result) return j;
  const auto& r = *arm.result;
  const auto& t = r.trace.totals;
  j["converged"] = r.converged;
  j["final_residual"] = number(r.final_residual);
  j["verified_residual"] = number(arm.verified_residual);
  j["error_to_truth"] = number(arm.error_to_truth);
  j["total_time_s"] = seconds(t.total_ns);
  j["primal_solves"] = t.primal_solves;
  j["dual_solves"] = t.dual_solves;
  j["forward_solves"] = t.forward_solves();
  j["clamp_events"] = t.clamp_events;
  if (arm.method == Method::landweber) {
    j["iterations"] = t.iterations;
    j["time_per_iteration_s"] = number(ratio(seconds(t.total_ns), static_cast<double>(t.iterations)));
  } else {
    j["outer_iterations"] = t.outer;
    j["inner_iterations"] = t.inner;
    j["dropped_snapshots"] = t.dropped_snapshots;
    j["outer_time_s"] = seconds(t.outer_ns);
    j["inner_time_s"] = seconds(t.inner_ns);
    j["time_per_outer_s"] = number(ratio(seconds(t.outer_ns), static_cast<double>(t.outer)));
    j["time_per_inner_s"] = number(ratio(seconds(t.inner_ns), static_cast<double>(t.inner)));
  }
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot write " + path.string());
  os << text;
}

template <class F>
void write_with(const std::filesystem::path& path, F&& fn) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot write " + path.string());
  fn(os);
}

ArmReport run_arm(const Problem& problem, Method method, const SolverConfig& solver, bool probe) {
  ArmReport arm;
  arm.method = method;
  const auto& cs = problem.system();
  try {
    ForwardCache cache(cs, solver.solver_tol);
    if (method == Method::landweber) {
      arm.result = landweber(cache, problem.start(), problem.measurement(), solver);
    } else {
      RblOptions opts;
      opts.probe_updates = probe;
      arm.result = rbl(cache, problem.start(), problem.measurement(), solver, opts);
    }
    ForwardCache check(cs, solver.solver_tol);
    const FeFunction u = forward(check, arm.result->sigma);
    arm.verified_residual = problem.metric().norm(problem.measurement().u_delta - u);
    arm.error_to_truth = parameter_l2_distance(arm.result->sigma.values(), problem.truth().values());
    if (!arm.result->converged) {
      arm.error = "iteration cap reached before the discrepancy principle was met";
      arm.exit_code = 3;
    }
  } catch (const InvalidArgument& e) {
    arm.error = e.what();
    arm.exit_code = 2;
  } catch (const std::exception& e) {
    arm.error = e.what();
    arm.exit_code = 3;
  }
  return arm;
}

}  // namespace

ExperimentReport run_experiment(const Problem& problem, const RunOptions& options) {
  const auto& cfg = problem.config();
  ExperimentReport report;
  report.delta = problem.measurement().delta;

  SolverConfig solver = cfg.solver;
  json summary;
  summary["config"] = cfg;
  summary["delta"] = report.delta;
  summary["exact_data_norm"] = problem.data().exact_norm;
  summary["target_residual"] = solver.tau * report.delta;
  try {
    if (!solver.omega) solver.omega = auto_omega(problem.system(), problem.start(), problem.metric(), solver);
    report.omega = *solver.omega;
    summary["omega"] = report.omega;
    summary["omega_mode"] = cfg.solver.omega ? "fixed" : "auto";
  } catch (const std::exception& e) {
    ArmReport failed;
    failed.error = std::string("omega estimate failed: ") + e.what();
    failed.exit_code = 3;
    if (options.run_lw) report.lw = failed;
    if (options.run_rbl) {
      failed.method = Method::rbl;
      report.rbl = failed;
    }
  }

  if (!report.lw && !report.rbl) {
    if (options.run_lw) report.lw = run_arm(problem, Method::landweber, solver, false);
    if (options.run_rbl) report.rbl = run_arm(problem, Method::rbl, solver, options.probe_updates);
  }
  if (report.lw) summary["lw"] = arm_json(*report.lw);
  if (report.rbl) summary["rbl"] = arm_json(*report.rbl);
  if (report.lw && report.rbl && report.lw->result && report.rbl->result) {
    const auto& lw = *report.lw->result;
    const auto& rb = *report.rbl->result;
    summary["sigma_rbl_minus_lw_l2"] = parameter_l2_distance(rb.sigma.values(), lw.sigma.values());
    summary["speedup"] = number(ratio(static_cast<double>(lw.trace.totals.total_ns),
                                      static_cast<double>(rb.trace.totals.total_ns)));
  }
  report.summary = summary;

  if (options.write_files && !cfg.out_dir.empty()) {
    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    const std::string setting = to_string(cfg.setting);
    const Index q = cfg.q;
    write_text(dir / "config.json", json(cfg).dump(2) + "\n");
    write_with(dir / "sigma_truth.csv", [&](std::ostream& os) { write_grid_csv(os, problem.truth().values(), q, setting); });
    write_with(dir / "u_delta.csv", [&](std::ostream& os) {
      write_nodal_csv(os, problem.system().grid(), problem.measurement().u_delta, setting);
    });
    const auto write_arm = [&](const std::optional<ArmReport>& arm, const std::string& tag) {
      if (!arm || !arm->result) return;
      write_with(dir / ("sigma_" + tag + ".csv"),
                 [&](std::ostream& os) { write_grid_csv(os, arm->result->sigma.values(), q, setting); });
      write_with(dir / ("trace_" + tag + ".csv"), [&](std::ostream& os) { write_trace_csv(os, arm->result->trace); });
    };
    write_arm(report.lw, "lw");
    write_arm(report.rbl, "rbl");
    write_text(dir / "summary.json", summary.dump(2) + "\n");
  }
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  const Problem problem(cfg);
  return run_experiment(problem, options);
}

std::vector<SweepEntry> noise_sweep(const ExperimentConfig& cfg, const std::vector<double>& levels) {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] > 0.0)) throw InvalidArgument("noise levels must be positive");
    if (i > 0 && !(levels[i] < levels[i - 1])) throw InvalidArgument("noise levels must be strictly descending");
  }
  std::vector<SweepEntry> out;
  for (const double level : levels) {
    SweepEntry entry;
    entry.level = level;
    try {
      ExperimentConfig run = cfg;
      run.noise_level = level;
      run.out_dir.clear();
      const Problem problem(run);
      entry.delta = problem.measurement().delta;
      RunOptions opts;
      opts.run_lw = false;
      opts.write_files = false;
      const ExperimentReport report = run_experiment(problem, opts);
      const ArmReport& arm = *report.rbl;
      entry.error = arm.error;
      if (arm.result) {
        entry.converged = arm.result->converged;
        entry.error_to_truth = arm.error_to_truth;
        entry.outer = arm.result->trace.totals.outer;
        entry.inner = arm.result->trace.totals.inner;
      }
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    out.push_back(entry);
  }
  return out;
}

json sweep_to_json(const std::vector<SweepEntry>& entries) {
  json j = json::array();
  for (const auto& e : entries) {
    json row;
    row["level"] = e.level;
    row["delta"] = e.delta;
    row["converged"] = e.converged;
    row["error_to_truth"] = number(e.error_to_truth);
    row["outer_iterations"] = e.outer;
    row["inner_iterations"] = e.inner;
    if (!e.error.empty()) row["error"] = e.error;
    j.push_back(row);
  }
  return j;
}

// ------------------------------------------------------------ file formats

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_grid_csv(std::ostream& os, const Vector& values, Index side, const std::string& setting) {
  if (values.size() != side * side) throw InvalidArgument("grid values do not form a square of the given side");
  os << "n," << side << '\n' << "setting," << setting << '\n';
  for (Index row = 0; row < side; ++row) {
    for (Index col = 0; col < side; ++col) {
      if (col) os << ',';
      os << format_double(values[row * side + col]);
    }
    os << '\n';
  }
}

GridCsv read_grid_csv(std::istream& is) {
  GridCsv out;
  std::string line;
  const auto header = [&](const std::string& key) {
    if (!std::getline(is, line) || line.rfind(key + ",", 0) != 0) throw InvalidArgument("grid csv: missing '" + key + "' header");
    return line.substr(key.size() + 1);
  };
  const std::string side = header("n");
  const auto parsed = std::from_chars(side.data(), side.data() + side.size(), out.side);
  if (parsed.ec != std::errc() || out.side < 0) throw InvalidArgument("grid csv: bad side '" + side + "'");
  out.setting = header("setting");
  out.values.resize(out.side * out.side);
  for (Index row = 0; row < out.side; ++row) {
    if (!std::getline(is, line)) throw InvalidArgument("grid csv: missing rows");
    const char* p = line.data();
    const char* end = p + line.size();
    for (Index col = 0; col < out.side; ++col) {
      double v = 0.0;
      const auto r = std::from_chars(p, end, v);
      if (r.ec != std::errc()) throw InvalidArgument("grid csv: bad value in row " + std::to_string(row));
      out.values[row * out.side + col] = v;
      p = r.ptr;
      if (col + 1 < out.side) {
        if (p == end || *p != ',') throw InvalidArgument("grid csv: short row " + std::to_string(row));
        ++p;
      }
    }
    if (p != end) throw InvalidArgument("grid csv: long row " + std::to_string(row));
  }
  return out;
}

void write_trace_csv(std::ostream& os, const RunTrace& trace) {
  os << "iter,kind,residual,reduced_residual,delta_N,update_error,t_wall_ns\n";
  for (const auto& r : trace.records) {
    os << r.iter << ',' << to_string(r.kind) << ',' << format_double(r.residual) << ','
       << format_double(r.reduced_residual) << ',' << format_double(r.delta_n) << ','
       << format_double(r.update_error) << ',' << r.t_wall_ns << '\n';
  }
}

void write_nodal_csv(std::ostream& os, const Grid& grid, const FeFunction& u, const std::string& setting) {
  if (u.size() != grid.dofs()) throw InvalidArgument("nodal values do not match the grid");
  write_grid_csv(os, u, grid.n(), setting);
}

}  // namespace rbl

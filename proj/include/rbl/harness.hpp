#pragma once

// Experiment harness: phantoms, synthetic measurements, LW/RBL comparison
// runs, noise sweeps and the file formats they write.

#include "rbl/inversion.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace rbl {

struct Inclusion {
  enum class Shape { rect, disk };
  Shape shape = Shape::rect;
  /// rect: union of closed boxes (x0, x1, y0, y1), counted once even where boxes touch.
  std::vector<std::array<double, 4>> boxes;
  /// disk: open disk (cx, cy, r).
  std::array<double, 3> disk{};
  double contrast = 0.0;

  static Inclusion rect(std::vector<std::array<double, 4>> boxes, double contrast);
  static Inclusion circle(double cx, double cy, double r, double contrast);
  bool contains(double x, double y) const;
};

struct PhantomSpec {
  double background = 3.0;
  std::vector<Inclusion> inclusions;

  /// Background 3, a C-shaped bar at +2 and a disk at -2.
  static PhantomSpec c_bar_and_disk();
};

/// Subdomain value = background + sum of contrasts of the inclusions that
/// contain the subdomain center. Throws InvalidPhantom if any value <= 0.
ParameterField rasterize_phantom(const PhantomSpec& spec, const Partition& partition);

enum class Setting { full, partial };

struct ExperimentConfig {
  Index n = 49;
  Index q = 10;
  PhantomSpec phantom = PhantomSpec::c_bar_and_disk();
  double sigma_start = 3.0;
  double noise_level = 0.01;  ///< relative, ||noise|| = level ||u||
  std::uint64_t seed = 1;
  Setting setting = Setting::full;
  std::array<double, 4> partial_box{0.0, 1.0, 0.0, 0.5};  ///< x0, x1, y0, y1
  Index refine = 2;  ///< data-generation grid has refine (n+1) squares per side
  SolverConfig solver;
  std::string out_dir;

  /// Throws InvalidArgument for inconsistent settings.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);

struct SyntheticData {
  Measurement meas;
  FeFunction exact;     ///< noise-free data on the inversion grid
  double exact_norm;    ///< ||exact|| in the data metric
};

/// Solves the forward problem for the rasterized phantom on the refined
/// grid, samples it at the inversion grid's nodes, and adds i.i.d.
/// uniform[-1, 1] nodal noise rescaled to noise_level * ||u||. In the
/// partial setting noise lives on the masked nodes and norms are taken
/// over them. delta is the exact norm of the added noise.
SyntheticData synthesize_measurement(const ExperimentConfig& cfg, const ComponentSystem& cs);

/// Everything a run needs, built once from a config. Not movable: solver
/// caches keep pointers into `cs`.
class Problem {
 public:
  explicit Problem(const ExperimentConfig& cfg);
  Problem(const Problem&) = delete;
  Problem& operator=(const Problem&) = delete;

  const ExperimentConfig& config() const { return cfg_; }
  const ComponentSystem& system() const { return cs_; }
  const ParameterField& truth() const { return truth_; }
  const ParameterField& start() const { return start_; }
  const SyntheticData& data() const { return data_; }
  const Measurement& measurement() const { return data_.meas; }
  DataMetric metric() const;

 private:
  ExperimentConfig cfg_;
  ComponentSystem cs_;
  ParameterField truth_;
  ParameterField start_;
  SyntheticData data_;
};

enum class Method { landweber, rbl };

struct ArmReport {
  Method method = Method::landweber;
  std::optional<SolveResult> result;
  std::string error;  ///< non-empty for a failed run
  int exit_code = 0;  ///< 0 ok, 2 invalid config, 3 solver failure
  double verified_residual = std::numeric_limits<double>::quiet_NaN();  ///< fresh full-order check
  double error_to_truth = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentReport {
  std::optional<ArmReport> lw;
  std::optional<ArmReport> rbl;
  double delta = 0.0;
  double omega = 0.0;
  nlohmann::json summary;
};

struct RunOptions {
  bool run_lw = true;
  bool run_rbl = true;
  bool probe_updates = false;
  bool write_files = true;
};

/// Runs the requested arms on one Problem, writes grids, traces and
/// summary.json into cfg.out_dir (when set), and never throws for solver
/// errors: they end up in the arm's error field.
ExperimentReport run_experiment(const Problem& problem, const RunOptions& options = {});
ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

struct SweepEntry {
  double level = 0.0;
  double delta = 0.0;
  bool converged = false;
  double error_to_truth = std::numeric_limits<double>::quiet_NaN();
  std::int64_t outer = 0;
  std::int64_t inner = 0;
  std::string error;
};

/// RBL run per relative noise level (positive, descending). Failures are
/// recorded per level and the sweep continues.
std::vector<SweepEntry> noise_sweep(const ExperimentConfig& cfg, const std::vector<double>& levels);
nlohmann::json sweep_to_json(const std::vector<SweepEntry>& entries);

// File formats.

/// Square grid of values, row-major with y as the row index, preceded by
/// two header lines "n,<side>" and "setting,<name>". Values are written in
/// shortest round-trip form.
void write_grid_csv(std::ostream& os, const Vector& values, Index side, const std::string& setting);
struct GridCsv {
  Index side = 0;
  std::string setting;
  Vector values;
};
GridCsv read_grid_csv(std::istream& is);

/// Columns: iter, kind, residual, reduced_residual, delta_N, update_error, t_wall_ns.
void write_trace_csv(std::ostream& os, const RunTrace& trace);

/// Interior nodal values of a P1 function as an n x n grid.
void write_nodal_csv(std::ostream& os, const Grid& grid, const FeFunction& u, const std::string& setting);

std::string format_double(double v);
const char* to_string(Setting setting);
Setting setting_from_string(const std::string& name);

}  // namespace rbl

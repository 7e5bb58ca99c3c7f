#pragma once

// Solver drivers: full-order damped Landweber iteration and the Reduced
// Basis Landweber (RBL) method, both stopped by the discrepancy principle.

#include "rbl/forward_ops.hpp"
#include "rbl/measurement.hpp"
#include "rbl/reduced_space.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace rbl {

enum class ClampPolicy { abort, clamp };

struct SolverConfig {
  double tau = 2.5;
  /// Damping; empty means 1/2 ||F'(sigma_start)||^{-1} estimated by power iteration.
  std::optional<double> omega;
  int power_iterations = 50;
  std::uint64_t power_seed = 1;
  std::int64_t max_outer = 200;
  /// Inner iterations per outer iteration of RBL.
  std::int64_t max_inner = 1'000'000;
  /// Total iterations (Landweber) or total inner iterations (RBL).
  std::int64_t max_total = 10'000'000;
  double solver_tol = 1e-12;
  double positivity_floor = 1e-8;
  ClampPolicy clamp_policy = ClampPolicy::abort;

  /// Throws InvalidArgument unless tau > 2, omega >= 0, caps and tolerances positive.
  void validate() const;
};

enum class IterationKind { full, outer, inner };
const char* to_string(IterationKind kind);

struct IterationRecord {
  std::int64_t iter = 0;
  IterationKind kind = IterationKind::full;
  double residual = std::numeric_limits<double>::quiet_NaN();
  double reduced_residual = std::numeric_limits<double>::quiet_NaN();
  double delta_n = std::numeric_limits<double>::quiet_NaN();
  double update_error = std::numeric_limits<double>::quiet_NaN();
  std::int64_t t_wall_ns = 0;  ///< since solver start
};

struct RunTotals {
  std::int64_t primal_solves = 0;
  std::int64_t dual_solves = 0;
  std::int64_t iterations = 0;  ///< Landweber steps
  std::int64_t outer = 0;       ///< RBL enrichments
  std::int64_t inner = 0;       ///< RBL reduced steps
  std::int64_t dropped_snapshots = 0;
  std::int64_t clamp_events = 0;
  std::int64_t total_ns = 0;
  std::int64_t inner_ns = 0;  ///< time in RBL repeat loops
  std::int64_t outer_ns = 0;  ///< RBL time outside the repeat loops

  /// Full-order solves spent on iterations, i.e. excluding the final
  /// discrepancy check of the returned iterate.
  std::int64_t forward_solves() const { return primal_solves + dual_solves - 1; }
};

struct RunTrace {
  std::vector<IterationRecord> records;
  RunTotals totals;
};

struct SolveResult {
  ParameterField sigma;
  RunTrace trace;
  bool converged = false;
  double final_residual = 0.0;  ///< full-order, for the returned iterate
  double omega = 0.0;
};

/// Damping heuristic 1/2 ||F'(sigma_start)||^{-1} in the given data metric.
double auto_omega(const ComponentSystem& cs, const ParameterField& sigma_start, const DataMetric& metric,
                  const SolverConfig& cfg);

/// Damped Landweber iteration. Costs one primal and one dual solve per iteration plus the
/// primal solve for the final discrepancy check. Returns the iterate with
/// the smallest residual seen when max_total is hit.
SolveResult landweber(ForwardCache& cache, const ParameterField& sigma_start, const Measurement& meas,
                      const SolverConfig& cfg);

/// State handed to RBL observers at every evaluated inner iterate,
/// including the one right after enrichment.
struct InnerIterate {
  std::int64_t outer = 0;
  std::int64_t inner = 0;  ///< steps taken in the current block
  const ParameterField* sigma = nullptr;
  double reduced_residual = 0.0;
  double delta_n = 0.0;
};

struct RblOptions {
  /// Record ||s_RBL - s_LW||_{L2} at every inner step. Costs two extra
  /// full-order solves per step on a private cache.
  bool probe_updates = false;
  ReducedModelOptions model;
  std::function<void(const InnerIterate&)> on_inner;
};

/// Reduced basis Landweber iteration. Each outer iteration costs exactly one primal and one dual
/// full-order solve; inner iterations perform none.
SolveResult rbl(ForwardCache& cache, const ParameterField& sigma_start, const Measurement& meas,
                const SolverConfig& cfg, const RblOptions& options = {});

/// ||s_a - s_b||_{L2(Omega)} for updates living on the partition.
double update_error(const Vector& s_a, const Vector& s_b);

}  // namespace rbl

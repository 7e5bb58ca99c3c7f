#include "rbl/inversion.hpp"

#include "rbl/errors.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace rbl {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(Clock::time_point since) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - since).count();
}

DataMetric make_metric(const ComponentSystem& cs, const Measurement& meas) {
  return meas.mask ? DataMetric(cs, *meas.mask) : DataMetric(cs);
}

void check_inputs(const ForwardCache& cache, const ParameterField& sigma_start, const Measurement& meas) {
  const auto& cs = cache.system();
  if (sigma_start.size() != cs.p()) throw InvalidArgument("start parameter does not match the partition");
  if (meas.u_delta.size() != cs.dofs()) throw InvalidArgument("measurement does not match the grid");
  if (!(meas.delta >= 0.0)) throw InvalidArgument("noise level must be non-negative");
}

// sigma + omega s, subject to the positivity policy.
ParameterField advance(const ParameterField& sigma, double omega, const Vector& step, const SolverConfig& cfg,
                       std::int64_t iteration, RunTotals& totals) {
  Vector next = sigma.values() + omega * step;
  const double lowest = next.minCoeff();
  if (!(lowest > cfg.positivity_floor)) {
    if (cfg.clamp_policy == ClampPolicy::abort) {
      std::ostringstream msg;
      msg << "iterate left the admissible set at iteration " << iteration << ": min(sigma) = " << lowest
          << " <= floor " << cfg.positivity_floor;
      throw DomainViolation(msg.str());
    }
    next = next.cwiseMax(cfg.positivity_floor);
    ++totals.clamp_events;
  }
  return ParameterField(std::move(next));
}

double resolve_omega(const ForwardCache& cache, const ParameterField& sigma_start, const DataMetric& metric,
                     const SolverConfig& cfg) {
  return cfg.omega ? *cfg.omega : auto_omega(cache.system(), sigma_start, metric, cfg);
}

}  // namespace

void SolverConfig::validate() const {
  if (!(tau > 2.0)) throw InvalidArgument("tau must exceed 2, got " + std::to_string(tau));
  if (omega && !(*omega >= 0.0 && std::isfinite(*omega))) throw InvalidArgument("omega must be non-negative");
  if (power_iterations < 1) throw InvalidArgument("power_iterations must be >= 1");
  if (max_outer < 0 || max_inner < 1 || max_total < 0) throw InvalidArgument("iteration caps must be non-negative");
  if (!(solver_tol > 0.0)) throw InvalidArgument("solver_tol must be positive");
  if (!(positivity_floor > 0.0)) throw InvalidArgument("positivity_floor must be positive");
}

const char* to_string(IterationKind kind) {
  switch (kind) {
    case IterationKind::full: return "full";
    case IterationKind::outer: return "outer";
    case IterationKind::inner: return "inner";
  }
  return "?";
}

double update_error(const Vector& s_a, const Vector& s_b) { return parameter_l2_distance(s_a, s_b); }

double auto_omega(const ComponentSystem& cs, const ParameterField& sigma_start, const DataMetric& metric,
                  const SolverConfig& cfg) {
  ForwardCache scratch(cs, cfg.solver_tol);
  const double norm = estimate_operator_norm(scratch, sigma_start, cfg.power_iterations, cfg.power_seed, metric);
  if (!(norm > 0.0)) throw SolverFailure("auto_omega: Jacobian norm estimate vanished", 0.0);
  return 0.5 / norm;
}

SolveResult landweber(ForwardCache& cache, const ParameterField& sigma_start, const Measurement& meas,
                      const SolverConfig& cfg) {
  cfg.validate();
  check_inputs(cache, sigma_start, meas);
  const auto& cs = cache.system();
  const DataMetric metric = make_metric(cs, meas);
  const double omega = resolve_omega(cache, sigma_start, metric, cfg);
  const double target = cfg.tau * meas.delta;

  const auto start = Clock::now();
  const auto primal0 = cache.primal_solves();
  const auto dual0 = cache.dual_solves();
  RunTrace trace;
  ParameterField sigma = sigma_start;
  std::optional<ParameterField> best;
  double best_residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  double residual = 0.0;

  for (std::int64_t it = 0;; ++it) {
    const FeFunction u = forward(cache, sigma);
    const FeFunction mismatch = meas.u_delta - u;
    residual = metric.norm(mismatch);
    IterationRecord rec;
    rec.iter = it;
    rec.kind = IterationKind::full;
    rec.residual = residual;
    rec.t_wall_ns = elapsed_ns(start);
    trace.records.push_back(rec);
    if (residual < best_residual) {
      best_residual = residual;
      best = sigma;
    }
    if (residual <= target) {
      converged = true;
      break;
    }
    if (it >= cfg.max_total) break;
    const FeFunction dual = dual_solve(cache, sigma, mismatch, metric);
    const Vector update = cs.component_forms(u, dual);
    sigma = advance(sigma, omega, update, cfg, it, trace.totals);
    trace.totals.iterations = it + 1;
  }

  trace.totals.primal_solves = cache.primal_solves() - primal0;
  trace.totals.dual_solves = cache.dual_solves() - dual0;
  trace.totals.total_ns = elapsed_ns(start);
  trace.totals.outer_ns = trace.totals.total_ns;
  if (converged) return {sigma, std::move(trace), true, residual, omega};
  return {*best, std::move(trace), false, best_residual, omega};
}

SolveResult rbl(ForwardCache& cache, const ParameterField& sigma_start, const Measurement& meas,
                const SolverConfig& cfg, const RblOptions& options) {
  cfg.validate();
  check_inputs(cache, sigma_start, meas);
  const auto& cs = cache.system();
  const DataMetric metric = make_metric(cs, meas);
  const double omega = resolve_omega(cache, sigma_start, metric, cfg);
  const double target = cfg.tau * meas.delta;
  const double trust = (cfg.tau - 2.0) * meas.delta;

  const auto start = Clock::now();
  const auto primal0 = cache.primal_solves();
  const auto dual0 = cache.dual_solves();
  RunTrace trace;
  RunTotals& totals = trace.totals;
  ReducedModel model(cs, metric, meas.u_delta, options.model);
  const ErrorEstimator estimator(cs);
  std::optional<ForwardCache> probe_cache;
  if (options.probe_updates) probe_cache.emplace(cs, cfg.solver_tol);

  ParameterField sigma = sigma_start;
  std::optional<ParameterField> best;
  double best_residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  double residual = 0.0;

  while (true) {
    const FeFunction u = forward(cache, sigma);
    const FeFunction mismatch = meas.u_delta - u;
    residual = metric.norm(mismatch);
    IterationRecord rec;
    rec.iter = totals.outer;
    rec.kind = IterationKind::outer;
    rec.residual = residual;
    rec.t_wall_ns = elapsed_ns(start);
    trace.records.push_back(rec);
    if (residual < best_residual) {
      best_residual = residual;
      best = sigma;
    }
    if (residual <= target) {
      converged = true;
      break;
    }
    if (totals.outer >= cfg.max_outer || totals.inner >= cfg.max_total) break;

    const FeFunction dual = dual_solve(cache, sigma, mismatch, metric);
    if (!model.enrich_primal(u)) ++totals.dropped_snapshots;
    if (!model.enrich_dual(dual)) ++totals.dropped_snapshots;
    ++totals.outer;

    const auto inner_start = Clock::now();
    Vector coeffs = model.reduced_forward(sigma);
    double reduced = model.reduced_residual_norm(coeffs);
    double delta_n = estimator(model, sigma, coeffs);
    std::int64_t block = 0;
    if (options.on_inner) options.on_inner({totals.outer, block, &sigma, reduced, delta_n});
    while (reduced > target && delta_n <= trust && block < cfg.max_inner && totals.inner < cfg.max_total) {
      const ReducedStep step = reduced_update(model, sigma, coeffs);
      double probe = std::numeric_limits<double>::quiet_NaN();
      if (probe_cache) probe = update_error(step.update, landweber_update(*probe_cache, sigma, meas.u_delta, metric).update);
      sigma = advance(sigma, omega, step.update, cfg, totals.inner, totals);
      ++block;
      ++totals.inner;
      coeffs = model.reduced_forward(sigma);
      reduced = model.reduced_residual_norm(coeffs);
      delta_n = estimator(model, sigma, coeffs);

      IterationRecord inner;
      inner.iter = totals.inner;
      inner.kind = IterationKind::inner;
      inner.reduced_residual = reduced;
      inner.delta_n = delta_n;
      inner.update_error = probe;
      inner.t_wall_ns = elapsed_ns(start);
      trace.records.push_back(inner);
      if (options.on_inner) options.on_inner({totals.outer, block, &sigma, reduced, delta_n});
    }
    totals.inner_ns += elapsed_ns(inner_start);
  }

  totals.primal_solves = cache.primal_solves() - primal0;
  totals.dual_solves = cache.dual_solves() - dual0;
  totals.total_ns = elapsed_ns(start);
  totals.outer_ns = totals.total_ns - totals.inner_ns;
  if (converged) return {sigma, std::move(trace), true, residual, omega};
  return {*best, std::move(trace), false, best_residual, omega};
}

}  // namespace rbl

#include "rbl/forward_ops.hpp"

#include "rbl/errors.hpp"

#include <cmath>
#include <random>
#include <string>

namespace rbl {

namespace {

// A stale factor that still gets CG there in this many steps is kept.
constexpr Index kRefactorAfter = 8;

}  // namespace

ForwardCache::ForwardCache(const ComponentSystem& cs, double solver_tol, Preconditioning preconditioning)
    : cs_(&cs), solver_tol_(solver_tol), preconditioning_(preconditioning) {
  if (!(solver_tol > 0.0)) throw InvalidArgument("ForwardCache: solver tolerance must be positive");
}

ForwardCache::~ForwardCache() = default;
ForwardCache::ForwardCache(ForwardCache&&) noexcept = default;
ForwardCache& ForwardCache::operator=(ForwardCache&&) noexcept = default;

const SparseMatrix& ForwardCache::stiffness(const ParameterField& sigma) {
  if (sigma.size() != cs_->p()) {
    throw InvalidArgument("ForwardCache: parameter has " + std::to_string(sigma.size()) + " entries, expected " +
                          std::to_string(cs_->p()));
  }
  if (!cached_sigma_ || *cached_sigma_ != sigma.values()) {
    cached_stiffness_ = assemble_stiffness(*cs_, sigma.values());
    cached_sigma_ = sigma.values();
  }
  return cached_stiffness_;
}

Vector ForwardCache::solve(const ParameterField& sigma, const Vector& rhs) {
  const SparseMatrix& a = stiffness(sigma);
  if (preconditioning_ == Preconditioning::jacobi) return solve_sparse(a, rhs, solver_tol_);

  const auto refactor = [&] {
    if (!factor_) {
      factor_ = std::make_unique<CholeskyFactor>();
      factor_->analyzePattern(a);
    }
    factor_->factorize(a);
    if (factor_->info() != Eigen::Success) throw SolverFailure("ForwardCache: Cholesky factorization failed", 0.0);
    ++factorizations_;
    refactor_ = false;
  };
  if (refactor_) refactor();
  SolveStats stats;
  Vector x;
  try {
    x = solve_sparse(a, rhs, *factor_, solver_tol_, 0, &stats);
  } catch (const SolverFailure&) {
    refactor();
    x = solve_sparse(a, rhs, *factor_, solver_tol_, 0, &stats);
  }
  if (stats.iterations > kRefactorAfter) refactor_ = true;
  return x;
}

FeFunction forward(ForwardCache& cache, const ParameterField& sigma) {
  FeFunction u = cache.solve(sigma, cache.system().load());
  cache.count_primal();
  return u;
}

FeFunction dual_solve(ForwardCache& cache, const ParameterField& sigma, const FeFunction& l) {
  if (l.size() != cache.system().dofs()) throw InvalidArgument("dual_solve: length mismatch");
  FeFunction u = cache.solve(sigma, -(cache.system().mass() * l));
  cache.count_dual();
  return u;
}

FeFunction dual_solve(ForwardCache& cache, const ParameterField& sigma, const FeFunction& mismatch,
                      const DataMetric& metric) {
  if (mismatch.size() != cache.system().dofs()) throw InvalidArgument("dual_solve: length mismatch");
  FeFunction u = cache.solve(sigma, -metric.apply(mismatch));
  cache.count_dual();
  return u;
}

FeFunction jacobian_apply(ForwardCache& cache, const ParameterField& sigma, const Vector& kappa,
                          const FeFunction& u_sigma) {
  const auto& cs = cache.system();
  if (kappa.size() != cs.p() || u_sigma.size() != cs.dofs()) throw InvalidArgument("jacobian_apply: size mismatch");
  FeFunction v = cache.solve(sigma, -cs.apply_stiffness(kappa, u_sigma));
  cache.count_primal();
  return v;
}

Vector adjoint_apply(ForwardCache& cache, const ParameterField& sigma, const FeFunction& l,
                     const FeFunction& u_sigma) {
  return cache.system().component_forms(u_sigma, dual_solve(cache, sigma, l));
}

Vector adjoint_apply(ForwardCache& cache, const ParameterField& sigma, const FeFunction& l,
                     const FeFunction& u_sigma, const DataMetric& metric) {
  return cache.system().component_forms(u_sigma, dual_solve(cache, sigma, l, metric));
}

LandweberStep landweber_update(ForwardCache& cache, const ParameterField& sigma, const FeFunction& u_delta,
                               const DataMetric& metric) {
  if (u_delta.size() != cache.system().dofs()) throw InvalidArgument("landweber_update: data length mismatch");
  LandweberStep step;
  step.primal = forward(cache, sigma);
  const FeFunction mismatch = u_delta - step.primal;
  step.residual_norm = metric.norm(mismatch);
  step.dual = dual_solve(cache, sigma, mismatch, metric);
  step.update = cache.system().component_forms(step.primal, step.dual);
  return step;
}

LandweberStep landweber_update(ForwardCache& cache, const ParameterField& sigma, const FeFunction& u_delta) {
  return landweber_update(cache, sigma, u_delta, DataMetric(cache.system()));
}

double estimate_operator_norm(ForwardCache& cache, const ParameterField& sigma, int iters, std::uint64_t seed,
                              const DataMetric& metric) {
  if (iters < 1) throw InvalidArgument("estimate_operator_norm: need at least one iteration");
  const Index p = cache.system().p();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Vector x(p);
  for (Index k = 0; k < p; ++k) x[k] = uniform(rng);
  x.normalize();

  const FeFunction u = forward(cache, sigma);
  double rayleigh = 0.0;
  for (int it = 0; it < iters; ++it) {
    const FeFunction v = jacobian_apply(cache, sigma, x, u);
    rayleigh = metric.inner(v, v);
    Vector y = adjoint_apply(cache, sigma, v, u, metric);
    const double ny = y.norm();
    if (ny == 0.0) break;
    x = y / ny;
  }
  return std::sqrt(rayleigh);
}

double estimate_operator_norm(ForwardCache& cache, const ParameterField& sigma, int iters, std::uint64_t seed) {
  return estimate_operator_norm(cache, sigma, iters, seed, DataMetric(cache.system()));
}

}  // namespace rbl

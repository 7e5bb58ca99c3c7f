#pragma once

// Discrete forward map sigma -> u^sigma solving B(sigma) u = f, its Jacobian,
// and the adjoint of the Jacobian evaluated through the dual problem.

#include "rbl/measurement.hpp"
#include "rbl/mesh_fem.hpp"

#include <cstdint>
#include <memory>
#include <optional>

namespace rbl {

enum class Preconditioning {
  jacobi,
  /// Cholesky factor of B at a recent parameter, refreshed once CG needs
  /// more than a few iterations. Cheap for slowly moving iterates.
  cached_cholesky,
};

/// Solve context bound to one ComponentSystem. Keeps the stiffness matrix of
/// the most recent parameter and counts full-order primal and dual solves.
/// Not thread safe; use one cache per task.
class ForwardCache {
 public:
  explicit ForwardCache(const ComponentSystem& cs, double solver_tol = 1e-12,
                        Preconditioning preconditioning = Preconditioning::cached_cholesky);
  ~ForwardCache();
  ForwardCache(ForwardCache&&) noexcept;
  ForwardCache& operator=(ForwardCache&&) noexcept;

  const ComponentSystem& system() const { return *cs_; }
  double solver_tol() const { return solver_tol_; }
  std::int64_t primal_solves() const { return primal_solves_; }
  std::int64_t dual_solves() const { return dual_solves_; }
  Preconditioning preconditioning() const { return preconditioning_; }
  /// Cholesky factorizations performed so far (cached_cholesky only).
  std::int64_t factorizations() const { return factorizations_; }

  /// B(sigma), reassembled only when sigma differs from the last call.
  const SparseMatrix& stiffness(const ParameterField& sigma);
  Vector solve(const ParameterField& sigma, const Vector& rhs);

  void count_primal() { ++primal_solves_; }
  void count_dual() { ++dual_solves_; }

 private:
  const ComponentSystem* cs_;
  double solver_tol_;
  Preconditioning preconditioning_;
  std::unique_ptr<CholeskyFactor> factor_;
  bool refactor_ = true;
  std::int64_t factorizations_ = 0;
  std::int64_t primal_solves_ = 0;
  std::int64_t dual_solves_ = 0;
  std::optional<Vector> cached_sigma_;
  SparseMatrix cached_stiffness_;
};

FeFunction forward(ForwardCache& cache, const ParameterField& sigma);

/// Solves B(sigma) u_l = -M l.
FeFunction dual_solve(ForwardCache& cache, const ParameterField& sigma, const FeFunction& l);
/// Dual problem for a data mismatch measured in `metric`: B(sigma) u = -W mismatch.
FeFunction dual_solve(ForwardCache& cache, const ParameterField& sigma, const FeFunction& mismatch,
                      const DataMetric& metric);

/// F'(sigma) kappa: solves B(sigma) v = -B(kappa) u_sigma. Counted as a primal solve.
FeFunction jacobian_apply(ForwardCache& cache, const ParameterField& sigma, const Vector& kappa,
                          const FeFunction& u_sigma);

/// F'(sigma)^* l with entries (u_sigma)^T B^k u_l; one dual solve.
Vector adjoint_apply(ForwardCache& cache, const ParameterField& sigma, const FeFunction& l,
                     const FeFunction& u_sigma);
Vector adjoint_apply(ForwardCache& cache, const ParameterField& sigma, const FeFunction& l,
                     const FeFunction& u_sigma, const DataMetric& metric);

struct LandweberStep {
  Vector update;         ///< F'(sigma)^*(u_delta - F(sigma))
  double residual_norm;  ///< ||F(sigma) - u_delta|| in the data metric
  FeFunction primal;     ///< F(sigma)
  FeFunction dual;       ///< dual solution for the mismatch
};

/// One primal and one dual solve.
LandweberStep landweber_update(ForwardCache& cache, const ParameterField& sigma, const FeFunction& u_delta);
LandweberStep landweber_update(ForwardCache& cache, const ParameterField& sigma, const FeFunction& u_delta,
                               const DataMetric& metric);

/// Power iteration on kappa -> F'^*(F' kappa); returns sqrt of the Rayleigh
/// quotient of the last iterate, a lower bound for ||F'(sigma)|| as a map
/// (R^p, l2) -> (Y, data metric). Start vector is uniform on [0, 1)^p.
double estimate_operator_norm(ForwardCache& cache, const ParameterField& sigma, int iters, std::uint64_t seed);
double estimate_operator_norm(ForwardCache& cache, const ParameterField& sigma, int iters, std::uint64_t seed,
                              const DataMetric& metric);

}  // namespace rbl

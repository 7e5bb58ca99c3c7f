#pragma once

// Reduced basis spaces for the primal and the dual problem, built from
// snapshots and orthonormalized in L2. All parameter-independent projections
// are grown incrementally on enrichment so that reduced solves and the
// reduced Landweber update never touch a full-order vector.

#include "rbl/measurement.hpp"
#include "rbl/mesh_fem.hpp"

#include <memory>
#include <vector>

namespace rbl {

struct ReducedModelOptions {
  /// Snapshots whose norm after projection falls below drop_tol times the
  /// original norm are considered linearly dependent and dropped.
  double drop_tol = 1e-10;
};

class ReducedModel {
 public:
  ReducedModel(const ComponentSystem& cs, const DataMetric& metric, FeFunction u_delta,
               ReducedModelOptions options = {});

  const ComponentSystem& system() const { return *cs_; }
  const DataMetric& metric() const { return *metric_; }
  const FeFunction& u_delta() const { return u_delta_; }

  Index primal_size() const { return primal_basis_.cols(); }
  Index dual_size() const { return dual_basis_.cols(); }
  const Matrix& primal_basis() const { return primal_basis_; }
  const Matrix& dual_basis() const { return dual_basis_; }

  /// Returns false when the snapshot was dropped as dependent.
  bool enrich_primal(const FeFunction& snapshot);
  bool enrich_dual(const FeFunction& snapshot);

  // Projected data. Index q runs over subdomains.
  const Matrix& primal_component(Index q) const { return primal_proj_[static_cast<std::size_t>(q)]; }
  const Matrix& dual_component(Index q) const { return dual_proj_[static_cast<std::size_t>(q)]; }
  /// Q^k = (b^k(psi_1i, psi_2j))_ij, N1 x N2.
  const Matrix& cross_component(Index k) const { return cross_[static_cast<std::size_t>(k)]; }
  const Vector& primal_load() const { return load_proj_; }
  /// (<psi_1i, u_delta>)_i in the data metric.
  const Vector& primal_data() const { return primal_data_; }
  /// (<psi_1i, psi_1j>)_ij in the data metric; the identity in the full setting.
  const Matrix& primal_data_gram() const { return primal_data_gram_; }
  /// (<psi_2j, u_delta>)_j and (<psi_2j, psi_1i>)_ji in the data metric.
  const Vector& dual_data() const { return dual_data_; }
  const Matrix& dual_primal_coupling() const { return dual_primal_coupling_; }
  double data_norm_squared() const { return data_norm_sq_; }

  /// Coefficients of F_N(sigma) in the primal basis.
  Vector reduced_forward(const ParameterField& sigma) const;
  /// Right-hand side (m(psi_2j; l))_j for l = u_delta - F_N(sigma) given by its coefficients.
  Vector reduced_dual_rhs(const Vector& primal_coeffs) const;
  /// Coefficients of the reduced dual solution in the dual basis.
  Vector reduced_dual(const ParameterField& sigma, const Vector& primal_coeffs) const;
  /// ||F_N(sigma) - u_delta|| in the data metric, from Gram data only.
  double reduced_residual_norm(const Vector& primal_coeffs) const;
  /// (u_N^T Q^k u_{N,l})_k.
  Vector reduced_update_vector(const Vector& primal_coeffs, const Vector& dual_coeffs) const;

  FeFunction reconstruct_primal(const Vector& coeffs) const;
  FeFunction reconstruct_dual(const Vector& coeffs) const;

 private:
  struct Orthonormalized {
    bool accepted = false;
    FeFunction vector;
  };
  Orthonormalized orthonormalize(const FeFunction& snapshot, const Matrix& basis, const Matrix& mass_basis) const;
  // Psi^T (B^k w) using only the rows in support(k).
  Vector project_component(const Matrix& basis, Index k, const Vector& bk_w_local) const;

  const ComponentSystem* cs_;
  const DataMetric* metric_;
  FeFunction u_delta_;
  ReducedModelOptions options_;

  Matrix primal_basis_, dual_basis_;
  Matrix primal_mass_basis_, dual_mass_basis_;  // M Psi
  Matrix primal_weighted_basis_;                // W Psi_1

  std::vector<Matrix> primal_proj_, dual_proj_, cross_;
  Vector load_proj_;
  Vector primal_data_;
  Matrix primal_data_gram_;
  Vector dual_data_;
  Matrix dual_primal_coupling_;
  double data_norm_sq_ = 0.0;
};

/// Full result of one reduced Landweber step.
struct ReducedStep {
  Vector update;                  ///< s with s_k = u_N^T Q^k u_{N,l}
  double reduced_residual_norm;   ///< ||F_N(sigma) - u_delta||
  Vector primal_coeffs;
  Vector dual_coeffs;
};

ReducedStep reduced_update(const ReducedModel& model, const ParameterField& sigma);
/// Same, reusing primal coefficients already computed for sigma.
ReducedStep reduced_update(const ReducedModel& model, const ParameterField& sigma, const Vector& primal_coeffs);

/// Rigorous L2 error bound Delta_N(sigma) = ||v_r|| / alpha(sigma), with the
/// Riesz representative v_r of the residual f - B(sigma) u_N computed
/// full-order through a cached Cholesky factorization of the mass matrix.
class ErrorEstimator {
 public:
  explicit ErrorEstimator(const ComponentSystem& cs);
  ~ErrorEstimator();
  ErrorEstimator(ErrorEstimator&&) noexcept;
  ErrorEstimator& operator=(ErrorEstimator&&) noexcept;

  double operator()(const ReducedModel& model, const ParameterField& sigma, const Vector& primal_coeffs) const;
  /// Residual dual norm ||v_r||_{L2} for a full-order candidate u.
  double residual_dual_norm(const ParameterField& sigma, const FeFunction& u) const;

 private:
  struct Impl;
  const ComponentSystem* cs_;
  std::unique_ptr<Impl> impl_;
};

/// Offline/online split of ||v_r||: Riesz representatives of all residual
/// components and their Gram matrix, Q_r = 1 + N1 p. Memory grows as
/// dofs * Q_r, so this is meant for small p only.
class ResidualGram {
 public:
  explicit ResidualGram(const ComponentSystem& cs);
  ~ResidualGram();
  ResidualGram(ResidualGram&&) noexcept;
  ResidualGram& operator=(ResidualGram&&) noexcept;

  /// Adds representatives for primal basis vectors not yet seen.
  void sync(const ReducedModel& model);
  Index components() const;
  double residual_dual_norm(const ParameterField& sigma, const Vector& primal_coeffs) const;
  double estimate(const ParameterField& sigma, const Vector& primal_coeffs) const {
    return residual_dual_norm(sigma, primal_coeffs) / sigma.alpha();
  }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rbl

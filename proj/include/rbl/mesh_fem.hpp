#pragma once

// P1 finite elements on a uniform criss-cross triangulation of the unit
// square, with stiffness matrices split per subdomain of a q x q partition.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <cstdint>
#include <vector>

namespace rbl {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Nodal coefficients on the interior nodes (homogeneous Dirichlet data).
using FeFunction = Vector;

/// Uniform grid with n interior nodes per side; node (a, b) with
/// 0 <= a, b <= n+1 sits at (a h, b h). Interior DOFs are numbered
/// row-major, x fastest: dof = (b-1) n + (a-1).
class Grid {
 public:
  Index n() const { return n_; }
  double h() const { return h_; }
  Index nodes_per_side() const { return n_ + 2; }
  Index dofs() const { return n_ * n_; }
  Index squares_per_side() const { return n_ + 1; }
  Index elements() const { return 2 * squares_per_side() * squares_per_side(); }

  /// DOF index of full node (a, b), or -1 for boundary nodes.
  Index dof(Index a, Index b) const {
    if (a < 1 || b < 1 || a > n_ || b > n_) return -1;
    return (b - 1) * n_ + (a - 1);
  }
  std::array<double, 2> dof_coords(Index dof) const {
    return {static_cast<double>(dof % n_ + 1) * h_, static_cast<double>(dof / n_ + 1) * h_};
  }
  /// Full node indices (a, b) of the three vertices of element e, counter-clockwise.
  std::array<std::array<Index, 2>, 3> element_nodes(Index e) const;
  std::array<double, 2> element_barycenter(Index e) const;

  friend Grid build_grid(Index n);

 private:
  Grid(Index n, double h) : n_(n), h_(h) {}
  Index n_;
  double h_;
};

/// Throws InvalidArgument for n < 2.
Grid build_grid(Index n);

/// Uniform q x q partition of the unit square into subdomains numbered
/// row-major (x fastest). Subdomain boundaries must lie on mesh lines.
class Partition {
 public:
  Index q() const { return q_; }
  Index p() const { return q_ * q_; }
  Index subdomain_of_element(Index e) const { return element_subdomain_[static_cast<std::size_t>(e)]; }
  const std::vector<Index>& element_subdomains() const { return element_subdomain_; }
  std::array<double, 2> center(Index k) const {
    return {(static_cast<double>(k % q_) + 0.5) / static_cast<double>(q_),
            (static_cast<double>(k / q_) + 0.5) / static_cast<double>(q_)};
  }
  double subdomain_area() const { return 1.0 / static_cast<double>(p()); }

  friend Partition build_partition(const Grid& grid, Index q);

 private:
  Partition(Index q, std::vector<Index> membership) : q_(q), element_subdomain_(std::move(membership)) {}
  Index q_;
  std::vector<Index> element_subdomain_;
};

/// Throws InvalidArgument unless q >= 1 and q divides n+1.
Partition build_partition(const Grid& grid, Index q);

/// Coefficient vector of a piecewise-constant conductivity; every entry is
/// strictly positive. Construction throws DomainViolation otherwise.
class ParameterField {
 public:
  explicit ParameterField(Vector values);
  static ParameterField constant(Index p, double value);

  const Vector& values() const { return values_; }
  Index size() const { return values_.size(); }
  double operator[](Index k) const { return values_[k]; }
  /// Coercivity constant w.r.t. the L2 norm on the unit square, 2 min(sigma).
  double alpha() const { return 2.0 * values_.minCoeff(); }
  /// Continuity constant, max(sigma).
  double gamma() const { return values_.maxCoeff(); }

 private:
  Vector values_;
};

/// Exact piecewise-constant L2(Omega) norm of the difference of two
/// coefficient vectors on a uniform partition.
double parameter_l2_distance(const Vector& a, const Vector& b);

/// Parameter-separable stiffness B(sigma) = sum_k sigma_k B^k, the mass
/// matrix and the load vector f_i = -int phi_i.
class ComponentSystem {
 public:
  const Grid& grid() const { return grid_; }
  const Partition& partition() const { return partition_; }
  Index dofs() const { return grid_.dofs(); }
  Index p() const { return partition_.p(); }

  const SparseMatrix& component(Index k) const { return components_[static_cast<std::size_t>(k)]; }
  const SparseMatrix& mass() const { return mass_; }
  const Vector& load() const { return load_; }
  /// Unit-conductivity stiffness, sum_k B^k.
  const SparseMatrix& unit_stiffness() const { return unit_stiffness_; }

  /// Sorted DOFs touched by B^k (rows with a structural nonzero).
  const std::vector<Index>& support(Index k) const { return local_[static_cast<std::size_t>(k)].support; }
  /// B^k x restricted to support(k), in support order.
  Vector apply_component_local(Index k, const Vector& x) const;
  /// B(coeffs) x without forming B(coeffs).
  Vector apply_stiffness(const Vector& coeffs, const Vector& x) const;
  /// Entries (u^T B^k w)_k for k = 0..p-1, in one pass over the components.
  Vector component_forms(const Vector& u, const Vector& w) const;

  friend ComponentSystem assemble_components(const Grid& grid, const Partition& partition);
  friend SparseMatrix assemble_stiffness(const ComponentSystem& cs, const Vector& coeffs);

 private:
  struct LocalComponent {
    std::vector<Index> support;
    SparseMatrix matrix;  // |support| x |support|
  };
  // One entry per (nonzero slot of unit_stiffness_, subdomain) pair, sorted by slot.
  struct SlotContribution {
    Index slot;
    Index component;
    double value;
  };

  ComponentSystem(Grid grid, Partition partition) : grid_(grid), partition_(std::move(partition)) {}

  Grid grid_;
  Partition partition_;
  std::vector<SparseMatrix> components_;
  std::vector<LocalComponent> local_;
  SparseMatrix mass_;
  SparseMatrix unit_stiffness_;
  Vector load_;
  std::vector<SlotContribution> contributions_;
};

ComponentSystem assemble_components(const Grid& grid, const Partition& partition);

/// B(coeffs) on the sparsity pattern of the unit stiffness. Positivity of
/// coeffs is not required here; throws InvalidArgument on a length mismatch.
SparseMatrix assemble_stiffness(const ComponentSystem& cs, const Vector& coeffs);

struct SolveStats {
  Index iterations = 0;
  double relative_residual = 0.0;
};

/// Jacobi-preconditioned CG for SPD systems. Guarantees
/// ||A x - rhs|| <= tol ||rhs|| or throws SolverFailure. The iteration cap
/// defaults to 50 sqrt(dim), i.e. 50 n for grid matrices.
Vector solve_sparse(const SparseMatrix& a, const Vector& rhs, double tol = 1e-12,
                    Index max_iterations = 0, SolveStats* stats = nullptr);

using CholeskyFactor = Eigen::SimplicialLLT<SparseMatrix>;

/// Same contract, preconditioned by the Cholesky factor of a nearby SPD
/// matrix with the same pattern (exact when `factor` was computed from `a`).
Vector solve_sparse(const SparseMatrix& a, const Vector& rhs, const CholeskyFactor& factor, double tol = 1e-12,
                    Index max_iterations = 0, SolveStats* stats = nullptr);

/// <a, b>_{L2} = a^T M b.
double l2_inner(const ComponentSystem& cs, const FeFunction& a, const FeFunction& b);
double l2_norm(const ComponentSystem& cs, const FeFunction& a);

}  // namespace rbl

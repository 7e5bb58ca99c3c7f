#include "rbl/mesh_fem.hpp"

#include "rbl/errors.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <cmath>
#include <string>

namespace rbl {

namespace {

// Element layout: square (i, j) with lower-left node (i, j) is cut along the
// diagonal (i, j)-(i+1, j+1) into t = 0 (below the diagonal) and t = 1.
constexpr std::array<std::array<std::array<Index, 2>, 3>, 2> kTriangleOffsets{{
    {{{0, 0}, {1, 0}, {1, 1}}},
    {{{0, 0}, {1, 1}, {0, 1}}},
}};

// P1 stiffness of a right triangle with unit legs. The 2D P1 stiffness is
// scale invariant, so these hold for every h.
std::array<std::array<double, 3>, 3> reference_stiffness(int t) {
  const auto& off = kTriangleOffsets[static_cast<std::size_t>(t)];
  std::array<double, 3> b{}, c{};
  for (int k = 0; k < 3; ++k) {
    const auto& p1 = off[static_cast<std::size_t>((k + 1) % 3)];
    const auto& p2 = off[static_cast<std::size_t>((k + 2) % 3)];
    b[static_cast<std::size_t>(k)] = static_cast<double>(p1[1] - p2[1]);
    c[static_cast<std::size_t>(k)] = static_cast<double>(p2[0] - p1[0]);
  }
  std::array<std::array<double, 3>, 3> k{};
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t m = 0; m < 3; ++m) k[l][m] = (b[l] * b[m] + c[l] * c[m]) / 2.0;  // 4 |T| = 2
  return k;
}

}  // namespace

std::array<std::array<Index, 2>, 3> Grid::element_nodes(Index e) const {
  const Index square = e / 2;
  const Index i = square % squares_per_side();
  const Index j = square / squares_per_side();
  const auto& off = kTriangleOffsets[static_cast<std::size_t>(e % 2)];
  return {{{i + off[0][0], j + off[0][1]}, {i + off[1][0], j + off[1][1]}, {i + off[2][0], j + off[2][1]}}};
}

std::array<double, 2> Grid::element_barycenter(Index e) const {
  const auto nodes = element_nodes(e);
  double x = 0.0, y = 0.0;
  for (const auto& v : nodes) {
    x += static_cast<double>(v[0]);
    y += static_cast<double>(v[1]);
  }
  return {x * h_ / 3.0, y * h_ / 3.0};
}

Grid build_grid(Index n) {
  if (n < 2) throw InvalidArgument("build_grid: need n >= 2 interior nodes per side, got " + std::to_string(n));
  return Grid(n, 1.0 / static_cast<double>(n + 1));
}

Partition build_partition(const Grid& grid, Index q) {
  if (q < 1 || grid.squares_per_side() % q != 0) {
    throw InvalidArgument("build_partition: q = " + std::to_string(q) + " must be >= 1 and divide n+1 = " +
                          std::to_string(grid.squares_per_side()) + " (n = " + std::to_string(grid.n()) + ")");
  }
  std::vector<Index> membership(static_cast<std::size_t>(grid.elements()));
  const auto qd = static_cast<double>(q);
  for (Index e = 0; e < grid.elements(); ++e) {
    const auto c = grid.element_barycenter(e);
    const auto kx = std::min<Index>(q - 1, static_cast<Index>(std::floor(c[0] * qd)));
    const auto ky = std::min<Index>(q - 1, static_cast<Index>(std::floor(c[1] * qd)));
    membership[static_cast<std::size_t>(e)] = ky * q + kx;
  }
  return Partition(q, std::move(membership));
}

ParameterField::ParameterField(Vector values) : values_(std::move(values)) {
  for (Index k = 0; k < values_.size(); ++k) {
    if (!(values_[k] > 0.0) || !std::isfinite(values_[k])) {
      throw DomainViolation("ParameterField: entry " + std::to_string(k) + " = " + std::to_string(values_[k]) +
                            " is not a positive finite conductivity");
    }
  }
}

ParameterField ParameterField::constant(Index p, double value) { return ParameterField(Vector::Constant(p, value)); }

double parameter_l2_distance(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() == 0) throw InvalidArgument("parameter_l2_distance: size mismatch");
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

ComponentSystem assemble_components(const Grid& grid, const Partition& partition) {
  using Triplet = Eigen::Triplet<double>;
  const Index p = partition.p();
  const Index dofs = grid.dofs();
  const double h = grid.h();
  const std::array<std::array<std::array<double, 3>, 3>, 2> stiff{reference_stiffness(0), reference_stiffness(1)};

  std::vector<std::vector<Triplet>> comp_triplets(static_cast<std::size_t>(p));
  std::vector<Triplet> all_stiffness, mass_triplets;
  Vector load = Vector::Zero(dofs);
  const double mass_diag = h * h / 12.0;  // |T|/6 with |T| = h^2/2
  const double mass_off = h * h / 24.0;   // |T|/12
  const double load_per_vertex = -h * h / 6.0;  // -|T|/3

  for (Index e = 0; e < grid.elements(); ++e) {
    const auto nodes = grid.element_nodes(e);
    std::array<Index, 3> dof{};
    for (std::size_t l = 0; l < 3; ++l) dof[l] = grid.dof(nodes[l][0], nodes[l][1]);
    const auto& ke = stiff[static_cast<std::size_t>(e % 2)];
    auto& comp = comp_triplets[static_cast<std::size_t>(partition.subdomain_of_element(e))];
    for (std::size_t l = 0; l < 3; ++l) {
      if (dof[l] < 0) continue;
      load[dof[l]] += load_per_vertex;
      for (std::size_t m = 0; m < 3; ++m) {
        if (dof[m] < 0) continue;
        mass_triplets.emplace_back(dof[l], dof[m], l == m ? mass_diag : mass_off);
        if (ke[l][m] != 0.0) {
          comp.emplace_back(dof[l], dof[m], ke[l][m]);
          all_stiffness.emplace_back(dof[l], dof[m], ke[l][m]);
        }
      }
    }
  }

  ComponentSystem cs(grid, partition);
  cs.load_ = std::move(load);
  cs.mass_.resize(dofs, dofs);
  cs.mass_.setFromTriplets(mass_triplets.begin(), mass_triplets.end());
  cs.unit_stiffness_.resize(dofs, dofs);
  cs.unit_stiffness_.setFromTriplets(all_stiffness.begin(), all_stiffness.end());
  cs.unit_stiffness_.makeCompressed();

  const auto* outer = cs.unit_stiffness_.outerIndexPtr();
  const auto* inner = cs.unit_stiffness_.innerIndexPtr();
  auto slot_of = [&](Index row, Index col) {
    const auto* first = inner + outer[col];
    const auto* last = inner + outer[col + 1];
    return static_cast<Index>(std::lower_bound(first, last, row) - inner);
  };

  cs.components_.reserve(static_cast<std::size_t>(p));
  cs.local_.reserve(static_cast<std::size_t>(p));
  for (Index k = 0; k < p; ++k) {
    auto& trip = comp_triplets[static_cast<std::size_t>(k)];
    SparseMatrix bk(dofs, dofs);
    bk.setFromTriplets(trip.begin(), trip.end());
    bk.makeCompressed();

    ComponentSystem::LocalComponent local;
    for (const auto& t : trip) local.support.push_back(t.row());
    std::sort(local.support.begin(), local.support.end());
    local.support.erase(std::unique(local.support.begin(), local.support.end()), local.support.end());
    std::vector<Triplet> local_trip;
    local_trip.reserve(trip.size());
    auto local_index = [&](Index d) {
      return static_cast<Index>(std::lower_bound(local.support.begin(), local.support.end(), d) - local.support.begin());
    };
    for (Index col = 0; col < bk.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(bk, col); it; ++it) {
        local_trip.emplace_back(local_index(it.row()), local_index(col), it.value());
        cs.contributions_.push_back({slot_of(it.row(), col), k, it.value()});
      }
    }
    const auto ns = static_cast<Index>(local.support.size());
    local.matrix.resize(ns, ns);
    local.matrix.setFromTriplets(local_trip.begin(), local_trip.end());
    local.matrix.makeCompressed();
    cs.local_.push_back(std::move(local));
    cs.components_.push_back(std::move(bk));
  }
  std::stable_sort(cs.contributions_.begin(), cs.contributions_.end(),
                   [](const auto& a, const auto& b) { return a.slot < b.slot; });
  return cs;
}

SparseMatrix assemble_stiffness(const ComponentSystem& cs, const Vector& coeffs) {
  if (coeffs.size() != cs.p()) {
    throw InvalidArgument("assemble_stiffness: expected " + std::to_string(cs.p()) + " coefficients, got " +
                          std::to_string(coeffs.size()));
  }
  SparseMatrix b = cs.unit_stiffness_;
  double* values = b.valuePtr();
  std::fill(values, values + b.nonZeros(), 0.0);
  for (const auto& c : cs.contributions_) values[c.slot] += coeffs[c.component] * c.value;
  return b;
}

Vector ComponentSystem::apply_component_local(Index k, const Vector& x) const {
  const auto& local = local_[static_cast<std::size_t>(k)];
  Vector gathered(static_cast<Index>(local.support.size()));
  for (std::size_t i = 0; i < local.support.size(); ++i) gathered[static_cast<Index>(i)] = x[local.support[i]];
  return local.matrix * gathered;
}

Vector ComponentSystem::apply_stiffness(const Vector& coeffs, const Vector& x) const {
  if (coeffs.size() != p() || x.size() != dofs()) throw InvalidArgument("apply_stiffness: size mismatch");
  Vector y = Vector::Zero(dofs());
  const auto* outer = unit_stiffness_.outerIndexPtr();
  const auto* inner = unit_stiffness_.innerIndexPtr();
  // contributions_ is sorted by slot, so columns are visited in order.
  Index col = 0;
  for (const auto& c : contributions_) {
    while (outer[col + 1] <= c.slot) ++col;
    y[inner[c.slot]] += coeffs[c.component] * c.value * x[col];
  }
  return y;
}

Vector ComponentSystem::component_forms(const Vector& u, const Vector& w) const {
  if (u.size() != dofs() || w.size() != dofs()) throw InvalidArgument("component_forms: size mismatch");
  Vector out = Vector::Zero(p());
  const auto* outer = unit_stiffness_.outerIndexPtr();
  const auto* inner = unit_stiffness_.innerIndexPtr();
  Index col = 0;
  for (const auto& c : contributions_) {
    while (outer[col + 1] <= c.slot) ++col;
    out[c.component] += u[inner[c.slot]] * c.value * w[col];
  }
  return out;
}

namespace {

// Applies a precomputed Cholesky factor; compute() is a no-op so that CG
// can be handed a factor of a neighbouring matrix.
class FactorPreconditioner {
 public:
  using StorageIndex = SparseMatrix::StorageIndex;
  enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic };

  FactorPreconditioner() = default;
  void bind(const CholeskyFactor* factor) { factor_ = factor; }

  template <class M>
  FactorPreconditioner& analyzePattern(const M&) { return *this; }
  template <class M>
  FactorPreconditioner& factorize(const M&) { return *this; }
  template <class M>
  FactorPreconditioner& compute(const M&) { return *this; }
  template <class Rhs>
  Vector solve(const Rhs& b) const { return factor_->solve(Vector(b)); }
  Eigen::ComputationInfo info() const { return Eigen::Success; }

 private:
  const CholeskyFactor* factor_ = nullptr;
};

void check_solve_inputs(const SparseMatrix& a, const Vector& rhs, double tol) {
  if (a.rows() != a.cols() || a.rows() != rhs.size()) throw InvalidArgument("solve_sparse: size mismatch");
  if (!(tol > 0.0)) throw InvalidArgument("solve_sparse: tolerance must be positive");
}

template <class Cg>
Vector run_cg(Cg& cg, const SparseMatrix& a, const Vector& rhs, double tol, Index max_iterations, SolveStats* stats) {
  if (max_iterations <= 0) {
    max_iterations = 50 * static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(a.rows()))));
  }
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) {
    if (stats) *stats = {};
    return Vector::Zero(rhs.size());
  }
  cg.setTolerance(tol);
  cg.setMaxIterations(max_iterations);
  cg.compute(a);
  Vector x = cg.solve(rhs);
  Index iterations = cg.iterations();
  // The CG recurrence residual can drift from the true one; restart from the
  // current iterate while the budget lasts.
  double achieved = (a * x - rhs).norm() / rhs_norm;
  while (achieved > tol && iterations < max_iterations) {
    cg.setMaxIterations(max_iterations - iterations);
    x = cg.solveWithGuess(rhs, x);
    iterations += std::max<Index>(cg.iterations(), 1);
    achieved = (a * x - rhs).norm() / rhs_norm;
  }
  if (stats) *stats = {iterations, achieved};
  if (achieved > tol) {
    throw SolverFailure("solve_sparse: no convergence after " + std::to_string(iterations) +
                            " iterations, relative residual " + std::to_string(achieved),
                        achieved);
  }
  return x;
}

}  // namespace

Vector solve_sparse(const SparseMatrix& a, const Vector& rhs, double tol, Index max_iterations, SolveStats* stats) {
  check_solve_inputs(a, rhs, tol);
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg;
  return run_cg(cg, a, rhs, tol, max_iterations, stats);
}

Vector solve_sparse(const SparseMatrix& a, const Vector& rhs, const CholeskyFactor& factor, double tol,
                    Index max_iterations, SolveStats* stats) {
  check_solve_inputs(a, rhs, tol);
  if (factor.info() != Eigen::Success || factor.rows() != a.rows()) {
    throw InvalidArgument("solve_sparse: preconditioner factor does not match the matrix");
  }
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, FactorPreconditioner> cg;
  cg.preconditioner().bind(&factor);
  return run_cg(cg, a, rhs, tol, max_iterations, stats);
}

double l2_inner(const ComponentSystem& cs, const FeFunction& a, const FeFunction& b) {
  if (a.size() != cs.dofs() || b.size() != cs.dofs()) throw InvalidArgument("l2_inner: length mismatch");
  return a.dot(cs.mass() * b);
}

double l2_norm(const ComponentSystem& cs, const FeFunction& a) { return std::sqrt(std::max(0.0, l2_inner(cs, a, a))); }

}  // namespace rbl

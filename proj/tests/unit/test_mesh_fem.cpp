#include "oracles.hpp"

#include "rbl/errors.hpp"
#include "rbl/mesh_fem.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <random>
#include <set>

namespace {

using namespace rbl;

TEST(Grid, CountsForSmallestGrid) {
  const Grid g = build_grid(2);
  EXPECT_EQ(g.nodes_per_side() * g.nodes_per_side(), 16);
  EXPECT_EQ(g.dofs(), 4);
  EXPECT_DOUBLE_EQ(g.h(), 1.0 / 3.0);
}

TEST(Grid, CountsForSmallAndLargeGrids) {
  const Grid desk = build_grid(49);
  EXPECT_EQ(desk.dofs(), 2401);
  EXPECT_EQ(desk.h(), 1.0 / 50.0);
  const Grid fine = build_grid(149);
  EXPECT_EQ(fine.nodes_per_side(), 151);
  EXPECT_EQ(fine.h(), 1.0 / 150.0);
}

TEST(Grid, RejectsTooFewNodes) {
  EXPECT_THROW(build_grid(1), InvalidArgument);
  EXPECT_THROW(build_grid(-3), InvalidArgument);
}

TEST(Grid, DofNumberingAndBoundary) {
  const Grid g = build_grid(4);
  EXPECT_EQ(g.dof(1, 1), 0);
  EXPECT_EQ(g.dof(4, 1), 3);
  EXPECT_EQ(g.dof(1, 2), 4);
  EXPECT_EQ(g.dof(0, 2), -1);
  EXPECT_EQ(g.dof(5, 2), -1);
  const auto xy = g.dof_coords(g.dof(2, 3));
  EXPECT_DOUBLE_EQ(xy[0], 2.0 * g.h());
  EXPECT_DOUBLE_EQ(xy[1], 3.0 * g.h());
}

TEST(Grid, TrianglesTileTheSquareAlongOneDiagonal) {
  const Grid g = build_grid(3);
  double area = 0.0;
  for (Index e = 0; e < g.elements(); ++e) {
    const auto v = g.element_nodes(e);
    const double det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
    EXPECT_GT(det, 0) << "element " << e << " is not counter-clockwise";
    area += 0.5 * det * g.h() * g.h();
    // Both triangles of a square share the lower-left to upper-right diagonal.
    const std::set<std::array<Index, 2>> corners(v.begin(), v.end());
    EXPECT_TRUE(corners.count({v[0][0] + 1, v[0][1] + 1})) << "element " << e;
  }
  EXPECT_NEAR(area, 1.0, 1e-14);
}

TEST(Partition, DeskScaleBlocks) {
  const Grid g = build_grid(49);
  const Partition part = build_partition(g, 10);
  EXPECT_EQ(part.p(), 100);
  std::vector<int> count(100, 0);
  for (Index e = 0; e < g.elements(); ++e) ++count[static_cast<std::size_t>(part.subdomain_of_element(e))];
  for (int c : count) EXPECT_EQ(c, 2 * 25);  // a 5 x 5 block of squares
}

TEST(Partition, LargeGridAndOneSquarePerSubdomain) {
  EXPECT_EQ(build_partition(build_grid(149), 30).p(), 900);
  const Grid g = build_grid(2);
  const Partition part = build_partition(g, 3);
  EXPECT_EQ(part.p(), 9);
  std::vector<int> count(9, 0);
  for (Index e = 0; e < g.elements(); ++e) ++count[static_cast<std::size_t>(part.subdomain_of_element(e))];
  for (int c : count) EXPECT_EQ(c, 2);
}

TEST(Partition, DivisibilityViolationNamesBothSizes) {
  const Grid g = build_grid(49);
  try {
    build_partition(g, 7);
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('7'), std::string::npos) << msg;
    EXPECT_NE(msg.find("49"), std::string::npos) << msg;
  }
  EXPECT_THROW(build_partition(g, 0), InvalidArgument);
}

TEST(ParameterField, RejectsInadmissibleEntries) {
  EXPECT_THROW(ParameterField(Vector::Constant(3, 0.0)), DomainViolation);
  Vector v = Vector::Constant(3, 1.0);
  v[1] = -1.0;
  EXPECT_THROW(ParameterField{v}, DomainViolation);
  v[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(ParameterField{v}, DomainViolation);
}

TEST(ParameterField, CoercivityAndContinuityConstants) {
  Vector v(3);
  v << 2.0, 0.5, 4.0;
  const ParameterField s(v);
  EXPECT_DOUBLE_EQ(s.alpha(), 1.0);
  EXPECT_DOUBLE_EQ(s.gamma(), 4.0);
}

TEST(ParameterField, PiecewiseConstantDistance) {
  Vector a = Vector::Zero(4), b = Vector::Zero(4);
  a[0] = 2.0;
  EXPECT_DOUBLE_EQ(parameter_l2_distance(a, b), std::sqrt(4.0 * 0.25));
}

class Assembly : public ::testing::Test {
 protected:
  ComponentSystem cs = oracle::make_system(5, 3);
};

TEST_F(Assembly, LoadIsMinusHSquared) {
  const double h2 = cs.grid().h() * cs.grid().h();
  for (Index i = 0; i < cs.dofs(); ++i) EXPECT_NEAR(cs.load()[i], -h2, 1e-16);
}

TEST_F(Assembly, UnitConductivityStencil) {
  const Grid& g = cs.grid();
  const Matrix b = oracle::dense(assemble_stiffness(cs, Vector::Ones(cs.p())));
  const Index c = g.dof(3, 3);
  EXPECT_DOUBLE_EQ(b(c, c), 4.0);
  EXPECT_DOUBLE_EQ(b(c, g.dof(2, 3)), -1.0);
  EXPECT_DOUBLE_EQ(b(c, g.dof(4, 3)), -1.0);
  EXPECT_DOUBLE_EQ(b(c, g.dof(3, 2)), -1.0);
  EXPECT_DOUBLE_EQ(b(c, g.dof(3, 4)), -1.0);
  EXPECT_EQ(b(c, g.dof(2, 2)), 0.0);
  EXPECT_EQ(b(c, g.dof(4, 4)), 0.0);
  EXPECT_EQ(b(c, g.dof(2, 4)), 0.0);
  EXPECT_EQ(b(c, g.dof(4, 2)), 0.0);
}

TEST_F(Assembly, ComponentsMatchElementGradientOracle) {
  for (Index k = 0; k < cs.p(); ++k) {
    const Matrix ref = oracle::stiffness(cs, Vector::Unit(cs.p(), k));
    EXPECT_LT((oracle::dense(cs.component(k)) - ref).cwiseAbs().maxCoeff(), 1e-13) << "component " << k;
  }
}

TEST_F(Assembly, ComponentsAreSymmetricAndComplete) {
  SparseMatrix sum(cs.dofs(), cs.dofs());
  for (Index k = 0; k < cs.p(); ++k) {
    const Matrix bk = oracle::dense(cs.component(k));
    EXPECT_EQ((bk - bk.transpose()).cwiseAbs().maxCoeff(), 0.0);
    sum += cs.component(k);
  }
  const Matrix ones = oracle::dense(assemble_stiffness(cs, Vector::Ones(cs.p())));
  EXPECT_EQ((oracle::dense(sum) - ones).cwiseAbs().maxCoeff(), 0.0);
}

TEST_F(Assembly, ComponentsArePositiveSemidefinite) {
  for (Index k = 0; k < cs.p(); ++k) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(oracle::dense(cs.component(k)));
    EXPECT_GT(eig.eigenvalues().minCoeff(), -1e-13);
  }
}

TEST_F(Assembly, StiffnessIsHomogeneousAndSelectsComponents) {
  const Matrix one = oracle::dense(assemble_stiffness(cs, Vector::Ones(cs.p())));
  const Matrix three = oracle::dense(assemble_stiffness(cs, Vector::Constant(cs.p(), 3.0)));
  EXPECT_LT((three - 3.0 * one).cwiseAbs().maxCoeff(), 1e-14);
  for (Index k = 0; k < cs.p(); ++k) {
    const Matrix ek = oracle::dense(assemble_stiffness(cs, Vector::Unit(cs.p(), k)));
    EXPECT_EQ((ek - oracle::dense(cs.component(k))).cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_THROW(assemble_stiffness(cs, Vector::Ones(cs.p() + 1)), InvalidArgument);
}

TEST_F(Assembly, StiffnessIsLinearInSigma) {
  std::mt19937_64 rng(3);
  const Vector a = oracle::random_vector(cs.p(), -1, 1, rng);
  const Vector b = oracle::random_vector(cs.p(), -1, 1, rng);
  const Matrix lhs = oracle::dense(assemble_stiffness(cs, 2.0 * a - 0.5 * b));
  const Matrix rhs = 2.0 * oracle::dense(assemble_stiffness(cs, a)) - 0.5 * oracle::dense(assemble_stiffness(cs, b));
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(AssemblySpd, RandomSigmaGivesPositiveSpectrum) {
  const ComponentSystem cs = oracle::make_system(4, 5);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector sigma = oracle::random_vector(cs.p(), 1.0, 5.0, rng);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(oracle::dense(assemble_stiffness(cs, sigma)));
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
    const Vector x = oracle::random_vector(cs.dofs(), -1, 1, rng);
    EXPECT_GT(x.dot(assemble_stiffness(cs, sigma) * x), 0.0);
  }
}

TEST_F(Assembly, MassMatchesQuadratureOracle) {
  const Matrix ref = oracle::mass(cs.grid());
  EXPECT_LT((oracle::dense(cs.mass()) - ref).cwiseAbs().maxCoeff(), 1e-16);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(ref);
  EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
}

TEST_F(Assembly, RepeatedAssemblyIsBitIdentical) {
  const ComponentSystem again = oracle::make_system(5, 3);
  const Vector sigma = Vector::LinSpaced(cs.p(), 1.0, 4.0);
  const SparseMatrix a = assemble_stiffness(cs, sigma);
  const SparseMatrix b = assemble_stiffness(again, sigma);
  ASSERT_EQ(a.nonZeros(), b.nonZeros());
  for (Index i = 0; i < a.nonZeros(); ++i) EXPECT_EQ(a.valuePtr()[i], b.valuePtr()[i]);
  EXPECT_EQ(oracle::dense(cs.mass()), oracle::dense(again.mass()));
}

TEST_F(Assembly, ComponentFormsAndApplyMatchDenseProducts) {
  std::mt19937_64 rng(5);
  const Vector u = oracle::random_vector(cs.dofs(), -1, 1, rng);
  const Vector w = oracle::random_vector(cs.dofs(), -1, 1, rng);
  const Vector kappa = oracle::random_vector(cs.p(), -1, 1, rng);
  const Vector forms = cs.component_forms(u, w);
  for (Index k = 0; k < cs.p(); ++k) EXPECT_NEAR(forms[k], u.dot(cs.component(k) * w), 1e-14);
  const Vector applied = cs.apply_stiffness(kappa, u);
  EXPECT_LT((applied - assemble_stiffness(cs, kappa) * u).cwiseAbs().maxCoeff(), 1e-14);
  for (Index k = 0; k < cs.p(); ++k) {
    const Vector local = cs.apply_component_local(k, u);
    const Vector full = cs.component(k) * u;
    const auto& support = cs.support(k);
    ASSERT_EQ(local.size(), static_cast<Index>(support.size()));
    for (std::size_t i = 0; i < support.size(); ++i) EXPECT_NEAR(local[static_cast<Index>(i)], full[support[i]], 1e-15);
  }
}

TEST(SolveSparse, DiagonalSystem) {
  SparseMatrix a(4, 4);
  for (int i = 0; i < 4; ++i) a.insert(i, i) = i + 1.0;
  Vector rhs(4);
  rhs << 1.0, -2.0, 3.0, 8.0;
  const Vector x = solve_sparse(a, rhs);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(x[i], rhs[i] / (i + 1.0), 1e-15);
}

TEST(SolveSparse, MatchesDenseLuOnUnitConductivity) {
  const ComponentSystem cs = oracle::make_system(4, 5);
  const SparseMatrix b = assemble_stiffness(cs, Vector::Ones(cs.p()));
  SolveStats stats;
  const Vector x = solve_sparse(b, cs.load(), 1e-12, 0, &stats);
  const Vector ref = oracle::solve(oracle::dense(b), cs.load());
  EXPECT_LT((x - ref).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(stats.relative_residual, 1e-12);
  EXPECT_LE((b * x - cs.load()).norm(), 1e-12 * cs.load().norm());
}

TEST(SolveSparse, ZeroRightHandSide) {
  const ComponentSystem cs = oracle::make_system(4, 5);
  const Vector x = solve_sparse(assemble_stiffness(cs, Vector::Ones(cs.p())), Vector::Zero(cs.dofs()));
  EXPECT_EQ(x, Vector::Zero(cs.dofs()));
}

TEST(SolveSparse, ReportsAchievedResidualOnFailure) {
  const ComponentSystem cs = oracle::make_system(9, 5);
  const SparseMatrix b = assemble_stiffness(cs, Vector::LinSpaced(cs.p(), 1.0, 5.0));
  try {
    solve_sparse(b, cs.load(), 1e-12, 1);
    FAIL() << "expected SolverFailure";
  } catch (const SolverFailure& e) {
    EXPECT_GT(e.achieved_residual(), 1e-12);
  }
  EXPECT_THROW(solve_sparse(b, cs.load(), 0.0), InvalidArgument);
  EXPECT_THROW(solve_sparse(b, Vector::Ones(3)), InvalidArgument);
}

TEST(SolveSparse, FactorPreconditionedVariantAgrees) {
  const ComponentSystem cs = oracle::make_system(9, 5);
  const SparseMatrix near = assemble_stiffness(cs, Vector::Constant(cs.p(), 3.0));
  const SparseMatrix b = assemble_stiffness(cs, Vector::LinSpaced(cs.p(), 2.9, 3.1));
  CholeskyFactor factor(near);
  SolveStats stats;
  const Vector x = solve_sparse(b, cs.load(), factor, 1e-12, 0, &stats);
  EXPECT_LE(stats.relative_residual, 1e-12);
  EXPECT_LT((x - oracle::solve(oracle::dense(b), cs.load())).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((x - solve_sparse(b, cs.load())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SolveSparse, Deterministic) {
  const ComponentSystem cs = oracle::make_system(9, 5);
  const SparseMatrix b = assemble_stiffness(cs, Vector::LinSpaced(cs.p(), 1.0, 5.0));
  EXPECT_EQ(solve_sparse(b, cs.load()), solve_sparse(b, cs.load()));
}

TEST(L2Inner, ZeroBilinearAndOracle) {
  const ComponentSystem cs = oracle::make_system(4, 5);
  const Vector ones = Vector::Ones(cs.dofs());
  EXPECT_EQ(l2_inner(cs, Vector::Zero(cs.dofs()), ones), 0.0);
  const Matrix m = oracle::mass(cs.grid());
  EXPECT_NEAR(l2_inner(cs, ones, ones), ones.dot(m * ones), 1e-14);
  std::mt19937_64 rng(2);
  const Vector a = oracle::random_vector(cs.dofs(), -1, 1, rng);
  const Vector b = oracle::random_vector(cs.dofs(), -1, 1, rng);
  EXPECT_NEAR(l2_inner(cs, 2.0 * a, b), 2.0 * l2_inner(cs, a, b), 1e-15);
  EXPECT_NEAR(l2_inner(cs, a, b), l2_inner(cs, b, a), 1e-15);
  EXPECT_GT(l2_inner(cs, a, a), 0.0);
  EXPECT_NEAR(l2_norm(cs, a), std::sqrt(a.dot(m * a)), 1e-15);
  EXPECT_THROW(l2_inner(cs, a, Vector::Ones(3)), InvalidArgument);
}

}  // namespace

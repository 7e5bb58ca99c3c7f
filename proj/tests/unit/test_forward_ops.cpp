#include "oracles.hpp"

#include "rbl/errors.hpp"
#include "rbl/forward_ops.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <random>

namespace {

using namespace rbl;

class ForwardOps : public ::testing::Test {
 protected:
  ComponentSystem cs = oracle::make_system(4, 5);
  ForwardCache cache{cs};
  std::mt19937_64 rng{42};
};

TEST_F(ForwardOps, ScalesInverselyWithConstantConductivity) {
  const FeFunction one = forward(cache, ParameterField::constant(cs.p(), 1.0));
  const FeFunction four = forward(cache, ParameterField::constant(cs.p(), 4.0));
  EXPECT_LT((four - one / 4.0).cwiseAbs().maxCoeff(), 1e-12 * one.cwiseAbs().maxCoeff());
}

TEST_F(ForwardOps, MatchesDenseOracle) {
  const FeFunction u = forward(cache, ParameterField::constant(cs.p(), 1.0));
  EXPECT_LT((u - oracle::forward(cs, Vector::Ones(cs.p()))).cwiseAbs().maxCoeff(), 1e-10);
  const ParameterField sigma = oracle::random_sigma(cs.p(), rng);
  EXPECT_LT((forward(cache, sigma) - oracle::forward(cs, sigma.values())).cwiseAbs().maxCoeff(), 1e-10);
}

TEST_F(ForwardOps, MaximumPrincipleOnDenseOracle) {
  for (int trial = 0; trial < 10; ++trial) {
    const ParameterField sigma = oracle::random_sigma(cs.p(), rng, 0.1, 10.0);
    EXPECT_LT(oracle::forward(cs, sigma.values()).maxCoeff(), 0.0);
    EXPECT_LT(forward(cache, sigma).maxCoeff(), 0.0);
  }
}

TEST_F(ForwardOps, CountersTrackSolves) {
  const ParameterField sigma = ParameterField::constant(cs.p(), 2.0);
  const FeFunction u = forward(cache, sigma);
  EXPECT_EQ(cache.primal_solves(), 1);
  dual_solve(cache, sigma, u);
  EXPECT_EQ(cache.dual_solves(), 1);
  jacobian_apply(cache, sigma, Vector::Ones(cs.p()), u);
  EXPECT_EQ(cache.primal_solves(), 2);
  EXPECT_THROW(cache.stiffness(ParameterField::constant(cs.p() + 1, 1.0)), InvalidArgument);
}

TEST_F(ForwardOps, DualOfZeroIsZero) {
  EXPECT_EQ(dual_solve(cache, oracle::random_sigma(cs.p(), rng), Vector::Zero(cs.dofs())), Vector::Zero(cs.dofs()));
}

TEST_F(ForwardOps, DualWithLoadShapedDataIsScaledForward) {
  // Choose l with M l = c (-f); the dual right-hand side -M l is then c f.
  const ParameterField sigma = ParameterField::constant(cs.p(), 1.0);
  const double c = 2.5;
  const Vector l = oracle::solve(oracle::dense(cs.mass()), -c * cs.load());
  const FeFunction dual = dual_solve(cache, sigma, l);
  const FeFunction u = forward(cache, sigma);
  EXPECT_LT((dual - c * u).cwiseAbs().maxCoeff(), 1e-10 * u.cwiseAbs().maxCoeff());
}

TEST_F(ForwardOps, DualMatchesDenseOracle) {
  const ParameterField sigma = oracle::random_sigma(cs.p(), rng);
  const Vector l = oracle::random_vector(cs.dofs(), -1, 1, rng);
  const Vector ref = oracle::solve(oracle::stiffness(cs, sigma.values()), -(oracle::mass(cs.grid()) * l));
  EXPECT_LT((dual_solve(cache, sigma, l) - ref).cwiseAbs().maxCoeff(), 1e-10);
}

TEST_F(ForwardOps, JacobianZeroLinearAndDense) {
  const ParameterField sigma = oracle::random_sigma(cs.p(), rng);
  const FeFunction u = forward(cache, sigma);
  EXPECT_EQ(jacobian_apply(cache, sigma, Vector::Zero(cs.p()), u), Vector::Zero(cs.dofs()));
  const Vector k1 = oracle::random_vector(cs.p(), -1, 1, rng);
  const Vector k2 = oracle::random_vector(cs.p(), -1, 1, rng);
  const FeFunction lhs = jacobian_apply(cache, sigma, 2.0 * k1 - 3.0 * k2, u);
  const FeFunction rhs = 2.0 * jacobian_apply(cache, sigma, k1, u) - 3.0 * jacobian_apply(cache, sigma, k2, u);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12 * rhs.cwiseAbs().maxCoeff());
  const Matrix jac = oracle::jacobian(cs, sigma.values());
  EXPECT_LT((jacobian_apply(cache, sigma, k1, u) - jac * k1).cwiseAbs().maxCoeff(), 1e-10 * (jac * k1).norm());
}

TEST(Taylor, SecondOrderRemainderDecay) {
  const ComponentSystem cs = oracle::make_system(9, 5);
  ForwardCache cache(cs);
  std::mt19937_64 rng(7);
  const ParameterField sigma = ParameterField::constant(cs.p(), 3.0);
  const Vector dir = oracle::random_vector(cs.p(), -1, 1, rng);
  const FeFunction u = forward(cache, sigma);
  const FeFunction du = jacobian_apply(cache, sigma, dir, u);
  auto remainder = [&](double eps) {
    const FeFunction up = forward(cache, ParameterField(sigma.values() + eps * dir));
    return l2_norm(cs, up - u - eps * du);
  };
  for (const double eps : {1e-2, 5e-3}) {
    const double ratio = remainder(eps) / remainder(eps / 2.0);
    EXPECT_GE(ratio, 4.0 / 1.2);
    EXPECT_LE(ratio, 4.0 * 1.2);
  }
}

TEST_F(ForwardOps, AdjointOfZeroAndSingleDualSolve) {
  const ParameterField sigma = oracle::random_sigma(cs.p(), rng);
  const FeFunction u = forward(cache, sigma);
  const auto dual_before = cache.dual_solves();
  EXPECT_EQ(adjoint_apply(cache, sigma, Vector::Zero(cs.dofs()), u), Vector::Zero(cs.p()));
  EXPECT_EQ(cache.dual_solves(), dual_before + 1);
}

TEST_F(ForwardOps, AdjointIdentity) {
  for (int trial = 0; trial < 20; ++trial) {
    const ParameterField sigma = oracle::random_sigma(cs.p(), rng);
    const Vector kappa = oracle::random_vector(cs.p(), -1, 1, rng);
    const Vector l = oracle::random_vector(cs.dofs(), -1, 1, rng);
    const FeFunction u = forward(cache, sigma);
    const double lhs = l2_inner(cs, jacobian_apply(cache, sigma, kappa, u), l);
    const double rhs = kappa.dot(adjoint_apply(cache, sigma, l, u));
    EXPECT_LE(std::abs(lhs - rhs), 1e-9 * (1.0 + std::abs(lhs)));
  }
}

TEST_F(ForwardOps, AdjointMatchesDenseTranspose) {
  const ParameterField sigma = oracle::random_sigma(cs.p(), rng);
  const Vector l = oracle::random_vector(cs.dofs(), -1, 1, rng);
  const Matrix jac = oracle::jacobian(cs, sigma.values());
  const Vector ref = jac.transpose() * oracle::mass(cs.grid()) * l;
  const Vector got = adjoint_apply(cache, sigma, l, forward(cache, sigma));
  EXPECT_LT((got - ref).cwiseAbs().maxCoeff(), 1e-10 * ref.cwiseAbs().maxCoeff());
}

TEST_F(ForwardOps, AdjointEntriesTelescopeForConstantSigma) {
  const ParameterField sigma = ParameterField::constant(cs.p(), 2.0);
  const Vector l = oracle::random_vector(cs.dofs(), -1, 1, rng);
  const FeFunction u = forward(cache, sigma);
  const Vector adj = adjoint_apply(cache, sigma, l, u);
  const FeFunction ul = dual_solve(cache, sigma, l);
  EXPECT_NEAR(adj.sum(), u.dot(cs.unit_stiffness() * ul), 1e-14);
}

TEST_F(ForwardOps, LandweberUpdateAtExactDataVanishes) {
  const ParameterField sigma = oracle::random_sigma(cs.p(), rng);
  const FeFunction data = forward(cache, sigma);
  const LandweberStep step = landweber_update(cache, sigma, data);
  EXPECT_EQ(step.residual_norm, 0.0);
  EXPECT_EQ(step.update, Vector::Zero(cs.p()));
}

TEST_F(ForwardOps, LandweberUpdateMatchesComposition) {
  const ParameterField sigma = ParameterField::constant(cs.p(), 3.0);
  const Vector truth = oracle::random_vector(cs.p(), 1.0, 5.0, rng);
  const Vector data = oracle::forward(cs, truth);
  const auto p0 = cache.primal_solves();
  const auto d0 = cache.dual_solves();
  const LandweberStep step = landweber_update(cache, sigma, data);
  EXPECT_EQ(cache.primal_solves(), p0 + 1);
  EXPECT_EQ(cache.dual_solves(), d0 + 1);

  const Matrix m = oracle::mass(cs.grid());
  const Vector u = oracle::forward(cs, sigma.values());
  const Vector mismatch = data - u;
  const Vector ref = oracle::jacobian(cs, sigma.values()).transpose() * (m * mismatch);
  EXPECT_LT((step.update - ref).cwiseAbs().maxCoeff(), 1e-12 * ref.cwiseAbs().maxCoeff() + 1e-15);
  EXPECT_NEAR(step.residual_norm, std::sqrt(mismatch.dot(m * mismatch)), 1e-12 * step.residual_norm);
}

TEST_F(ForwardOps, OperatorNormMatchesDenseSvd) {
  const ParameterField sigma = ParameterField::constant(cs.p(), 3.0);
  const Matrix jac = oracle::jacobian(cs, sigma.values());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(jac.transpose() * oracle::mass(cs.grid()) * jac);
  const double ref = std::sqrt(eig.eigenvalues().maxCoeff());
  const double est = estimate_operator_norm(cache, sigma, 50, 1);
  EXPECT_LE(est, ref * (1.0 + 1e-10));
  EXPECT_NEAR(est, ref, 0.01 * ref);
}

TEST_F(ForwardOps, OperatorNormIsMonotoneAndSeeded) {
  const ParameterField sigma = oracle::random_sigma(cs.p(), rng);
  double previous = 0.0;
  for (int iters = 1; iters <= 12; ++iters) {
    const double est = estimate_operator_norm(cache, sigma, iters, 9);
    EXPECT_GE(est, previous * (1.0 - 1e-12)) << iters;
    previous = est;
  }
  EXPECT_EQ(estimate_operator_norm(cache, sigma, 10, 3), estimate_operator_norm(cache, sigma, 10, 3));
}

TEST_F(ForwardOps, OperatorNormDependsOnSigmaAsOracleSays) {
  for (const double c : {3.0, 6.0}) {
    const ParameterField sigma = ParameterField::constant(cs.p(), c);
    const Matrix jac = oracle::jacobian(cs, sigma.values());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(jac.transpose() * oracle::mass(cs.grid()) * jac);
    const double ref = std::sqrt(eig.eigenvalues().maxCoeff());
    EXPECT_NEAR(estimate_operator_norm(cache, sigma, 50, 1), ref, 0.01 * ref);
  }
}

TEST(ForwardCacheSolvers, PreconditioningChoicesAgree) {
  const ComponentSystem cs = oracle::make_system(9, 5);
  ForwardCache jacobi(cs, 1e-12, Preconditioning::jacobi);
  ForwardCache cholesky(cs, 1e-12, Preconditioning::cached_cholesky);
  std::mt19937_64 rng(1);
  ParameterField sigma = oracle::random_sigma(cs.p(), rng);
  for (int step = 0; step < 20; ++step) {
    const FeFunction a = forward(jacobi, sigma);
    const FeFunction b = forward(cholesky, sigma);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12 * a.cwiseAbs().maxCoeff());
    sigma = ParameterField(sigma.values() + 1e-3 * oracle::random_vector(cs.p(), -1, 1, rng));
  }
  EXPECT_LT(cholesky.factorizations(), 20);
  EXPECT_EQ(jacobi.factorizations(), 0);
}

}  // namespace

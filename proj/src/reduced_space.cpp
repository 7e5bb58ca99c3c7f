#include "rbl/reduced_space.hpp"

#include "rbl/errors.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <string>

namespace rbl {

namespace {

Vector solve_reduced(const Matrix& a, const Vector& rhs) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return llt.solve(rhs);
  // Round-off can make a nearly singular projection lose definiteness.
  return a.ldlt().solve(rhs);
}

void append_column(Matrix& m, const Vector& v) {
  m.conservativeResize(v.size(), m.cols() + 1);
  m.col(m.cols() - 1) = v;
}

void append_entry(Vector& v, double value) {
  v.conservativeResize(v.size() + 1);
  v[v.size() - 1] = value;
}

// Grows a symmetric N x N matrix to N+1 with the given last column.
void grow_symmetric(Matrix& m, const Vector& off_diag, double diag) {
  const Index n = m.rows();
  m.conservativeResize(n + 1, n + 1);
  m.col(n).head(n) = off_diag;
  m.row(n).head(n) = off_diag.transpose();
  m(n, n) = diag;
}

}  // namespace

ReducedModel::ReducedModel(const ComponentSystem& cs, const DataMetric& metric, FeFunction u_delta,
                           ReducedModelOptions options)
    : cs_(&cs), metric_(&metric), u_delta_(std::move(u_delta)), options_(options) {
  const Index dofs = cs.dofs();
  if (u_delta_.size() != dofs) throw InvalidArgument("ReducedModel: data length does not match the grid");
  if (metric.weight().rows() != dofs) throw InvalidArgument("ReducedModel: metric does not match the grid");
  primal_basis_.resize(dofs, 0);
  dual_basis_.resize(dofs, 0);
  primal_mass_basis_.resize(dofs, 0);
  dual_mass_basis_.resize(dofs, 0);
  primal_weighted_basis_.resize(dofs, 0);
  primal_proj_.assign(static_cast<std::size_t>(cs.p()), Matrix(0, 0));
  dual_proj_.assign(static_cast<std::size_t>(cs.p()), Matrix(0, 0));
  cross_.assign(static_cast<std::size_t>(cs.p()), Matrix(0, 0));
  load_proj_.resize(0);
  primal_data_.resize(0);
  primal_data_gram_.resize(0, 0);
  dual_data_.resize(0);
  dual_primal_coupling_.resize(0, 0);
  data_norm_sq_ = metric.inner(u_delta_, u_delta_);
}

ReducedModel::Orthonormalized ReducedModel::orthonormalize(const FeFunction& snapshot, const Matrix& basis,
                                                           const Matrix& mass_basis) const {
  if (snapshot.size() != cs_->dofs()) throw InvalidArgument("ReducedModel: snapshot length does not match the grid");
  const SparseMatrix& m = cs_->mass();
  const double initial = std::sqrt(std::max(0.0, snapshot.dot(m * snapshot)));
  if (!(initial > 0.0)) return {};
  FeFunction v = snapshot;
  // Modified Gram-Schmidt, then one re-orthogonalization pass.
  for (int pass = 0; pass < 2; ++pass) {
    for (Index j = 0; j < basis.cols(); ++j) v -= mass_basis.col(j).dot(v) * basis.col(j);
  }
  const double remaining = std::sqrt(std::max(0.0, v.dot(m * v)));
  if (remaining <= options_.drop_tol * initial) return {};
  return {true, v / remaining};
}

Vector ReducedModel::project_component(const Matrix& basis, Index k, const Vector& bk_w_local) const {
  const auto& support = cs_->support(k);
  Vector out = Vector::Zero(basis.cols());
  for (Index i = 0; i < basis.cols(); ++i) {
    double acc = 0.0;
    for (std::size_t s = 0; s < support.size(); ++s) acc += basis(support[s], i) * bk_w_local[static_cast<Index>(s)];
    out[i] = acc;
  }
  return out;
}

bool ReducedModel::enrich_primal(const FeFunction& snapshot) {
  const auto orth = orthonormalize(snapshot, primal_basis_, primal_mass_basis_);
  if (!orth.accepted) return false;
  const FeFunction& psi = orth.vector;
  const Vector weighted = metric_->apply(psi);

  for (Index q = 0; q < cs_->p(); ++q) {
    const Vector local = cs_->apply_component_local(q, psi);
    double self = 0.0;
    const auto& support = cs_->support(q);
    for (std::size_t s = 0; s < support.size(); ++s) self += psi[support[s]] * local[static_cast<Index>(s)];
    auto& bq = primal_proj_[static_cast<std::size_t>(q)];
    grow_symmetric(bq, project_component(primal_basis_, q, local), self);
    auto& cross = cross_[static_cast<std::size_t>(q)];
    const Vector row = project_component(dual_basis_, q, local);
    cross.conservativeResize(cross.rows() + 1, dual_basis_.cols());
    cross.row(cross.rows() - 1) = row.transpose();
  }
  append_entry(load_proj_, cs_->load().dot(psi));
  append_entry(primal_data_, weighted.dot(u_delta_));
  grow_symmetric(primal_data_gram_, primal_weighted_basis_.transpose() * psi, weighted.dot(psi));
  dual_primal_coupling_.conservativeResize(dual_basis_.cols(), primal_basis_.cols() + 1);
  dual_primal_coupling_.col(primal_basis_.cols()) = dual_basis_.transpose() * weighted;

  append_column(primal_basis_, psi);
  append_column(primal_mass_basis_, cs_->mass() * psi);
  append_column(primal_weighted_basis_, weighted);
  return true;
}

bool ReducedModel::enrich_dual(const FeFunction& snapshot) {
  const auto orth = orthonormalize(snapshot, dual_basis_, dual_mass_basis_);
  if (!orth.accepted) return false;
  const FeFunction& psi = orth.vector;
  const Vector weighted = metric_->apply(psi);

  for (Index q = 0; q < cs_->p(); ++q) {
    const Vector local = cs_->apply_component_local(q, psi);
    double self = 0.0;
    const auto& support = cs_->support(q);
    for (std::size_t s = 0; s < support.size(); ++s) self += psi[support[s]] * local[static_cast<Index>(s)];
    auto& bq = dual_proj_[static_cast<std::size_t>(q)];
    grow_symmetric(bq, project_component(dual_basis_, q, local), self);
    auto& cross = cross_[static_cast<std::size_t>(q)];
    cross.conservativeResize(primal_basis_.cols(), cross.cols() + 1);
    cross.col(cross.cols() - 1) = project_component(primal_basis_, q, local);
  }
  append_entry(dual_data_, weighted.dot(u_delta_));
  dual_primal_coupling_.conservativeResize(dual_basis_.cols() + 1, primal_basis_.cols());
  dual_primal_coupling_.row(dual_basis_.cols()) = (primal_basis_.transpose() * weighted).transpose();

  append_column(dual_basis_, psi);
  append_column(dual_mass_basis_, cs_->mass() * psi);
  return true;
}

Vector ReducedModel::reduced_forward(const ParameterField& sigma) const {
  if (primal_size() == 0) throw EmptyBasis("reduced_forward: primal basis is empty");
  if (sigma.size() != cs_->p()) throw InvalidArgument("reduced_forward: parameter size mismatch");
  Matrix a = Matrix::Zero(primal_size(), primal_size());
  for (Index q = 0; q < cs_->p(); ++q) a.noalias() += sigma[q] * primal_proj_[static_cast<std::size_t>(q)];
  return solve_reduced(a, load_proj_);
}

Vector ReducedModel::reduced_dual_rhs(const Vector& primal_coeffs) const {
  if (primal_coeffs.size() != primal_size()) throw InvalidArgument("reduced_dual_rhs: coefficient size mismatch");
  return dual_primal_coupling_ * primal_coeffs - dual_data_;
}

Vector ReducedModel::reduced_dual(const ParameterField& sigma, const Vector& primal_coeffs) const {
  if (dual_size() == 0) throw EmptyBasis("reduced_dual: dual basis is empty");
  if (sigma.size() != cs_->p()) throw InvalidArgument("reduced_dual: parameter size mismatch");
  Matrix a = Matrix::Zero(dual_size(), dual_size());
  for (Index q = 0; q < cs_->p(); ++q) a.noalias() += sigma[q] * dual_proj_[static_cast<std::size_t>(q)];
  return solve_reduced(a, reduced_dual_rhs(primal_coeffs));
}

double ReducedModel::reduced_residual_norm(const Vector& primal_coeffs) const {
  if (primal_coeffs.size() != primal_size()) throw InvalidArgument("reduced_residual_norm: coefficient size mismatch");
  const double sq = primal_coeffs.dot(primal_data_gram_ * primal_coeffs) - 2.0 * primal_coeffs.dot(primal_data_) +
                    data_norm_sq_;
  return std::sqrt(std::max(0.0, sq));
}

Vector ReducedModel::reduced_update_vector(const Vector& primal_coeffs, const Vector& dual_coeffs) const {
  if (primal_coeffs.size() != primal_size() || dual_coeffs.size() != dual_size()) {
    throw InvalidArgument("reduced_update_vector: coefficient size mismatch");
  }
  Vector s(cs_->p());
  for (Index k = 0; k < cs_->p(); ++k) s[k] = primal_coeffs.dot(cross_[static_cast<std::size_t>(k)] * dual_coeffs);
  return s;
}

FeFunction ReducedModel::reconstruct_primal(const Vector& coeffs) const { return primal_basis_ * coeffs; }
FeFunction ReducedModel::reconstruct_dual(const Vector& coeffs) const { return dual_basis_ * coeffs; }

ReducedStep reduced_update(const ReducedModel& model, const ParameterField& sigma, const Vector& primal_coeffs) {
  if (model.primal_size() == 0 || model.dual_size() == 0) throw EmptyBasis("reduced_update: empty reduced basis");
  ReducedStep step;
  step.primal_coeffs = primal_coeffs;
  step.reduced_residual_norm = model.reduced_residual_norm(primal_coeffs);
  step.dual_coeffs = model.reduced_dual(sigma, primal_coeffs);
  step.update = model.reduced_update_vector(primal_coeffs, step.dual_coeffs);
  return step;
}

ReducedStep reduced_update(const ReducedModel& model, const ParameterField& sigma) {
  if (model.primal_size() == 0 || model.dual_size() == 0) throw EmptyBasis("reduced_update: empty reduced basis");
  return reduced_update(model, sigma, model.reduced_forward(sigma));
}

struct ErrorEstimator::Impl {
  Eigen::SimplicialLLT<SparseMatrix> mass_factor;
};

ErrorEstimator::ErrorEstimator(const ComponentSystem& cs) : cs_(&cs), impl_(std::make_unique<Impl>()) {
  impl_->mass_factor.compute(cs.mass());
  if (impl_->mass_factor.info() != Eigen::Success) throw SolverFailure("ErrorEstimator: mass matrix factorization failed", 0.0);
}
ErrorEstimator::~ErrorEstimator() = default;
ErrorEstimator::ErrorEstimator(ErrorEstimator&&) noexcept = default;
ErrorEstimator& ErrorEstimator::operator=(ErrorEstimator&&) noexcept = default;

double ErrorEstimator::residual_dual_norm(const ParameterField& sigma, const FeFunction& u) const {
  const Vector residual = cs_->load() - cs_->apply_stiffness(sigma.values(), u);
  const Vector riesz = impl_->mass_factor.solve(residual);
  return std::sqrt(std::max(0.0, residual.dot(riesz)));
}

double ErrorEstimator::operator()(const ReducedModel& model, const ParameterField& sigma,
                                  const Vector& primal_coeffs) const {
  if (&model.system() != cs_) throw InvalidArgument("ErrorEstimator: model built on a different system");
  return residual_dual_norm(sigma, model.reconstruct_primal(primal_coeffs)) / sigma.alpha();
}

struct ResidualGram::Impl {
  const ComponentSystem* cs;
  Eigen::SimplicialLLT<SparseMatrix> mass_factor;
  Index basis_seen = 0;
  Matrix residuals;  // columns r^q as functionals
  Matrix riesz;      // columns M^{-1} r^q
  Matrix gram;       // riesz^T M riesz = residuals^T riesz

  void add(const Vector& functional) {
    const Vector rep = mass_factor.solve(functional);
    const Vector col = residuals.transpose() * rep;
    append_column(residuals, functional);
    append_column(riesz, rep);
    grow_symmetric(gram, col, functional.dot(rep));
  }
};

ResidualGram::ResidualGram(const ComponentSystem& cs) : impl_(std::make_unique<Impl>()) {
  impl_->cs = &cs;
  impl_->mass_factor.compute(cs.mass());
  impl_->residuals.resize(cs.dofs(), 0);
  impl_->riesz.resize(cs.dofs(), 0);
  impl_->gram.resize(0, 0);
  impl_->add(cs.load());
}
ResidualGram::~ResidualGram() = default;
ResidualGram::ResidualGram(ResidualGram&&) noexcept = default;
ResidualGram& ResidualGram::operator=(ResidualGram&&) noexcept = default;

void ResidualGram::sync(const ReducedModel& model) {
  const ComponentSystem& cs = *impl_->cs;
  for (Index i = impl_->basis_seen; i < model.primal_size(); ++i) {
    for (Index q = 0; q < cs.p(); ++q) impl_->add(cs.component(q) * model.primal_basis().col(i));
  }
  impl_->basis_seen = model.primal_size();
}

Index ResidualGram::components() const { return impl_->gram.rows(); }

double ResidualGram::residual_dual_norm(const ParameterField& sigma, const Vector& primal_coeffs) const {
  const Index p = impl_->cs->p();
  if (primal_coeffs.size() != impl_->basis_seen) throw InvalidArgument("ResidualGram: not synced with the model");
  Vector theta(1 + primal_coeffs.size() * p);
  theta[0] = 1.0;
  for (Index i = 0; i < primal_coeffs.size(); ++i)
    for (Index q = 0; q < p; ++q) theta[1 + i * p + q] = -sigma[q] * primal_coeffs[i];
  return std::sqrt(std::max(0.0, theta.dot(impl_->gram * theta)));
}

}  // namespace rbl

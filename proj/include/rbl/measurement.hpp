#pragma once

// Data-space geometry shared by the solvers: measurement on the whole
// domain, or on a subset of interior nodes (partial setting).

#include "rbl/mesh_fem.hpp"

#include <optional>
#include <vector>

namespace rbl {

/// Interior nodes that carry data. Restriction keeps these coordinates;
/// extension puts values back and zeros the rest.
class NodeMask {
 public:
  NodeMask(Index dofs, std::vector<Index> nodes);
  /// Nodes whose coordinates lie in the closed box [x0, x1] x [y0, y1].
  static NodeMask rectangle(const Grid& grid, double x0, double x1, double y0, double y1);

  Index dofs() const { return dofs_; }
  Index size() const { return static_cast<Index>(nodes_.size()); }
  const std::vector<Index>& nodes() const { return nodes_; }
  bool contains(Index dof) const { return member_[static_cast<std::size_t>(dof)]; }

 private:
  Index dofs_;
  std::vector<Index> nodes_;
  std::vector<bool> member_;
};

Vector restrict_to(const NodeMask& mask, const FeFunction& v);
FeFunction extend_from(const NodeMask& mask, const Vector& masked);

/// Inner product on the data space. Full setting: <a, b> = a^T M b.
/// Partial setting: the full L2 inner product of the zero-extended
/// restrictions, <a, b> = (P a)^T M (P b) with P the mask projector.
class DataMetric {
 public:
  explicit DataMetric(const ComponentSystem& cs);
  DataMetric(const ComponentSystem& cs, NodeMask mask);

  bool partial() const { return mask_.has_value(); }
  const NodeMask* mask() const { return mask_ ? &*mask_ : nullptr; }
  /// Weighting matrix W with <a, b> = a^T W b (M, or P M P).
  const SparseMatrix& weight() const { return weight_; }

  Vector apply(const Vector& v) const { return weight_ * v; }
  double inner(const Vector& a, const Vector& b) const { return a.dot(weight_ * b); }
  double norm(const Vector& v) const;

 private:
  std::optional<NodeMask> mask_;
  SparseMatrix weight_;
};

/// Noisy data together with its known noise level.
struct Measurement {
  FeFunction u_delta;
  double delta = 0.0;
  std::optional<NodeMask> mask;
};

}  // namespace rbl

#include "rbl/measurement.hpp"

#include "rbl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rbl {

NodeMask::NodeMask(Index dofs, std::vector<Index> nodes)
    : dofs_(dofs), nodes_(std::move(nodes)), member_(static_cast<std::size_t>(dofs), false) {
  std::sort(nodes_.begin(), nodes_.end());
  nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
  for (Index d : nodes_) {
    if (d < 0 || d >= dofs_) throw InvalidArgument("NodeMask: node " + std::to_string(d) + " out of range");
    member_[static_cast<std::size_t>(d)] = true;
  }
}

NodeMask NodeMask::rectangle(const Grid& grid, double x0, double x1, double y0, double y1) {
  const double eps = 1e-12;
  std::vector<Index> nodes;
  for (Index d = 0; d < grid.dofs(); ++d) {
    const auto [x, y] = grid.dof_coords(d);
    if (x >= x0 - eps && x <= x1 + eps && y >= y0 - eps && y <= y1 + eps) nodes.push_back(d);
  }
  if (nodes.empty()) throw InvalidArgument("NodeMask::rectangle: box contains no interior node");
  return NodeMask(grid.dofs(), std::move(nodes));
}

Vector restrict_to(const NodeMask& mask, const FeFunction& v) {
  if (v.size() != mask.dofs()) throw InvalidArgument("restrict_to: length mismatch");
  Vector out(mask.size());
  for (Index i = 0; i < mask.size(); ++i) out[i] = v[mask.nodes()[static_cast<std::size_t>(i)]];
  return out;
}

FeFunction extend_from(const NodeMask& mask, const Vector& masked) {
  if (masked.size() != mask.size()) throw InvalidArgument("extend_from: length mismatch");
  FeFunction out = FeFunction::Zero(mask.dofs());
  for (Index i = 0; i < mask.size(); ++i) out[mask.nodes()[static_cast<std::size_t>(i)]] = masked[i];
  return out;
}

DataMetric::DataMetric(const ComponentSystem& cs) : weight_(cs.mass()) {}

DataMetric::DataMetric(const ComponentSystem& cs, NodeMask mask) : mask_(std::move(mask)) {
  if (mask_->dofs() != cs.dofs()) throw InvalidArgument("DataMetric: mask does not match the grid");
  weight_ = cs.mass();
  const NodeMask& m = *mask_;
  weight_.prune([&m](Index row, Index col, double) { return m.contains(row) && m.contains(col); });
  weight_.makeCompressed();
}

double DataMetric::norm(const Vector& v) const { return std::sqrt(std::max(0.0, inner(v, v))); }

}  // namespace rbl

#include "fpdrift/penalty.hpp"

namespace fpdrift {

PenaltyConfig make_penalty(const FemSpace& space, DriftField center, BoundaryMode mode) {
  if (!(center.mesh() == space.mesh())) throw MeshMismatch();
  return {std::move(center), space.h1_gram(), mode};
}

std::vector<Index> free_dofs(BoundaryMode mode, Index dofs) {
  std::vector<Index> idx;
  const Index first = mode == BoundaryMode::fixed ? 1 : 0;
  const Index last = mode == BoundaryMode::fixed ? dofs - 1 : dofs;
  for (Index i = first; i < last; ++i) idx.push_back(i);
  return idx;
}

std::pair<double, Vector> penalty_value_grad(const PenaltyConfig& cfg, const DriftField& mu) {
  if (!(mu.mesh() == cfg.center.mesh())) throw MeshMismatch();
  const Vector diff = mu.coeffs() - cfg.center.coeffs();
  const Vector g = cfg.gram * diff;
  return {diff.dot(g), 2.0 * g(free_dofs(cfg.boundary_mode, diff.size()))};
}

double bregman_distance(const PenaltyConfig& cfg, const DriftField& mu, const DriftField& mu_dag) {
  if (!(mu.mesh() == cfg.center.mesh()) || !(mu_dag.mesh() == cfg.center.mesh()))
    throw MeshMismatch();
  const Vector diff = mu.coeffs() - mu_dag.coeffs();
  return diff.dot(cfg.gram * diff);
}

DriftField default_center(const DriftField& truth, BoundaryMode mode) {
  const Mesh& m = truth.mesh();
  if (mode == BoundaryMode::free) return DriftField(FemFunction::zero(m));
  const double left = truth.left_value();
  const double right = truth.right_value();
  return DriftField(interpolate(m, [&](double x) {
    const double t = (x - m.a()) / m.length();
    return (1.0 - t) * left + t * right;
  }));
}

}  // namespace fpdrift

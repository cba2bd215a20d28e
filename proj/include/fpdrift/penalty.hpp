#pragma once

// Quadratic H1 penalty R(mu) = ||mu - mu_0||²_{H1} and its Bregman distance,
// which for a quadratic penalty is the squared H1 distance.

#include "fpdrift/fem_space.hpp"

#include <utility>

namespace fpdrift {

enum class BoundaryMode { fixed, free };

struct PenaltyConfig {
  DriftField center;
  Matrix gram;
  BoundaryMode boundary_mode = BoundaryMode::fixed;
};

PenaltyConfig make_penalty(const FemSpace& space, DriftField center, BoundaryMode mode);

/// Indices of the drift coefficients that the estimator may change; fixed mode
/// drops the two endpoint values.
std::vector<Index> free_dofs(BoundaryMode mode, Index dofs);

/// Value (μ-μ0)^T G (μ-μ0) and gradient 2G(μ-μ0) restricted to the free dofs.
std::pair<double, Vector> penalty_value_grad(const PenaltyConfig& cfg, const DriftField& mu);

double bregman_distance(const PenaltyConfig& cfg, const DriftField& mu, const DriftField& mu_dag);

/// Linear interpolant between the truth's endpoint values (fixed mode) or zero (free mode).
DriftField default_center(const DriftField& truth, BoundaryMode mode);

}  // namespace fpdrift

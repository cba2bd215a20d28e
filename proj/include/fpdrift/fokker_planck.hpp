#pragma once

// Cubic finite elements for the 1D Fokker-Planck equation with the natural
// (no-flux) boundary condition.  With a_mu(u,v) = ∫ -mu u v' + ½σ² u' v',
// the stationary density is the kernel element of L_mu normalised to unit mass
// and is computed from the bordered system
//
//   [ L_mu  1 ] [u     ]   [0]
//   [ 1^T   0 ] [lambda] = [1].
//
// Perturbing the drift by h adds -∫ h u v' to a_mu, so the forward operator's
// derivative solves the same bordered system with right-hand side ∫ u h φ_i'.

#include "fpdrift/fem_space.hpp"

#include <functional>

namespace fpdrift {

struct AssembledSystem {
  FemSpacePtr space;
  double sigma;
  /// ∫ ½σ² φ_i' φ_j'
  Matrix stiffness;
  /// ∫ -mu φ_j φ_i'   (row = test function i)
  Matrix advection;
  /// stiffness + advection, the matrix of a_mu
  Matrix operator_matrix;
  Eigen::PartialPivLU<Matrix> bordered;

  const Mesh& mesh() const { return space->mesh(); }
  const Matrix& mass() const { return space->mass(); }
  const Matrix& h1_gram() const { return space->h1_gram(); }
  const Vector& ones_vector() const { return space->ones(); }
};

AssembledSystem assemble(FemSpacePtr space, const DriftField& drift, double sigma);
AssembledSystem assemble(const Mesh& mesh, const DriftField& drift, double sigma);

struct Density {
  FemFunction u;
  double normalization_residual = 0.0;
  /// Lagrange multiplier of the mass constraint (zero for the exact solution).
  double multiplier = 0.0;
};

/// F(mu): the normalised stationary density.
Density solve_stationary(const AssembledSystem& sys);

/// B(u)_{ij} = ∫ u φ_j φ_i', so that L_{mu+h} u = L_mu u - B(u) h.
Matrix coupling_matrix(const FemSpace& space, const Vector& u);

/// F'[mu] h, zero-mean.
FemFunction solve_derivative(const AssembledSystem& sys, const Density& u, const DriftField& h);
FemFunction solve_derivative(const AssembledSystem& sys, const Density& u, const Vector& h);

/// Full Jacobian dF/dmu in nodal coordinates (dofs x dofs).
Matrix derivative_matrix(const AssembledSystem& sys, const Density& u);

/// L2-adjoint of F'[mu]: <F'[mu]h, w> = <h, g> for all FEM drifts h.
FemFunction apply_derivative_adjoint(const AssembledSystem& sys, const Density& u,
                                     const FemFunction& w);

/// Gaussian N(x0, sd²) restricted to the mesh interval, interpolated and
/// renormalised to unit mass.
Density gaussian_density(const Mesh& mesh, double x0, double sd);

using StepObserver = std::function<void(int step, const Vector& u)>;

/// Implicit Euler for du/dt = -L_mu u:  (M + dt L_mu) u_{k+1} = M u_k.
Density solve_parabolic(const AssembledSystem& sys, const Density& u0, double t_end, int n_steps,
                        const StepObserver& observer = {});

struct ParabolicLinearization {
  Density density;
  Matrix jacobian;
};

/// Terminal density of solve_parabolic together with its exact discrete derivative
/// with respect to the nodal drift, propagated step by step:
///   (M + dt L) J_{k+1} = M J_k + dt B(u_{k+1}),  J_0 = 0.
ParabolicLinearization parabolic_linearization(const AssembledSystem& sys, const Density& u0,
                                               double t_end, int n_steps);

}  // namespace fpdrift

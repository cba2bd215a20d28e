#include "fpdrift/fokker_planck.hpp"

#include "fpdrift/basis.hpp"

#include <Eigen/SparseLU>

#include <cmath>

namespace fpdrift {

namespace {

using Gauss = GaussLegendre5<double>;

constexpr double kMinReciprocalCondition = 1e-15;

// ∫ w φ_j φ_i' for a nodal weight function w.
Matrix weighted_gradient_product(const FemSpace& space, const Vector& w) {
  const Mesh& mesh = space.mesh();
  Matrix out = Matrix::Zero(mesh.dofs(), mesh.dofs());
  for (int e = 0; e < mesh.elements(); ++e) {
    for (int q = 0; q < Gauss::size; ++q) {
      const auto phi = cubic_lagrange(Gauss::nodes[q]);
      const auto dphi = cubic_lagrange_derivative(Gauss::nodes[q]);
      double wq = 0.0;
      for (int k = 0; k < 4; ++k) wq += w(3 * e + k) * phi[k];
      // Gauss weight times h cancels the 1/h of the physical derivative.
      const double scale = Gauss::weights[q] * wq;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) out(3 * e + i, 3 * e + j) += scale * phi[j] * dphi[i];
    }
  }
  return out;
}

Matrix bordered_matrix(const AssembledSystem& sys) {
  const Index n = sys.mesh().dofs();
  Matrix s(n + 1, n + 1);
  s.topLeftCorner(n, n) = sys.operator_matrix;
  s.topRightCorner(n, 1) = sys.ones_vector();
  s.bottomLeftCorner(1, n) = sys.ones_vector().transpose();
  s(n, n) = 0.0;
  return s;
}

Vector bordered_solve(const AssembledSystem& sys, const Vector& rhs, double constraint) {
  const Index n = sys.mesh().dofs();
  Vector full(n + 1);
  full.head(n) = rhs;
  full(n) = constraint;
  return sys.bordered.solve(full);
}

}  // namespace

AssembledSystem assemble(FemSpacePtr space, const DriftField& drift, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw PreconditionError("sigma must be positive");
  if (!(drift.mesh() == space->mesh())) throw MeshMismatch();

  AssembledSystem sys{space, sigma, {}, {}, {}, {}};
  sys.stiffness = 0.5 * sigma * sigma * space->laplace();
  sys.advection = -weighted_gradient_product(*space, drift.coeffs());
  sys.operator_matrix = sys.stiffness + sys.advection;
  sys.bordered.compute(bordered_matrix(sys));
  return sys;
}

AssembledSystem assemble(const Mesh& mesh, const DriftField& drift, double sigma) {
  return assemble(make_space(mesh), drift, sigma);
}

Matrix coupling_matrix(const FemSpace& space, const Vector& u) {
  return weighted_gradient_product(space, u);
}

Density solve_stationary(const AssembledSystem& sys) {
  if (sys.bordered.rcond() < kMinReciprocalCondition)
    throw SolverError("bordered stationary system is numerically singular");
  const Index n = sys.mesh().dofs();
  const Vector sol = bordered_solve(sys, Vector::Zero(n), 1.0);
  Density d{FemFunction(sys.mesh(), sol.head(n)), 0.0, sol(n)};
  if (!d.u.coeffs.allFinite()) throw SolverError("stationary solve produced non-finite values");
  d.normalization_residual = std::abs(sys.ones_vector().dot(d.u.coeffs) - 1.0);
  return d;
}

FemFunction solve_derivative(const AssembledSystem& sys, const Density& u, const Vector& h) {
  const Index n = sys.mesh().dofs();
  if (h.size() != n) throw MeshMismatch();
  const Vector rhs = coupling_matrix(*sys.space, u.u.coeffs) * h;
  return {sys.mesh(), bordered_solve(sys, rhs, 0.0).head(n)};
}

FemFunction solve_derivative(const AssembledSystem& sys, const Density& u, const DriftField& h) {
  if (!(h.mesh() == sys.mesh())) throw MeshMismatch();
  return solve_derivative(sys, u, h.coeffs());
}

Matrix derivative_matrix(const AssembledSystem& sys, const Density& u) {
  const Index n = sys.mesh().dofs();
  Matrix rhs = Matrix::Zero(n + 1, n);
  rhs.topRows(n) = coupling_matrix(*sys.space, u.u.coeffs);
  return sys.bordered.solve(rhs).topRows(n);
}

FemFunction apply_derivative_adjoint(const AssembledSystem& sys, const Density& u,
                                     const FemFunction& w) {
  if (!(w.mesh == sys.mesh())) throw MeshMismatch();
  const Index n = sys.mesh().dofs();
  // <J h, w>_M = h^T B^T S^{-T} [M w; 0];  the L2 representer divides by M.
  Vector rhs(n + 1);
  rhs.head(n) = sys.mass() * w.coeffs;
  rhs(n) = 0.0;
  const Vector z = sys.bordered.transpose().solve(rhs);
  const Vector dual = coupling_matrix(*sys.space, u.u.coeffs).transpose() * z.head(n);
  return {sys.mesh(), sys.space->mass_factor().solve(dual)};
}

Density gaussian_density(const Mesh& mesh, double x0, double sd) {
  if (!(sd > 0.0)) throw PreconditionError("standard deviation must be positive");
  FemFunction g = interpolate(mesh, [&](double x) {
    const double z = (x - x0) / sd;
    return std::exp(-0.5 * z * z);
  });
  const double mass = integrate(g);
  g.coeffs /= mass;
  return {g, std::abs(integrate(g) - 1.0), 0.0};
}

namespace {

// Implicit Euler step (M + dt A) u_k = M u_{k-1}.  The matrices are banded, so
// the stepping runs on sparse copies.
class EulerStep {
public:
  EulerStep(const AssembledSystem& sys, double dt) {
    Matrix step = sys.mass() + dt * sys.operator_matrix;
    // Column j must sum to ∫φ_j because a(φ_j, 1) = 0; removing the rounding
    // residue keeps the mass drift at working precision over long runs.
    step.diagonal() += sys.ones_vector() - step.colwise().sum().transpose();
    if (Eigen::PartialPivLU<Matrix>(step).rcond() < kMinReciprocalCondition)
      throw SolverError("implicit Euler step matrix is numerically singular");
    mass_ = sys.mass().sparseView();
    lu_.compute(step.sparseView());
    if (lu_.info() != Eigen::Success)
      throw SolverError("implicit Euler step matrix is numerically singular");
  }

  template <typename Rhs>
  Matrix solve(const Rhs& rhs) const { return lu_.solve(rhs); }
  template <typename Arg>
  Matrix mass_times(const Arg& x) const { return mass_ * x; }

private:
  Eigen::SparseMatrix<double> mass_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

void check_parabolic_args(const AssembledSystem& sys, const Density& u0, double t_end,
                          int n_steps) {
  if (!(u0.u.mesh == sys.mesh())) throw MeshMismatch();
  if (n_steps < 1) throw PreconditionError("n_steps must be >= 1");
  if (!(t_end > 0.0)) throw PreconditionError("t_end must be positive");
}

}  // namespace

Density solve_parabolic(const AssembledSystem& sys, const Density& u0, double t_end, int n_steps,
                        const StepObserver& observer) {
  check_parabolic_args(sys, u0, t_end, n_steps);
  const double dt = t_end / n_steps;
  const EulerStep step(sys, dt);
  Vector u = u0.u.coeffs;
  for (int k = 1; k <= n_steps; ++k) {
    u = step.solve(step.mass_times(u));
    if (observer) observer(k, u);
  }
  Density d{FemFunction(sys.mesh(), std::move(u)), 0.0, 0.0};
  d.normalization_residual = std::abs(sys.ones_vector().dot(d.u.coeffs) - 1.0);
  return d;
}

ParabolicLinearization parabolic_linearization(const AssembledSystem& sys, const Density& u0,
                                               double t_end, int n_steps) {
  check_parabolic_args(sys, u0, t_end, n_steps);
  const Index n = sys.mesh().dofs();
  const double dt = t_end / n_steps;
  const EulerStep step(sys, dt);
  Vector u = u0.u.coeffs;
  Matrix jac = Matrix::Zero(n, n);
  for (int k = 1; k <= n_steps; ++k) {
    u = step.solve(step.mass_times(u));
    Matrix rhs = step.mass_times(jac);
    rhs.noalias() += dt * coupling_matrix(*sys.space, u);
    jac = step.solve(rhs);
  }
  Density d{FemFunction(sys.mesh(), std::move(u)), 0.0, 0.0};
  d.normalization_residual = std::abs(sys.ones_vector().dot(d.u.coeffs) - 1.0);
  return {std::move(d), std::move(jac)};
}

}  // namespace fpdrift

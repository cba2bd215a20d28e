#pragma once

// Data-fidelity functionals on the empirical measure Φ_n = (1/n) Σ δ_{y_i}.
//
//   S_0(Φ_n; v)   = -(1/n) Σ ln v(y_i)
//   S_τ(Φ_n; v)   = ∫ v - (1/n) Σ ln(v(y_i)+τ) - τ ∫ ln(v+τ)
//   KL(u; v)      = ∫ (v-u) - u ln(v/u)
//   T_τ(u; v)     = KL(u+τ; v+τ) if v >= -τ/2, +∞ otherwise
//
// Every ∫ uses the element Gauss rule of the finite element space.

#include "fpdrift/fem_space.hpp"
#include "fpdrift/sde.hpp"

#include <cmath>
#include <optional>

namespace fpdrift {

struct ShiftParam {
  double tau = 1e-3;
};

struct FidelityValue {
  double value = 0.0;
  std::optional<Vector> gradient;

  bool finite() const { return std::isfinite(value); }
  static FidelityValue infinite();
};

FidelityValue neg_log_likelihood(const EmpiricalMeasure& obs, const FemFunction& v);

/// S_τ with its gradient with respect to the nodal coefficients of v.
/// +∞ when v < -τ/2 at any quadrature node, element endpoint or observation.
FidelityValue shifted_fidelity(const EmpiricalMeasure& obs, const FemFunction& v, ShiftParam tau);

/// KL(u+τ; v+τ); tau = 0 gives the plain divergence (0 ln 0 := 0).
FidelityValue kullback_leibler(const FemFunction& u, const FemFunction& v, ShiftParam tau);

/// T_τ: kullback_leibler with the domain constraint v >= -τ/2.
FidelityValue constrained_kullback_leibler(const FemFunction& u, const FemFunction& v,
                                           ShiftParam tau);

/// ½ ||v - û||²_{L2}, gradient ∫ (v - û) φ_j.
FidelityValue l2_fidelity(const FemFunction& data_estimate, const FemFunction& v);

/// Cached evaluator of S_τ for repeated calls with the same data and space.
class ShiftedLikelihood {
public:
  ShiftedLikelihood(FemSpacePtr space, const EmpiricalMeasure& obs, ShiftParam tau);

  /// v >= -τ/2 at every checkpoint.
  bool feasible(const Vector& v) const;
  /// Point evaluation at the quadrature nodes, element endpoints and observations.
  const SparseRowMatrix& checkpoints() const { return checkpoints_; }
  /// +∞ when infeasible.
  double value(const Vector& v) const;
  Vector gradient(const Vector& v) const;
  /// (1/n) Σ φ(y_i) φ(y_i)^T/(v(y_i)+τ)² + τ ∫ φ φ^T/(v+τ)²
  Matrix hessian(const Vector& v) const;
  SparseRowMatrix hessian_sparse(const Vector& v) const;

  double tau() const { return tau_; }
  const FemSpace& space() const { return *space_; }
  std::size_t observations() const { return n_; }

private:
  FemSpacePtr space_;
  SparseRowMatrix at_obs_;
  SparseRowMatrix checkpoints_;
  std::size_t n_;
  double tau_;
};

/// Silverman's rule of thumb 0.9 min(sd, IQR/1.34) n^{-1/5}; never below `floor`.
double silverman_bandwidth(const std::vector<double>& points, double floor);

/// Gaussian kernel density estimate at the mesh nodes, renormalised to unit mass on the mesh interval.
FemFunction kernel_density_estimate(const Mesh& mesh, const EmpiricalMeasure& obs);

}  // namespace fpdrift

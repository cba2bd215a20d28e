#pragma once

#include "fpdrift/types.hpp"

#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace fpdrift {

/// Uniform 1D mesh of cubic Lagrange elements on [a,b].
/// Element e owns global nodes 3e..3e+3; neighbours share endpoints.
class Mesh {
public:
  Mesh(double a, double b, int n_elements);

  double a() const { return a_; }
  double b() const { return b_; }
  double h() const { return (b_ - a_) / n_elements_; }
  int elements() const { return n_elements_; }
  Index dofs() const { return 3 * Index(n_elements_) + 1; }
  double length() const { return b_ - a_; }

  double node(Index i) const { return a_ + double(i) * h() / 3.0; }
  std::vector<double> nodes() const;

  /// Element containing x (clamped to [a,b]) and the local coordinate in [0,1].
  std::pair<int, double> locate(double x) const;

  bool contains(double x) const { return x > a_ && x < b_; }

  friend bool operator==(const Mesh&, const Mesh&) = default;

private:
  double a_;
  double b_;
  int n_elements_;
};

/// Nodal coefficients of a piecewise cubic function.
struct FemFunction {
  Mesh mesh;
  Vector coeffs;

  FemFunction(Mesh m, Vector c);
  static FemFunction zero(const Mesh& m) { return {m, Vector::Zero(m.dofs())}; }
  static FemFunction constant(const Mesh& m, double c) {
    return {m, Vector::Constant(m.dofs(), c)};
  }

  /// Point value; x must lie in [a,b].
  double operator()(double x) const;
  double derivative(double x) const;
};

FemFunction interpolate(const Mesh& mesh, const std::function<double(double)>& f);

double integrate(const FemFunction& f);
double l2_norm(const FemFunction& f);
double l2_inner(const FemFunction& f, const FemFunction& g);

/// Quadrature of g(x) over [lo,hi] ⊂ [a,b] using the element Gauss rule,
/// with sub-intervals split at element boundaries.
double integrate_on(const Mesh& mesh, double lo, double hi,
                    const std::function<double(double)>& g);

/// Minimum over every quadrature node and element endpoint.
double min_on_checkpoints(const FemFunction& f);
double max_abs_on_checkpoints(const FemFunction& f);

/// Drift on (a,b) with constant extension beyond both endpoints.
class DriftField {
public:
  explicit DriftField(FemFunction nodal) : nodal_(std::move(nodal)) {}

  double operator()(double x) const;
  double left_value() const { return nodal_.coeffs(0); }
  double right_value() const { return nodal_.coeffs(nodal_.coeffs.size() - 1); }

  const Mesh& mesh() const { return nodal_.mesh; }
  const FemFunction& nodal() const { return nodal_; }
  const Vector& coeffs() const { return nodal_.coeffs; }

private:
  FemFunction nodal_;
};

DriftField polynomial_drift(const Mesh& mesh, const std::vector<double>& coeffs);

/// -5x^3 - 2x - 0.25, the drift of the reference numerical study.
DriftField reference_drift(const Mesh& mesh);

/// Precomputed quadrature tables and drift-independent Gram matrices for one mesh.
/// Immutable after construction; share it read-only.
class FemSpace {
public:
  explicit FemSpace(Mesh mesh);

  const Mesh& mesh() const { return mesh_; }
  Index dofs() const { return mesh_.dofs(); }

  /// Physical quadrature points, weights (including the Jacobian h).
  const Vector& points() const { return points_; }
  const Vector& weights() const { return weights_; }
  /// Basis values / derivatives at quadrature points: rows = points, cols = dofs.
  const SparseRowMatrix& values() const { return values_; }
  const SparseRowMatrix& gradients() const { return gradients_; }
  /// Basis values at mesh element endpoints.
  const SparseRowMatrix& endpoint_values() const { return endpoint_values_; }

  const Matrix& mass() const { return mass_; }
  /// ∫ φ_i' φ_j'
  const Matrix& laplace() const { return laplace_; }
  const Matrix& h1_gram() const { return h1_gram_; }
  /// ∫ φ_i
  const Vector& ones() const { return ones_; }

  /// Sparse point-evaluation matrix, one row per point.
  SparseRowMatrix evaluation_matrix(const std::vector<double>& xs) const;

  /// Cholesky factor of the mass matrix, used for L2 Riesz maps.
  const Eigen::LLT<Matrix>& mass_factor() const { return mass_llt_; }

private:
  Mesh mesh_;
  Vector points_;
  Vector weights_;
  SparseRowMatrix values_;
  SparseRowMatrix gradients_;
  SparseRowMatrix endpoint_values_;
  Matrix mass_;
  Matrix laplace_;
  Matrix h1_gram_;
  Vector ones_;
  Eigen::LLT<Matrix> mass_llt_;
};

using FemSpacePtr = std::shared_ptr<const FemSpace>;

inline FemSpacePtr make_space(const Mesh& mesh) { return std::make_shared<const FemSpace>(mesh); }

}  // namespace fpdrift

#include "fpdrift/fem_space.hpp"

#include "fpdrift/basis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fpdrift {

namespace {

using Gauss = GaussLegendre5<double>;

}  // namespace

Mesh::Mesh(double a, double b, int n_elements) : a_(a), b_(b), n_elements_(n_elements) {
  if (!(a < b) || !std::isfinite(a) || !std::isfinite(b))
    throw PreconditionError("mesh requires a < b");
  if (n_elements < 1) throw PreconditionError("mesh requires at least one element");
}

std::vector<double> Mesh::nodes() const {
  std::vector<double> xs(static_cast<std::size_t>(dofs()));
  for (Index i = 0; i < dofs(); ++i) xs[static_cast<std::size_t>(i)] = node(i);
  xs.back() = b_;
  return xs;
}

std::pair<int, double> Mesh::locate(double x) const {
  const double t = (std::clamp(x, a_, b_) - a_) / h();
  int e = std::min(static_cast<int>(std::floor(t)), n_elements_ - 1);
  e = std::max(e, 0);
  return {e, std::clamp(t - e, 0.0, 1.0)};
}

FemFunction::FemFunction(Mesh m, Vector c) : mesh(m), coeffs(std::move(c)) {
  if (coeffs.size() != mesh.dofs())
    throw PreconditionError("coefficient vector does not match mesh size");
}

double FemFunction::operator()(double x) const {
  const auto [e, xi] = mesh.locate(x);
  const auto phi = cubic_lagrange(xi);
  double v = 0.0;
  for (int k = 0; k < 4; ++k) v += coeffs(3 * e + k) * phi[k];
  return v;
}

double FemFunction::derivative(double x) const {
  const auto [e, xi] = mesh.locate(x);
  const auto dphi = cubic_lagrange_derivative(xi);
  double v = 0.0;
  for (int k = 0; k < 4; ++k) v += coeffs(3 * e + k) * dphi[k];
  return v / mesh.h();
}

FemFunction interpolate(const Mesh& mesh, const std::function<double(double)>& f) {
  Vector c(mesh.dofs());
  const auto xs = mesh.nodes();
  for (Index i = 0; i < c.size(); ++i) c(i) = f(xs[static_cast<std::size_t>(i)]);
  return {mesh, std::move(c)};
}

double integrate_on(const Mesh& mesh, double lo, double hi,
                    const std::function<double(double)>& g) {
  lo = std::max(lo, mesh.a());
  hi = std::min(hi, mesh.b());
  if (!(lo < hi)) return 0.0;
  double sum = 0.0;
  for (int e = 0; e < mesh.elements(); ++e) {
    const double x0 = std::max(mesh.a() + e * mesh.h(), lo);
    const double x1 = std::min(mesh.a() + (e + 1) * mesh.h(), hi);
    if (!(x0 < x1)) continue;
    for (int q = 0; q < Gauss::size; ++q)
      sum += Gauss::weights[q] * (x1 - x0) * g(x0 + Gauss::nodes[q] * (x1 - x0));
  }
  return sum;
}

double integrate(const FemFunction& f) {
  return integrate_on(f.mesh, f.mesh.a(), f.mesh.b(), [&](double x) { return f(x); });
}

double l2_inner(const FemFunction& f, const FemFunction& g) {
  if (!(f.mesh == g.mesh)) throw MeshMismatch();
  return integrate_on(f.mesh, f.mesh.a(), f.mesh.b(), [&](double x) { return f(x) * g(x); });
}

double l2_norm(const FemFunction& f) { return std::sqrt(l2_inner(f, f)); }

namespace {

template <typename Op>
void for_each_checkpoint(const FemFunction& f, Op&& op) {
  const Mesh& m = f.mesh;
  for (Index i = 0; i < m.dofs(); i += 3) op(f.coeffs(i));
  for (int e = 0; e < m.elements(); ++e) {
    for (int q = 0; q < Gauss::size; ++q) {
      const auto phi = cubic_lagrange(Gauss::nodes[q]);
      double v = 0.0;
      for (int k = 0; k < 4; ++k) v += f.coeffs(3 * e + k) * phi[k];
      op(v);
    }
  }
}

}  // namespace

double min_on_checkpoints(const FemFunction& f) {
  double m = std::numeric_limits<double>::infinity();
  for_each_checkpoint(f, [&](double v) { m = std::min(m, v); });
  return m;
}

double max_abs_on_checkpoints(const FemFunction& f) {
  double m = 0.0;
  for_each_checkpoint(f, [&](double v) { m = std::max(m, std::abs(v)); });
  return m;
}

double DriftField::operator()(double x) const {
  if (x <= nodal_.mesh.a()) return left_value();
  if (x >= nodal_.mesh.b()) return right_value();
  return nodal_(x);
}

DriftField polynomial_drift(const Mesh& mesh, const std::vector<double>& coeffs) {
  return DriftField(interpolate(mesh, [&](double x) {
    double v = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) v = v * x + *it;
    return v;
  }));
}

DriftField reference_drift(const Mesh& mesh) {
  return polynomial_drift(mesh, {-0.25, -2.0, 0.0, -5.0});
}

FemSpace::FemSpace(Mesh mesh) : mesh_(mesh) {
  const Index n = mesh_.dofs();
  const int ne = mesh_.elements();
  const double h = mesh_.h();
  const Index nq = Index(ne) * Gauss::size;

  points_.resize(nq);
  weights_.resize(nq);
  mass_ = Matrix::Zero(n, n);
  laplace_ = Matrix::Zero(n, n);
  ones_ = Vector::Zero(n);

  std::vector<Eigen::Triplet<double>> vt;
  std::vector<Eigen::Triplet<double>> gt;
  vt.reserve(static_cast<std::size_t>(nq) * 4);
  gt.reserve(static_cast<std::size_t>(nq) * 4);

  for (int e = 0; e < ne; ++e) {
    const double x0 = mesh_.a() + e * h;
    for (int q = 0; q < Gauss::size; ++q) {
      const Index row = Index(e) * Gauss::size + q;
      const double xi = Gauss::nodes[q];
      const double w = Gauss::weights[q] * h;
      points_(row) = x0 + xi * h;
      weights_(row) = w;
      const auto phi = cubic_lagrange(xi);
      const auto dphi = cubic_lagrange_derivative(xi);
      for (int i = 0; i < 4; ++i) {
        const Index gi = 3 * Index(e) + i;
        vt.emplace_back(row, gi, phi[i]);
        gt.emplace_back(row, gi, dphi[i] / h);
        ones_(gi) += w * phi[i];
        for (int j = 0; j < 4; ++j) {
          const Index gj = 3 * Index(e) + j;
          mass_(gi, gj) += w * phi[i] * phi[j];
          laplace_(gi, gj) += w * dphi[i] * dphi[j] / (h * h);
        }
      }
    }
  }
  values_.resize(nq, n);
  values_.setFromTriplets(vt.begin(), vt.end());
  gradients_.resize(nq, n);
  gradients_.setFromTriplets(gt.begin(), gt.end());

  std::vector<Eigen::Triplet<double>> et;
  for (int e = 0; e <= ne; ++e) et.emplace_back(e, 3 * Index(e), 1.0);
  endpoint_values_.resize(ne + 1, n);
  endpoint_values_.setFromTriplets(et.begin(), et.end());

  h1_gram_ = mass_ + laplace_;
  mass_llt_.compute(mass_);
}

SparseRowMatrix FemSpace::evaluation_matrix(const std::vector<double>& xs) const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(xs.size() * 4);
  for (std::size_t r = 0; r < xs.size(); ++r) {
    const auto [e, xi] = mesh_.locate(xs[r]);
    const auto phi = cubic_lagrange(xi);
    for (int k = 0; k < 4; ++k) t.emplace_back(Index(r), 3 * Index(e) + k, phi[k]);
  }
  SparseRowMatrix m(Index(xs.size()), dofs());
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

}  // namespace fpdrift

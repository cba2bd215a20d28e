#include "fpdrift/fidelity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fpdrift {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_positive_tau(ShiftParam tau) {
  if (!(tau.tau > 0.0)) throw PreconditionError("shift parameter tau must be positive");
}

double quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * double(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - double(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

FidelityValue FidelityValue::infinite() { return {kInf, std::nullopt}; }

FidelityValue neg_log_likelihood(const EmpiricalMeasure& obs, const FemFunction& v) {
  if (obs.empty()) throw NoObservations();
  const FemSpace space(v.mesh);
  const SparseRowMatrix at_obs = space.evaluation_matrix(obs.points);
  const Vector vo = at_obs * v.coeffs;
  if (vo.minCoeff() <= 0.0) return FidelityValue::infinite();
  const double n = double(obs.n());
  const double value = -vo.array().log().sum() / n;
  Vector grad = -(at_obs.transpose() * vo.cwiseInverse()) / n;
  return {value, std::move(grad)};
}

ShiftedLikelihood::ShiftedLikelihood(FemSpacePtr space, const EmpiricalMeasure& obs,
                                     ShiftParam tau)
    : space_(std::move(space)), n_(obs.n()), tau_(tau.tau) {
  require_positive_tau(tau);
  if (obs.empty()) throw NoObservations();
  at_obs_ = space_->evaluation_matrix(obs.points);

  const SparseRowMatrix& q = space_->values();
  const SparseRowMatrix& e = space_->endpoint_values();
  checkpoints_.resize(q.rows() + e.rows() + at_obs_.rows(), q.cols());
  checkpoints_.reserve(q.nonZeros() + e.nonZeros() + at_obs_.nonZeros());
  Index row = 0;
  for (const SparseRowMatrix* part : {&q, &e, static_cast<const SparseRowMatrix*>(&at_obs_)}) {
    for (Index r = 0; r < part->rows(); ++r, ++row) {
      checkpoints_.startVec(row);
      for (SparseRowMatrix::InnerIterator it(*part, r); it; ++it)
        checkpoints_.insertBack(row, it.col()) = it.value();
    }
  }
  checkpoints_.finalize();
}

bool ShiftedLikelihood::feasible(const Vector& v) const {
  return (checkpoints_ * v).minCoeff() >= -0.5 * tau_;
}

double ShiftedLikelihood::value(const Vector& v) const {
  if (!feasible(v)) return kInf;
  const Vector vo = at_obs_ * v;
  const Vector vq = space_->values() * v;
  const double data = (vo.array() + tau_).log().sum() / double(n_);
  const double background = space_->weights().dot((vq.array() + tau_).log().matrix());
  return space_->ones().dot(v) - data - tau_ * background;
}

Vector ShiftedLikelihood::gradient(const Vector& v) const {
  const Vector vo = at_obs_ * v;
  const Vector vq = space_->values() * v;
  const Vector wo = (vo.array() + tau_).inverse().matrix() / double(n_);
  const Vector wq = (space_->weights().array() / (vq.array() + tau_)).matrix() * tau_;
  Vector g = space_->ones();
  g -= at_obs_.transpose() * wo;
  g -= space_->values().transpose() * wq;
  return g;
}

Matrix ShiftedLikelihood::hessian(const Vector& v) const { return Matrix(hessian_sparse(v)); }

SparseRowMatrix ShiftedLikelihood::hessian_sparse(const Vector& v) const {
  const Vector vo = at_obs_ * v;
  const Vector vq = space_->values() * v;
  const Vector wo = (vo.array() + tau_).square().inverse().matrix() / double(n_);
  const Vector wq = (space_->weights().array() / (vq.array() + tau_).square()).matrix() * tau_;
  const SparseRowMatrix data = at_obs_.transpose() * wo.asDiagonal() * at_obs_;
  const SparseRowMatrix background =
      space_->values().transpose() * wq.asDiagonal() * space_->values();
  return data + background;
}

FidelityValue shifted_fidelity(const EmpiricalMeasure& obs, const FemFunction& v, ShiftParam tau) {
  const ShiftedLikelihood s(make_space(v.mesh), obs, tau);
  if (!s.feasible(v.coeffs)) return FidelityValue::infinite();
  return {s.value(v.coeffs), s.gradient(v.coeffs)};
}

FidelityValue kullback_leibler(const FemFunction& u, const FemFunction& v, ShiftParam tau) {
  if (!(u.mesh == v.mesh)) throw MeshMismatch();
  if (tau.tau < 0.0) throw PreconditionError("shift parameter must be non-negative");
  const FemSpace space(u.mesh);
  const Vector a = (space.values() * u.coeffs).array() + tau.tau;
  const Vector b = (space.values() * v.coeffs).array() + tau.tau;
  if (a.minCoeff() < -1e-12) throw PreconditionError("first argument must be non-negative");

  double value = 0.0;
  Vector dual(a.size());
  for (Index q = 0; q < a.size(); ++q) {
    const double aq = std::max(a(q), 0.0);
    double term;
    if (aq == 0.0) {
      term = b(q);
      dual(q) = 1.0;
    } else if (b(q) <= 0.0) {
      return FidelityValue::infinite();
    } else {
      term = b(q) - aq - aq * std::log(b(q) / aq);
      dual(q) = 1.0 - aq / b(q);
    }
    value += space.weights()(q) * term;
  }
  Vector grad = space.values().transpose() * space.weights().cwiseProduct(dual);
  return {value, std::move(grad)};
}

FidelityValue constrained_kullback_leibler(const FemFunction& u, const FemFunction& v,
                                           ShiftParam tau) {
  require_positive_tau(tau);
  if (min_on_checkpoints(v) < -0.5 * tau.tau) return FidelityValue::infinite();
  return kullback_leibler(u, v, tau);
}

FidelityValue l2_fidelity(const FemFunction& data_estimate, const FemFunction& v) {
  if (!(data_estimate.mesh == v.mesh)) throw MeshMismatch();
  const FemSpace space(v.mesh);
  const Vector diff = v.coeffs - data_estimate.coeffs;
  Vector grad = space.mass() * diff;
  return {0.5 * diff.dot(grad), std::move(grad)};
}

double silverman_bandwidth(const std::vector<double>& points, double floor) {
  const std::size_t n = points.size();
  if (n == 0) throw NoObservations();
  if (n < 2) return floor;
  std::vector<double> sorted(points);
  std::sort(sorted.begin(), sorted.end());
  double mean = 0.0;
  for (double y : sorted) mean += y;
  mean /= double(n);
  double ss = 0.0;
  for (double y : sorted) ss += (y - mean) * (y - mean);
  const double sd = std::sqrt(ss / double(n - 1));
  const double iqr = (quantile(sorted, 0.75) - quantile(sorted, 0.25)) / 1.34;
  double spread = std::min(sd, iqr);
  if (!(spread > 0.0)) spread = std::max(sd, iqr);
  return std::max(0.9 * spread * std::pow(double(n), -0.2), floor);
}

FemFunction kernel_density_estimate(const Mesh& mesh, const EmpiricalMeasure& obs) {
  if (obs.empty()) throw NoObservations();
  const double bw = silverman_bandwidth(obs.points, mesh.h() / 3.0);
  const double norm = 1.0 / (double(obs.n()) * bw * std::sqrt(2.0 * M_PI));
  FemFunction f = interpolate(mesh, [&](double x) {
    double s = 0.0;
    for (double y : obs.points) {
      const double z = (x - y) / bw;
      s += std::exp(-0.5 * z * z);
    }
    return s * norm;
  });
  f.coeffs /= integrate(f);
  return f;
}

}  // namespace fpdrift

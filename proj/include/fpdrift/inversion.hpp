#pragma once

// Iteratively regularized Newton method
//
//   mu_{k+1} = argmin_f  S(Φ_n; F(mu_k) + F'[mu_k](f - mu_k)) + alpha_k R(f)
//
// with alpha_k = alpha0 q^k, R the centered H1 penalty and S either the
// shifted likelihood S_τ (solved by damped Newton) or ½||· - û||² against a
// kernel density estimate û (solved by G-preconditioned conjugate gradients).

#include "fpdrift/fidelity.hpp"
#include "fpdrift/fokker_planck.hpp"
#include "fpdrift/penalty.hpp"
#include "fpdrift/sde.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fpdrift {

enum class FidelityKind { kl, l2 };

const char* to_string(FidelityKind kind);
FidelityKind fidelity_from_string(const std::string& name);

struct NewtonConfig {
  double alpha0 = 1.0;
  double decay_q = 2.0 / 3.0;
  int max_outer = 25;
  /// KL: H1-dual gradient norm.  L2: relative CG residual.
  double inner_tol = 1e-9;
  int inner_max = 100;
  FidelityKind fidelity_kind = FidelityKind::kl;
  ShiftParam tau{1e-3};

  static NewtonConfig defaults(FidelityKind kind);

  /// alpha0 q^k, used by the inner problem that produces iterate k+1.
  double alpha(int k) const;
  void validate() const;
};

struct TraceEntry {
  int iteration = 0;
  /// Absent for the initial guess.
  std::optional<double> alpha;
  Vector drift;
  double fidelity = 0.0;
  double penalty = 0.0;
  std::optional<double> l2_error;
  /// Iterations of the inner solve that produced this entry.
  int inner_iterations = 0;
};

struct NewtonTrace {
  std::vector<TraceEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

class ConvergenceError : public Error {
public:
  ConvergenceError(const std::string& what, NewtonTrace trace = {})
      : Error(what), trace_(std::move(trace)) {}
  const NewtonTrace& trace() const { return trace_; }

private:
  NewtonTrace trace_;
};

struct Linearization {
  Density density;
  /// dF/dmu in nodal coordinates, dofs x dofs.
  Matrix jacobian;
};

/// The coefficient-to-density map F and its derivative.
class ForwardOperator {
public:
  virtual ~ForwardOperator() = default;
  virtual const FemSpacePtr& space() const = 0;
  virtual Density evaluate(const DriftField& mu) const = 0;
  virtual Linearization linearize(const DriftField& mu) const = 0;
};

/// Stationary density.
class StationaryForward final : public ForwardOperator {
public:
  StationaryForward(FemSpacePtr space, double sigma);

  const FemSpacePtr& space() const override { return space_; }
  Density evaluate(const DriftField& mu) const override;
  Linearization linearize(const DriftField& mu) const override;

private:
  FemSpacePtr space_;
  double sigma_;
};

/// Density at the end of an implicit-Euler run started from a fixed u0.
class ParabolicForward final : public ForwardOperator {
public:
  ParabolicForward(FemSpacePtr space, double sigma, Density initial, double duration, int steps);

  const FemSpacePtr& space() const override { return space_; }
  Density evaluate(const DriftField& mu) const override;
  Linearization linearize(const DriftField& mu) const override;

private:
  FemSpacePtr space_;
  double sigma_;
  Density initial_;
  double duration_;
  int steps_;
};

/// Affine model v(h) = offset + jacobian h of the density around base_drift;
/// h ranges over the free drift coefficients.
struct LinearizedProblem {
  FemSpacePtr space;
  Vector base_drift;
  Vector offset;
  Matrix jacobian;
  std::vector<Index> free;

  LinearizedProblem(FemSpacePtr space, const Linearization& lin, const Vector& base,
                    BoundaryMode mode);
  Vector full_step(const Vector& h) const;
};

struct InnerResult {
  /// Full nodal drift after the step.
  Vector drift;
  int iterations = 0;
  std::vector<double> objective;
  /// KL: H1-dual gradient norms.  L2: G^{-1}-norms of the CG residual.
  std::vector<double> residual;
};

InnerResult inner_solve_kl(const LinearizedProblem& lin, const ShiftedLikelihood& fidelity,
                           double alpha, const PenaltyConfig& pen, const NewtonConfig& cfg);

InnerResult inner_solve_l2(const LinearizedProblem& lin, const FemFunction& data_estimate,
                           double alpha, const PenaltyConfig& pen, const NewtonConfig& cfg);

/// argmin_k errors[k], ties to the smallest index.
std::size_t oracle_stop(const std::vector<double>& errors);
std::size_t oracle_stop(const NewtonTrace& trace, const DriftField& truth);

double l2_distance(const DriftField& a, const DriftField& b);
/// L2 distance on [lo,hi] divided by sqrt(hi - lo).
double rms_distance(const DriftField& a, const DriftField& b, double lo, double hi);

struct EstimateResult {
  DriftField estimate;
  NewtonTrace trace;
  /// Oracle-selected trace index (only with a truth).
  std::optional<std::size_t> selected;
  /// Error of the estimate over the error of the initial guess.
  std::optional<double> normalized_error;
};

EstimateResult newton_estimate(const EmpiricalMeasure& obs, const NewtonConfig& cfg,
                               const PenaltyConfig& pen, const ForwardOperator& forward,
                               const std::optional<DriftField>& truth = std::nullopt);

}  // namespace fpdrift

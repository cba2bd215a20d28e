#include "fpdrift/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fpdrift {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kMinStep = 1e-14;
// Newton decrement below this (relative to the objective) is lost in the
// rounding error of evaluating the objective.
constexpr double kDecrementFloor = 64.0 * std::numeric_limits<double>::epsilon();

Eigen::LLT<Matrix> free_gram_factor(const PenaltyConfig& pen, const std::vector<Index>& free) {
  Eigen::LLT<Matrix> llt(pen.gram(free, free));
  if (llt.info() != Eigen::Success) throw SolverError("H1 Gram matrix is not positive definite");
  return llt;
}

double penalty_of(const PenaltyConfig& pen, const Vector& drift) {
  const Vector diff = drift - pen.center.coeffs();
  return diff.dot(pen.gram * diff);
}

}  // namespace

const char* to_string(FidelityKind kind) { return kind == FidelityKind::kl ? "kl" : "l2"; }

FidelityKind fidelity_from_string(const std::string& name) {
  if (name == "kl") return FidelityKind::kl;
  if (name == "l2") return FidelityKind::l2;
  throw PreconditionError("unknown fidelity '" + name + "'");
}

NewtonConfig NewtonConfig::defaults(FidelityKind kind) {
  NewtonConfig cfg;
  cfg.fidelity_kind = kind;
  if (kind == FidelityKind::l2) {
    cfg.inner_tol = 1e-10;
    cfg.inner_max = 2000;
  }
  return cfg;
}

double NewtonConfig::alpha(int k) const { return alpha0 * std::pow(decay_q, k); }

void NewtonConfig::validate() const {
  if (!(alpha0 > 0.0)) throw PreconditionError("alpha0 must be positive");
  if (!(decay_q > 0.0 && decay_q < 1.0)) throw PreconditionError("decay must lie in (0,1)");
  if (max_outer < 0) throw PreconditionError("max_outer must be non-negative");
  if (!(inner_tol > 0.0)) throw PreconditionError("inner_tol must be positive");
  if (inner_max < 1) throw PreconditionError("inner_max must be positive");
  if (!(tau.tau > 0.0)) throw PreconditionError("tau must be positive");
}

StationaryForward::StationaryForward(FemSpacePtr space, double sigma)
    : space_(std::move(space)), sigma_(sigma) {}

Density StationaryForward::evaluate(const DriftField& mu) const {
  return solve_stationary(assemble(space_, mu, sigma_));
}

Linearization StationaryForward::linearize(const DriftField& mu) const {
  const AssembledSystem sys = assemble(space_, mu, sigma_);
  Density d = solve_stationary(sys);
  Matrix j = derivative_matrix(sys, d);
  return {std::move(d), std::move(j)};
}

ParabolicForward::ParabolicForward(FemSpacePtr space, double sigma, Density initial,
                                   double duration, int steps)
    : space_(std::move(space)),
      sigma_(sigma),
      initial_(std::move(initial)),
      duration_(duration),
      steps_(steps) {}

Density ParabolicForward::evaluate(const DriftField& mu) const {
  return solve_parabolic(assemble(space_, mu, sigma_), initial_, duration_, steps_);
}

Linearization ParabolicForward::linearize(const DriftField& mu) const {
  auto lin = parabolic_linearization(assemble(space_, mu, sigma_), initial_, duration_, steps_);
  return {std::move(lin.density), std::move(lin.jacobian)};
}

LinearizedProblem::LinearizedProblem(FemSpacePtr sp, const Linearization& lin,
                                     const Vector& base, BoundaryMode mode)
    : space(std::move(sp)), base_drift(base), offset(lin.density.u.coeffs) {
  free = free_dofs(mode, base.size());
  jacobian = lin.jacobian(Eigen::all, free);
}

Vector LinearizedProblem::full_step(const Vector& h) const {
  Vector out = Vector::Zero(base_drift.size());
  out(free) = h;
  return out;
}

namespace {

// Damped Newton on
//   S_τ(b + J h) + α ||d0 + P h||²_G - (ρ/m) Σ_c ln(C(b + J h) + τ/2)_c
// where C evaluates at the m feasibility checkpoints.  ρ = 0 is the plain
// problem with the hard constraint v >= -τ/2.
class KlNewton {
public:
  KlNewton(const LinearizedProblem& lin, const ShiftedLikelihood& fidelity, double alpha,
           const PenaltyConfig& pen, const NewtonConfig& cfg)
      : lin_(lin),
        fid_(fidelity),
        pen_(pen),
        cfg_(cfg),
        alpha_(alpha),
        g_ff_(pen.gram(lin.free, lin.free)),
        gram_ff_(free_gram_factor(pen, lin.free)),
        checks_(fidelity.checkpoints()) {}

  struct State {
    Vector h;
    Vector v;
    Vector diff;
    double phi = 0.0;
  };

  enum class Exit { converged, blocked };

  State start() const {
    State x{Vector::Zero(Index(lin_.free.size())), lin_.offset,
            lin_.base_drift - pen_.center.coeffs(), 0.0};
    x.phi = objective(x.v, x.diff);
    return x;
  }

  void set_barrier(double rho) { rho_ = rho; }
  double objective(const Vector& v, const Vector& diff) const {
    const double s = fid_.value(v);
    if (!std::isfinite(s)) return s;
    double barrier = 0.0;
    if (rho_ > 0.0) {
      const Vector slack = (checks_ * v).array() + 0.5 * fid_.tau();
      if (slack.minCoeff() <= 0.0) return std::numeric_limits<double>::infinity();
      barrier = -rho_ / double(slack.size()) * slack.array().log().sum();
    }
    return s + alpha_ * diff.dot(pen_.gram * diff) + barrier;
  }

  // Runs until the H1-dual gradient norm is <= tol or the Newton decrement is
  // negligible.  With ρ = 0 it returns `blocked` as soon as a trial step leaves
  // the domain.
  Exit run(State& x, double tol, InnerResult& res) const {
    const auto& free = lin_.free;
    const Matrix& jac = lin_.jacobian;
    for (int it = 0;; ++it) {
      Vector gv = fid_.gradient(x.v);
      SparseRowMatrix hv = fid_.hessian_sparse(x.v);
      if (rho_ > 0.0) {
        const Vector slack = (checks_ * x.v).array() + 0.5 * fid_.tau();
        const double w = rho_ / double(slack.size());
        gv -= checks_.transpose() * (w * slack.array().inverse()).matrix();
        const Vector curv = w * slack.array().square().inverse();
        hv += SparseRowMatrix(checks_.transpose() * curv.asDiagonal() * checks_);
      }
      const Vector grad = jac.transpose() * gv + 2.0 * alpha_ * (pen_.gram * x.diff)(free);
      const double dual_norm = std::sqrt(std::max(grad.dot(gram_ff_.solve(grad)), 0.0));
      res.residual.push_back(dual_norm);
      if (dual_norm <= tol) return Exit::converged;
      if (it >= cfg_.inner_max)
        throw ConvergenceError("KL inner Newton did not reach tolerance in " +
                               std::to_string(cfg_.inner_max) + " steps");

      Matrix hess = jac.transpose() * (hv * jac);
      hess += 2.0 * alpha_ * g_ff_;
      Eigen::LLT<Matrix> llt(hess);
      const Vector dir = llt.info() == Eigen::Success ? Vector(-llt.solve(grad))
                                                      : Vector(-hess.ldlt().solve(grad));
      const double slope = grad.dot(dir);
      // With a barrier the decrement bounds the suboptimality, which is already
      // O(ρ) at the centre; the dual norm stays large along the stiff normals.
      if (-slope <= std::max(kDecrementFloor * std::max(1.0, std::abs(x.phi)), rho_))
        return Exit::converged;

      const Vector dv = jac * dir;
      const Vector ddiff = lin_.full_step(dir);
      for (double step = 1.0;; step *= 0.5) {
        if (step < kMinStep) throw ConvergenceError("KL inner line search stalled");
        const Vector v_new = x.v + step * dv;
        const Vector diff_new = x.diff + step * ddiff;
        const double phi_new = objective(v_new, diff_new);
        if (!std::isfinite(phi_new)) {
          if (rho_ == 0.0) return Exit::blocked;
          continue;
        }
        if (phi_new <= x.phi + kArmijo * step * slope) {
          x.v = v_new;
          x.diff = diff_new;
          x.h += step * dir;
          x.phi = phi_new;
          break;
        }
      }
      res.objective.push_back(x.phi);
      ++res.iterations;
    }
  }

private:
  const LinearizedProblem& lin_;
  const ShiftedLikelihood& fid_;
  const PenaltyConfig& pen_;
  const NewtonConfig& cfg_;
  double alpha_;
  Matrix g_ff_;
  Eigen::LLT<Matrix> gram_ff_;
  const SparseRowMatrix& checks_;
  double rho_ = 0.0;
};

// Barrier weights of the fallback path, relative to the objective.
constexpr double kBarrierStart = 1e-2;
constexpr double kBarrierEnd = 1e-12;
constexpr double kBarrierDecay = 0.1;

}  // namespace

InnerResult inner_solve_kl(const LinearizedProblem& lin, const ShiftedLikelihood& fidelity,
                           double alpha, const PenaltyConfig& pen, const NewtonConfig& cfg) {
  KlNewton newton(lin, fidelity, alpha, pen, cfg);
  KlNewton::State x = newton.start();
  if (!std::isfinite(x.phi))
    throw ConvergenceError("linearization point violates the domain constraint");

  InnerResult res;
  res.objective.push_back(x.phi);
  if (newton.run(x, cfg.inner_tol, res) == KlNewton::Exit::blocked) {
    // The minimizer may sit on v = -τ/2, where the gradient does not vanish.
    // Follow the central path of a log barrier on the checkpoint constraints
    // from the current (feasible) iterate instead.
    const double scale = std::max(1.0, std::abs(x.phi));
    for (double rho = kBarrierStart;; rho *= kBarrierDecay) {
      const bool last = rho * kBarrierDecay < kBarrierEnd;
      newton.set_barrier(rho * scale);
      x.phi = newton.objective(x.v, x.diff);
      if (!std::isfinite(x.phi)) throw ConvergenceError("iterate lies on the domain boundary");
      newton.run(x, last ? cfg.inner_tol : std::max(cfg.inner_tol, rho), res);
      if (last) break;
    }
    newton.set_barrier(0.0);
    x.phi = newton.objective(x.v, x.diff);
    res.objective.push_back(x.phi);
  }
  res.drift = lin.base_drift + lin.full_step(x.h);
  return res;
}

InnerResult inner_solve_l2(const LinearizedProblem& lin, const FemFunction& data_estimate,
                           double alpha, const PenaltyConfig& pen, const NewtonConfig& cfg) {
  const auto& free = lin.free;
  const Matrix& jac = lin.jacobian;
  if (!(data_estimate.mesh == lin.space->mesh())) throw MeshMismatch();
  const Matrix& mass = lin.space->mass();
  const Eigen::LLT<Matrix> gram_ff = free_gram_factor(pen, free);
  const Matrix g_ff = pen.gram(free, free);
  const Vector offset_drift = lin.base_drift - pen.center.coeffs();

  auto apply = [&](const Vector& p) -> Vector {
    return jac.transpose() * (mass * (jac * p)) + 2.0 * alpha * (g_ff * p);
  };
  auto objective = [&](const Vector& h) {
    const Vector r = lin.offset + jac * h - data_estimate.coeffs;
    const Vector d = offset_drift + lin.full_step(h);
    return 0.5 * r.dot(mass * r) + alpha * d.dot(pen.gram * d);
  };

  const Vector rhs = jac.transpose() * (mass * (data_estimate.coeffs - lin.offset)) -
                     2.0 * alpha * (pen.gram * offset_drift)(free);

  InnerResult res;
  Vector h = Vector::Zero(rhs.size());
  res.objective.push_back(objective(h));
  Vector r = rhs;
  Vector z = gram_ff.solve(r);
  double rz = r.dot(z);
  const double rhs_norm = std::sqrt(std::max(rz, 0.0));
  res.residual.push_back(rhs_norm);
  if (rhs_norm == 0.0) {
    res.drift = lin.base_drift;
    return res;
  }
  Vector p = z;
  for (int it = 0;; ++it) {
    if (std::sqrt(std::max(rz, 0.0)) <= cfg.inner_tol * rhs_norm) break;
    if (it >= cfg.inner_max)
      throw ConvergenceError("CG did not reach tolerance in " + std::to_string(cfg.inner_max) +
                             " iterations");
    const Vector ap = apply(p);
    const double curvature = p.dot(ap);
    if (!(curvature > 0.0)) throw ConvergenceError("CG met non-positive curvature");
    const double step = rz / curvature;
    h += step * p;
    r -= step * ap;
    z = gram_ff.solve(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
    res.residual.push_back(std::sqrt(std::max(rz, 0.0)));
    res.objective.push_back(objective(h));
    res.iterations = it + 1;
  }
  res.drift = lin.base_drift + lin.full_step(h);
  return res;
}

std::size_t oracle_stop(const std::vector<double>& errors) {
  if (errors.empty()) throw PreconditionError("empty trace");
  return static_cast<std::size_t>(std::min_element(errors.begin(), errors.end()) - errors.begin());
}

double l2_distance(const DriftField& a, const DriftField& b) {
  if (!(a.mesh() == b.mesh())) throw MeshMismatch();
  return l2_norm(FemFunction(a.mesh(), a.coeffs() - b.coeffs()));
}

double rms_distance(const DriftField& a, const DriftField& b, double lo, double hi) {
  if (!(a.mesh() == b.mesh())) throw MeshMismatch();
  const FemFunction d(a.mesh(), a.coeffs() - b.coeffs());
  const double sq = integrate_on(a.mesh(), lo, hi, [&](double x) {
    const double v = d(x);
    return v * v;
  });
  return std::sqrt(sq / (std::min(hi, a.mesh().b()) - std::max(lo, a.mesh().a())));
}

std::size_t oracle_stop(const NewtonTrace& trace, const DriftField& truth) {
  std::vector<double> errors;
  errors.reserve(trace.size());
  for (const auto& e : trace.entries)
    errors.push_back(l2_distance(DriftField(FemFunction(truth.mesh(), e.drift)), truth));
  return oracle_stop(errors);
}

EstimateResult newton_estimate(const EmpiricalMeasure& obs, const NewtonConfig& cfg,
                               const PenaltyConfig& pen, const ForwardOperator& forward,
                               const std::optional<DriftField>& truth) {
  cfg.validate();
  if (obs.empty()) throw NoObservations();
  const FemSpacePtr& space = forward.space();
  const Mesh& mesh = space->mesh();
  if (!(pen.center.mesh() == mesh)) throw MeshMismatch();
  if (truth && !(truth->mesh() == mesh)) throw MeshMismatch();

  std::optional<ShiftedLikelihood> likelihood;
  std::optional<FemFunction> data_estimate;
  if (cfg.fidelity_kind == FidelityKind::kl)
    likelihood.emplace(space, obs, cfg.tau);
  else
    data_estimate = kernel_density_estimate(mesh, obs);

  auto fidelity_of = [&](const Vector& density) {
    if (likelihood) return likelihood->value(density);
    const Vector r = density - data_estimate->coeffs;
    return 0.5 * r.dot(space->mass() * r);
  };

  NewtonTrace trace;
  Vector mu = pen.center.coeffs();
  int last_inner = 0;
  for (int k = 0;; ++k) {
    const DriftField current(FemFunction(mesh, mu));
    std::optional<Linearization> lin;
    Density density = k < cfg.max_outer ? (lin = forward.linearize(current))->density
                                        : forward.evaluate(current);
    TraceEntry entry;
    entry.iteration = k;
    if (k > 0) entry.alpha = cfg.alpha(k - 1);
    entry.drift = mu;
    entry.fidelity = fidelity_of(density.u.coeffs);
    entry.penalty = penalty_of(pen, mu);
    if (truth) entry.l2_error = l2_distance(current, *truth);
    entry.inner_iterations = last_inner;
    trace.entries.push_back(std::move(entry));
    if (k == cfg.max_outer) break;

    const LinearizedProblem problem(space, *lin, mu, pen.boundary_mode);
    const double alpha = cfg.alpha(k);
    try {
      InnerResult inner = likelihood
                              ? inner_solve_kl(problem, *likelihood, alpha, pen, cfg)
                              : inner_solve_l2(problem, *data_estimate, alpha, pen, cfg);
      mu = std::move(inner.drift);
      last_inner = inner.iterations;
    } catch (const ConvergenceError& e) {
      throw ConvergenceError(std::string(e.what()) + " at outer step " + std::to_string(k + 1),
                             std::move(trace));
    }
  }

  EstimateResult result{DriftField(FemFunction(mesh, trace.entries.back().drift)), trace,
                        std::nullopt, std::nullopt};
  if (truth) {
    std::vector<double> errors;
    for (const auto& e : trace.entries) errors.push_back(*e.l2_error);
    const std::size_t sel = oracle_stop(errors);
    result.selected = sel;
    result.estimate = DriftField(FemFunction(mesh, trace.entries[sel].drift));
    result.normalized_error = errors[0] > 0.0 ? errors[sel] / errors[0] : errors[sel];
  }
  return result;
}

}  // namespace fpdrift

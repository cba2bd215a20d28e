// fpdrift: simulate, fp-solve, estimate, mc-study.

#include "fpdrift/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>

using namespace fpdrift;

namespace {

// Opens `path` for writing, or returns std::cout for "-".
class Output {
public:
  explicit Output(const std::string& path) {
    if (path != "-") {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw IoError("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

private:
  std::ofstream file_;
};

struct SimulateArgs {
  std::uint64_t seed = 0;
  std::size_t n_obs = 1000;
  double t_end = 1000.0;
  std::int64_t steps = 100000;
  double burn_in = 0.01;
  double x0 = 0.0;
  std::size_t ensemble = 0;
  std::string model;
  std::string out = "-";
};

int simulate(const SimulateArgs& a) {
  const ModelSpec spec = a.model.empty() ? ModelSpec{} : model_from_json(read_json(a.model));
  const SdeModel model(spec.drift(), spec.sigma, Interval{spec.a, spec.b});
  const PathConfig cfg{a.t_end, a.steps, a.x0, a.seed};
  ObservationSet obs = a.ensemble > 0
                           ? ensemble_observations(model, a.ensemble, cfg)
                           : thin_path(euler_maruyama_path(model, cfg), a.n_obs, a.burn_in, model.domain);
  if (obs.discarded_outside > 0)
    std::fprintf(stderr, "dropped %zu observations outside the domain\n", obs.discarded_outside);
  Output out(a.out);
  write_observations(out.stream(), obs.points);
  return 0;
}

struct FpSolveArgs {
  std::string drift = "reference";
  double sigma = 0.5;
  double a = -1.0;
  double b = 1.0;
  int elements = 64;
  bool parabolic = false;
  double t_end = 1.0;
  int steps = 100;
  double x0 = 0.0;
  double t0 = 0.01;
  std::string out = "-";
};

int fp_solve(const FpSolveArgs& a) {
  const Mesh mesh(a.a, a.b, a.elements);
  const auto space = make_space(mesh);
  const AssembledSystem sys = assemble(space, load_drift(a.drift, mesh), a.sigma);
  Density d = [&] {
    if (!a.parabolic) return solve_stationary(sys);
    if (!(a.t0 < a.t_end)) throw PreconditionError("--t0 must be below --t-end");
    const Density u0 = gaussian_density(mesh, a.x0, a.sigma * std::sqrt(a.t0));
    return solve_parabolic(sys, u0, a.t_end - a.t0, a.steps);
  }();
  std::vector<std::vector<double>> rows;
  for (Index i = 0; i < mesh.dofs(); ++i) rows.push_back({mesh.node(i), d.u.coeffs(i)});
  Output out(a.out);
  write_csv(out.stream(), {"x", "u"}, rows);
  return 0;
}

struct EstimateArgs {
  std::string obs;
  std::string fidelity = "kl";
  double tau = 1e-3;
  double alpha0 = 1.0;
  double decay = 2.0 / 3.0;
  int max_outer = 25;
  int elements = 64;
  double sigma = 0.5;
  std::string boundary = "fixed";
  std::string truth;
  std::string out = "-";
  std::string trace;
};

void write_trace(const std::string& path, const NewtonTrace& trace) {
  Output out(path);
  for (const auto& e : trace.entries) {
    nlohmann::json j = {{"iteration", e.iteration},
                        {"fidelity", e.fidelity},
                        {"penalty", e.penalty},
                        {"inner_iterations", e.inner_iterations}};
    j["alpha"] = e.alpha ? nlohmann::json(*e.alpha) : nlohmann::json();
    j["l2_error"] = e.l2_error ? nlohmann::json(*e.l2_error) : nlohmann::json();
    out.stream() << j.dump() << '\n';
  }
}

int estimate(const EstimateArgs& a) {
  const Mesh mesh(-1.0, 1.0, a.elements);
  const auto space = make_space(mesh);
  const FidelityKind kind = fidelity_from_string(a.fidelity);
  const BoundaryMode mode = boundary_from_string(a.boundary);
  std::optional<DriftField> truth;
  if (!a.truth.empty()) truth = load_drift(a.truth, mesh);
  if (mode == BoundaryMode::fixed && !truth)
    throw PreconditionError("fixed boundary mode takes the boundary values from --truth");

  NewtonConfig cfg = NewtonConfig::defaults(kind);
  cfg.tau.tau = a.tau;
  cfg.alpha0 = a.alpha0;
  cfg.decay_q = a.decay;
  cfg.max_outer = a.max_outer;

  const DriftField center = truth ? default_center(*truth, mode) : DriftField(FemFunction::zero(mesh));
  const PenaltyConfig pen = make_penalty(*space, center, mode);
  const StationaryForward forward(space, a.sigma);
  const EmpiricalMeasure obs(read_observations(a.obs));

  EstimateResult res = [&] {
    try {
      return newton_estimate(obs, cfg, pen, forward, truth);
    } catch (const ConvergenceError& e) {
      if (!a.trace.empty()) write_trace(a.trace, e.trace());
      throw;
    }
  }();

  std::vector<std::vector<double>> rows;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Index i = 0; i < mesh.dofs(); ++i) {
    const double x = mesh.node(i);
    rows.push_back({x, res.estimate(x), truth ? (*truth)(x) : nan});
  }
  Output out(a.out);
  write_csv(out.stream(), {"x", "mu_hat", "mu_true"}, rows);
  if (!a.trace.empty()) write_trace(a.trace, res.trace);
  if (res.normalized_error)
    std::fprintf(stderr, "selected iterate %zu, normalized L2 error %.6g\n", *res.selected,
                 *res.normalized_error);
  return 0;
}

struct StudyArgs {
  std::string config;
  std::string out = "study";
  int replications = 0;
  int threads = 0;
};

int mc_study(const StudyArgs& a) {
  StudyConfig cfg = a.config.empty() ? StudyConfig{} : study_config_from_json(read_json(a.config));
  if (a.replications > 0) cfg.replications = a.replications;
  if (a.threads > 0) cfg.threads = a.threads;
  try {
    const StudyReport report = run_study(cfg);
    emit_report(report, a.out);
    for (const auto& c : report.cells)
      std::fprintf(stderr, "n=%zu %s: mean %.4f var %.4f (%zu runs)\n", c.n_obs,
                   to_string(c.fidelity), c.mean, c.variance, c.runs.size());
    if (!report.failures.empty())
      std::fprintf(stderr, "%zu estimations failed, see failures.csv\n", report.failures.size());
  } catch (const StudyAborted& e) {
    for (const auto& f : e.report().failures)
      std::fprintf(stderr, "replication %d n=%zu %s: %s\n", f.replication, f.n_obs,
                   f.fidelity ? to_string(*f.fidelity) : "data", f.message.c_str());
    throw;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonparametric drift estimation from the Fokker-Planck equation"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Simulate an Euler-Maruyama path and write thinned observations");
  s->add_option("--seed", sim.seed, "RNG seed");
  s->add_option("--n-obs", sim.n_obs, "Number of observations")->check(CLI::PositiveNumber);
  s->add_option("--t-end", sim.t_end, "Time horizon")->check(CLI::PositiveNumber);
  s->add_option("--steps", sim.steps, "Euler steps")->check(CLI::PositiveNumber);
  s->add_option("--burn-in", sim.burn_in, "Discarded leading fraction of the path");
  s->add_option("--x0", sim.x0, "Initial state");
  s->add_option("--ensemble", sim.ensemble, "Observe the terminal values of this many paths instead");
  s->add_option("--model", sim.model, "Model JSON (drift, sigma, a, b)")->check(CLI::ExistingFile);
  s->add_option("--out", sim.out, "Output CSV, '-' for stdout");

  FpSolveArgs fp;
  auto* f = app.add_subcommand("fp-solve", "Solve the Fokker-Planck equation for a drift");
  f->add_option("--drift", fp.drift, "'reference', 'poly:c0,c1,...' or CSV with column mu");
  f->add_option("--sigma", fp.sigma, "Diffusion")->check(CLI::PositiveNumber);
  f->add_option("--a", fp.a, "Left endpoint");
  f->add_option("--b", fp.b, "Right endpoint");
  f->add_option("--mesh-elements", fp.elements, "Cubic elements")->check(CLI::PositiveNumber);
  f->add_flag("--parabolic", fp.parabolic, "Time-dependent problem started from a narrow Gaussian");
  f->add_option("--t-end", fp.t_end, "Final time of the parabolic problem")->check(CLI::PositiveNumber);
  f->add_option("--steps", fp.steps, "Implicit Euler steps")->check(CLI::PositiveNumber);
  f->add_option("--x0", fp.x0, "Centre of the initial Gaussian");
  f->add_option("--t0", fp.t0, "Start time; the initial Gaussian has variance sigma^2 t0")
      ->check(CLI::PositiveNumber);
  f->add_option("--out", fp.out, "Output CSV, '-' for stdout");

  EstimateArgs est;
  auto* e = app.add_subcommand("estimate", "Estimate the drift from observations");
  e->add_option("--obs", est.obs, "Observation CSV (column y)")->required()->check(CLI::ExistingFile);
  e->add_option("--fidelity", est.fidelity, "kl or l2")->check(CLI::IsMember({"kl", "l2"}));
  e->add_option("--tau", est.tau, "Shift parameter")->check(CLI::PositiveNumber);
  e->add_option("--alpha0", est.alpha0, "Initial regularization parameter")->check(CLI::PositiveNumber);
  e->add_option("--decay", est.decay, "Geometric decay of the regularization parameter");
  e->add_option("--max-outer", est.max_outer, "Newton steps")->check(CLI::NonNegativeNumber);
  e->add_option("--mesh-elements", est.elements, "Cubic elements on (-1,1)")->check(CLI::PositiveNumber);
  e->add_option("--sigma", est.sigma, "Diffusion")->check(CLI::PositiveNumber);
  e->add_option("--boundary", est.boundary, "fixed or free")->check(CLI::IsMember({"fixed", "free"}));
  e->add_option("--truth", est.truth, "True drift (preset or CSV); enables oracle stopping");
  e->add_option("--out", est.out, "Reconstruction CSV, '-' for stdout");
  e->add_option("--trace", est.trace, "JSON-lines Newton trace");

  StudyArgs st;
  auto* m = app.add_subcommand("mc-study", "Monte-Carlo comparison of the KL and L2 estimators");
  m->add_option("--config", st.config, "Study config JSON")->check(CLI::ExistingFile);
  m->add_option("--out", st.out, "Output directory");
  m->add_option("--replications", st.replications, "Override the replication count")
      ->check(CLI::PositiveNumber);
  m->add_option("--threads", st.threads, "Worker threads")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (s->parsed()) return simulate(sim);
    if (f->parsed()) return fp_solve(fp);
    if (e->parsed()) return estimate(est);
    if (m->parsed()) return mc_study(st);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 1;
}

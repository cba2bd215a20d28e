#pragma once

// Monte-Carlo study driver: simulate -> observe -> estimate with oracle
// stopping, repeated over seeded replications, aggregated into per-(n, fidelity)
// error statistics.

#include "fpdrift/inversion.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fpdrift {

enum class Scenario { single_path, ensemble };

const char* to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);
const char* to_string(BoundaryMode m);
BoundaryMode boundary_from_string(const std::string& name);

struct ModelSpec {
  /// Polynomial drift coefficients, ascending powers.
  std::vector<double> drift_coeffs{-0.25, -2.0, 0.0, -5.0};
  double sigma = 0.5;
  double a = -1.0;
  double b = 1.0;
  int mesh_elements = 64;

  Mesh mesh() const { return Mesh(a, b, mesh_elements); }
  DriftField drift() const { return polynomial_drift(mesh(), drift_coeffs); }
};

struct StudyConfig {
  Scenario scenario = Scenario::single_path;
  std::vector<std::size_t> n_obs_list{125, 250, 500, 1000};
  int replications = 100;
  std::uint64_t base_seed = 1;
  ModelSpec model;
  BoundaryMode boundary_mode = BoundaryMode::fixed;
  std::vector<FidelityKind> fidelities{FidelityKind::kl, FidelityKind::l2};
  NewtonConfig kl = study_defaults(FidelityKind::kl);
  NewtonConfig l2 = study_defaults(FidelityKind::l2);

  /// Single path.
  double t_end = 1000.0;
  std::int64_t n_steps = 100000;
  double burn_in_fraction = 0.01;

  /// Ensemble: every path starts at x0 and is observed at ensemble_t_end.
  double x0 = 0.0;
  double ensemble_t_end = 1.0;
  std::int64_t ensemble_steps = 1000;
  /// Start time of the parabolic forward model; its initial density is
  /// N(x0, sigma² t0) restricted to the domain.
  double parabolic_t0 = 0.01;
  int parabolic_steps = 100;
  /// Diffusion used to generate data when it differs from the model's.
  std::optional<double> simulation_sigma;

  /// Interior window of the boundary diagnostics.
  double interior_lo = -0.8;
  double interior_hi = 0.8;

  double max_failure_fraction = 0.05;
  /// 0 picks the hardware concurrency.
  int threads = 0;

  static NewtonConfig study_defaults(FidelityKind kind);
  const NewtonConfig& newton(FidelityKind kind) const { return kind == FidelityKind::kl ? kl : l2; }
  std::uint64_t replication_seed(int r) const { return base_seed ^ std::uint64_t(r); }
  void validate() const;
};

struct RunResult {
  int replication = 0;
  std::uint64_t seed = 0;
  std::size_t n_obs = 0;
  FidelityKind fidelity = FidelityKind::kl;
  double normalized_error = 0.0;
  double l2_error = 0.0;
  /// RMS drift error over the interior window and over the whole domain.
  double interior_rms = 0.0;
  double full_rms = 0.0;
  std::size_t selected = 0;
  int newton_iterations = 0;
  std::size_t observations_used = 0;
  Vector estimate;
  double seconds = 0.0;
};

struct RunFailure {
  int replication = 0;
  std::size_t n_obs = 0;
  /// Absent when the data generation failed for the whole replication.
  std::optional<FidelityKind> fidelity;
  std::string message;
};

struct CellSummary {
  std::size_t n_obs = 0;
  FidelityKind fidelity = FidelityKind::kl;
  /// Successful runs in replication order.
  std::vector<RunResult> runs;
  double mean = 0.0;
  /// Unbiased sample variance; zero for a single run.
  double variance = 0.0;
  /// Index into `runs` of the median-error run (lower median, ties by replication).
  std::size_t median = 0;
};

struct StudyReport {
  StudyConfig config;
  std::vector<CellSummary> cells;
  std::vector<RunFailure> failures;
  std::size_t attempted = 0;

  const CellSummary* cell(std::size_t n_obs, FidelityKind kind) const;
  std::size_t successes() const;
  bool empty() const { return successes() == 0; }
};

class StudyAborted : public Error {
public:
  StudyAborted(const std::string& what, StudyReport report)
      : Error(what), report_(std::move(report)) {}
  const StudyReport& report() const { return report_; }

private:
  StudyReport report_;
};

/// Runs the scenario and boundary mode named in cfg.
StudyReport run_study(const StudyConfig& cfg);
/// run_study with free boundary values (drift unknown outside the domain).
StudyReport run_modified_boundary(StudyConfig cfg);
/// run_study on ensemble data with the parabolic forward model.
StudyReport run_ensemble_scenario(StudyConfig cfg);

/// Writes table1.csv, errors.csv, failures.csv, hist_<n>_<fidelity>.csv/.svg,
/// median_recon_<n>.csv/.svg and metadata.json into out_dir.
void emit_report(const StudyReport& report, const std::filesystem::path& out_dir);

/// 30 equal-width bins on [0, max]; returns counts.
std::vector<std::size_t> histogram(const std::vector<double>& values, double max, int bins = 30);

}  // namespace fpdrift

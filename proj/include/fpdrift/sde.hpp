#pragma once

// Euler-Maruyama simulation of dX = mu(X) dt + sigma dW and the two
// observation models: a thinned long ergodic path, and an ensemble of paths
// observed at a common terminal time.

#include "fpdrift/fem_space.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fpdrift {

struct Interval {
  double a;
  double b;
  bool contains(double x) const { return x > a && x < b; }
};

struct SdeModel {
  DriftField drift;
  double diffusion_sigma;
  Interval domain;

  SdeModel(DriftField mu, double sigma);
  SdeModel(DriftField mu, double sigma, Interval dom);
};

struct PathConfig {
  double t_end = 1000.0;
  std::int64_t n_steps = 100000;
  double x0 = 0.0;
  std::uint64_t seed = 0;

  double dt() const { return t_end / double(n_steps); }
  void validate() const;
};

struct ObservationSet {
  std::vector<double> points;
  std::size_t discarded_outside = 0;

  std::size_t n() const { return points.size(); }
};

/// Sorted observations; the data object of every fidelity functional.
struct EmpiricalMeasure {
  std::vector<double> points;

  EmpiricalMeasure() = default;
  explicit EmpiricalMeasure(std::vector<double> pts);
  explicit EmpiricalMeasure(const ObservationSet& obs) : EmpiricalMeasure(obs.points) {}

  std::size_t n() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Returns n_steps + 1 states including x0. Deterministic given cfg.seed.
std::vector<double> euler_maruyama_path(const SdeModel& model, const PathConfig& cfg);

/// Keeps n_obs samples spaced floor((steps - burn_in) / n_obs) indices apart, the
/// last one at the end of the path; drops (and counts) samples outside `domain`.
ObservationSet thin_path(std::span<const double> path, std::size_t n_obs,
                         double burn_in_fraction, Interval domain);

/// Terminal values of n_paths independent paths, all drawn from one seeded stream.
ObservationSet ensemble_observations(const SdeModel& model, std::size_t n_paths,
                                     const PathConfig& cfg);

}  // namespace fpdrift

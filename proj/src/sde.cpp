#include "fpdrift/sde.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace fpdrift {

namespace {

std::mt19937_64 make_engine(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

SdeModel::SdeModel(DriftField mu, double sigma)
    : SdeModel(mu, sigma, Interval{mu.mesh().a(), mu.mesh().b()}) {}

SdeModel::SdeModel(DriftField mu, double sigma, Interval dom)
    : drift(std::move(mu)), diffusion_sigma(sigma), domain(dom) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw PreconditionError("diffusion sigma must be finite and non-negative");
  if (!(dom.a < dom.b)) throw PreconditionError("domain requires a < b");
}

void PathConfig::validate() const {
  if (n_steps < 1) throw PreconditionError("n_steps must be >= 1");
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw PreconditionError("t_end must be positive");
}

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> pts) : points(std::move(pts)) {
  std::sort(points.begin(), points.end());
}

namespace {

// Advances one path in place, consuming n_steps normals from `engine`.
template <typename Engine, typename Visit>
void integrate_path(const SdeModel& model, const PathConfig& cfg, Engine& engine, Visit&& visit) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double dt = cfg.dt();
  const double noise = model.diffusion_sigma * std::sqrt(dt);
  double x = cfg.x0;
  visit(std::size_t{0}, x);
  for (std::int64_t k = 0; k < cfg.n_steps; ++k) {
    x += model.drift(x) * dt + noise * normal(engine);
    if (!std::isfinite(x)) throw SimulationDiverged(static_cast<std::size_t>(k + 1));
    visit(static_cast<std::size_t>(k + 1), x);
  }
}

}  // namespace

std::vector<double> euler_maruyama_path(const SdeModel& model, const PathConfig& cfg) {
  cfg.validate();
  std::vector<double> path(static_cast<std::size_t>(cfg.n_steps) + 1);
  auto engine = make_engine(cfg.seed);
  integrate_path(model, cfg, engine, [&](std::size_t k, double x) { path[k] = x; });
  return path;
}

ObservationSet thin_path(std::span<const double> path, std::size_t n_obs,
                         double burn_in_fraction, Interval domain) {
  if (n_obs == 0) throw PreconditionError("n_obs must be positive");
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0))
    throw PreconditionError("burn-in fraction must lie in [0,1)");
  if (path.size() < 2) throw PreconditionError("path too short");

  const std::size_t steps = path.size() - 1;
  const auto burn = static_cast<std::size_t>(std::floor(burn_in_fraction * double(steps)));
  const std::size_t available = steps - burn;
  if (n_obs > available) throw PreconditionError("n_obs exceeds post-burn-in samples");
  const std::size_t spacing = available / n_obs;

  ObservationSet out;
  out.points.reserve(n_obs);
  for (std::size_t i = 0; i < n_obs; ++i) {
    const double x = path[steps - (n_obs - 1 - i) * spacing];
    if (domain.contains(x))
      out.points.push_back(x);
    else
      ++out.discarded_outside;
  }
  if (out.points.empty()) throw NoObservations();
  return out;
}

ObservationSet ensemble_observations(const SdeModel& model, std::size_t n_paths,
                                     const PathConfig& cfg) {
  if (n_paths == 0) throw PreconditionError("n_paths must be positive");
  cfg.validate();
  auto engine = make_engine(cfg.seed);
  ObservationSet out;
  out.points.reserve(n_paths);
  for (std::size_t p = 0; p < n_paths; ++p) {
    double terminal = cfg.x0;
    integrate_path(model, cfg, engine, [&](std::size_t, double x) { terminal = x; });
    if (model.domain.contains(terminal))
      out.points.push_back(terminal);
    else
      ++out.discarded_outside;
  }
  if (out.points.empty()) throw NoObservations();
  return out;
}

}  // namespace fpdrift

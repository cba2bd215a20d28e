#include "fpdrift/experiments.hpp"

#include "fpdrift/io.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

namespace fpdrift {

const char* to_string(Scenario s) { return s == Scenario::single_path ? "single_path" : "ensemble"; }

Scenario scenario_from_string(const std::string& name) {
  if (name == "single_path") return Scenario::single_path;
  if (name == "ensemble") return Scenario::ensemble;
  throw PreconditionError("unknown scenario '" + name + "'");
}

const char* to_string(BoundaryMode m) { return m == BoundaryMode::fixed ? "fixed" : "free"; }

BoundaryMode boundary_from_string(const std::string& name) {
  if (name == "fixed") return BoundaryMode::fixed;
  if (name == "free") return BoundaryMode::free;
  throw PreconditionError("unknown boundary mode '" + name + "'");
}

NewtonConfig StudyConfig::study_defaults(FidelityKind kind) {
  NewtonConfig c = NewtonConfig::defaults(kind);
  c.max_outer = 35;
  return c;
}

void StudyConfig::validate() const {
  if (n_obs_list.empty()) throw PreconditionError("n_obs_list is empty");
  for (std::size_t n : n_obs_list)
    if (n == 0) throw PreconditionError("observation counts must be positive");
  if (replications < 1) throw PreconditionError("replications must be positive");
  if (fidelities.empty()) throw PreconditionError("no estimator arm selected");
  if (!(model.sigma > 0.0)) throw PreconditionError("model sigma must be positive");
  if (simulation_sigma && !(*simulation_sigma >= 0.0))
    throw PreconditionError("simulation sigma must be non-negative");
  if (model.mesh_elements < 1) throw PreconditionError("mesh_elements must be positive");
  if (!(model.a < model.b)) throw PreconditionError("domain requires a < b");
  if (!(interior_lo < interior_hi)) throw PreconditionError("interior window is empty");
  if (!(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0))
    throw PreconditionError("max_failure_fraction must lie in [0,1]");
  if (!(parabolic_t0 > 0.0 && parabolic_t0 < ensemble_t_end))
    throw PreconditionError("parabolic_t0 must lie in (0, ensemble_t_end)");
  if (parabolic_steps < 1) throw PreconditionError("parabolic_steps must be positive");
  kl.validate();
  l2.validate();
  PathConfig{t_end, n_steps, 0.0, 0}.validate();
  PathConfig{ensemble_t_end, ensemble_steps, x0, 0}.validate();
}

const CellSummary* StudyReport::cell(std::size_t n_obs, FidelityKind kind) const {
  for (const auto& c : cells)
    if (c.n_obs == n_obs && c.fidelity == kind) return &c;
  return nullptr;
}

std::size_t StudyReport::successes() const {
  std::size_t s = 0;
  for (const auto& c : cells) s += c.runs.size();
  return s;
}

std::vector<std::size_t> histogram(const std::vector<double>& values, double max, int bins) {
  if (bins < 1) throw PreconditionError("bins must be positive");
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  const double width = max > 0.0 ? max / bins : 1.0 / bins;
  for (double v : values) {
    auto b = static_cast<long>(std::floor(v / width));
    b = std::clamp(b, 0L, long(bins) - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  return counts;
}

namespace {

struct Replication {
  std::vector<RunResult> runs;
  std::vector<RunFailure> failures;
  std::size_t attempted = 0;
};

// Everything a replication reads; shared read-only across threads.
struct StudyContext {
  const StudyConfig& cfg;
  FemSpacePtr space;
  DriftField truth;
  PenaltyConfig penalty;
  std::unique_ptr<ForwardOperator> forward;
};

std::unique_ptr<ForwardOperator> make_forward(const StudyConfig& cfg, const FemSpacePtr& space) {
  if (cfg.scenario == Scenario::single_path)
    return std::make_unique<StationaryForward>(space, cfg.model.sigma);
  const double sd = cfg.model.sigma * std::sqrt(cfg.parabolic_t0);
  return std::make_unique<ParabolicForward>(space, cfg.model.sigma,
                                            gaussian_density(space->mesh(), cfg.x0, sd),
                                            cfg.ensemble_t_end - cfg.parabolic_t0,
                                            cfg.parabolic_steps);
}

// One observation set per entry of n_obs_list.
std::vector<EmpiricalMeasure> draw_data(const StudyContext& ctx, std::uint64_t seed) {
  const StudyConfig& cfg = ctx.cfg;
  const SdeModel model(ctx.truth, cfg.simulation_sigma.value_or(cfg.model.sigma),
                       Interval{cfg.model.a, cfg.model.b});
  std::vector<EmpiricalMeasure> out;
  if (cfg.scenario == Scenario::single_path) {
    const auto path = euler_maruyama_path(model, PathConfig{cfg.t_end, cfg.n_steps, 0.0, seed});
    for (std::size_t n : cfg.n_obs_list)
      out.emplace_back(thin_path(path, n, cfg.burn_in_fraction, model.domain));
  } else {
    // Nested prefixes of one ensemble, so larger n only adds paths.
    const std::size_t n_max = *std::max_element(cfg.n_obs_list.begin(), cfg.n_obs_list.end());
    const PathConfig pc{cfg.ensemble_t_end, cfg.ensemble_steps, cfg.x0, seed};
    // Terminal values in simulation order; outside points were dropped.
    const ObservationSet all = ensemble_observations(model, n_max, pc);
    for (std::size_t n : cfg.n_obs_list) {
      const std::size_t keep = std::min(n, all.points.size());
      out.emplace_back(std::vector<double>(all.points.begin(), all.points.begin() + keep));
    }
  }
  return out;
}

Replication run_replication(const StudyContext& ctx, int r) {
  const StudyConfig& cfg = ctx.cfg;
  const std::uint64_t seed = cfg.replication_seed(r);
  Replication rep;
  rep.attempted = cfg.n_obs_list.size() * cfg.fidelities.size();

  std::vector<EmpiricalMeasure> data;
  try {
    data = draw_data(ctx, seed);
  } catch (const Error& e) {
    for (std::size_t n : cfg.n_obs_list)
      for (std::size_t k = 0; k < cfg.fidelities.size(); ++k)
        rep.failures.push_back({r, n, std::nullopt, e.what()});
    return rep;
  }

  for (std::size_t i = 0; i < cfg.n_obs_list.size(); ++i) {
    for (FidelityKind kind : cfg.fidelities) {
      const auto start = std::chrono::steady_clock::now();
      try {
        const EstimateResult est =
            newton_estimate(data[i], cfg.newton(kind), ctx.penalty, *ctx.forward, ctx.truth);
        RunResult run;
        run.replication = r;
        run.seed = seed;
        run.n_obs = cfg.n_obs_list[i];
        run.fidelity = kind;
        run.normalized_error = *est.normalized_error;
        run.selected = *est.selected;
        run.l2_error = *est.trace.entries[run.selected].l2_error;
        run.interior_rms = rms_distance(est.estimate, ctx.truth, cfg.interior_lo, cfg.interior_hi);
        run.full_rms = rms_distance(est.estimate, ctx.truth, cfg.model.a, cfg.model.b);
        run.newton_iterations = static_cast<int>(est.trace.size()) - 1;
        run.observations_used = data[i].n();
        run.estimate = est.estimate.coeffs();
        if (!std::isfinite(run.normalized_error))
          throw SolverError("non-finite normalized error");
        run.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        rep.runs.push_back(std::move(run));
      } catch (const Error& e) {
        rep.failures.push_back({r, cfg.n_obs_list[i], kind, e.what()});
      }
    }
  }
  return rep;
}

std::vector<Replication> run_all(const StudyContext& ctx) {
  const int total = ctx.cfg.replications;
  std::vector<Replication> reps(static_cast<std::size_t>(total));
  int threads = ctx.cfg.threads > 0 ? ctx.cfg.threads
                                    : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, total);

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < total; r = next++) reps[static_cast<std::size_t>(r)] = run_replication(ctx, r);
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return reps;
}

void summarize(CellSummary& cell) {
  const auto& runs = cell.runs;
  if (runs.empty()) return;
  const double n = double(runs.size());
  double sum = 0.0;
  for (const auto& run : runs) sum += run.normalized_error;
  cell.mean = sum / n;
  double sq = 0.0;
  for (const auto& run : runs) sq += (run.normalized_error - cell.mean) * (run.normalized_error - cell.mean);
  cell.variance = runs.size() > 1 ? sq / (n - 1.0) : 0.0;

  std::vector<std::size_t> order(runs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return runs[i].normalized_error < runs[j].normalized_error;
  });
  cell.median = order[(order.size() - 1) / 2];
}

}  // namespace

StudyReport run_study(const StudyConfig& cfg) {
  cfg.validate();
  const Mesh mesh = cfg.model.mesh();
  const FemSpacePtr space = make_space(mesh);
  const DriftField truth = cfg.model.drift();
  StudyContext ctx{cfg, space, truth,
                   make_penalty(*space, default_center(truth, cfg.boundary_mode), cfg.boundary_mode),
                   make_forward(cfg, space)};

  std::vector<Replication> reps = run_all(ctx);

  StudyReport report;
  report.config = cfg;
  for (std::size_t n : cfg.n_obs_list)
    for (FidelityKind kind : cfg.fidelities) report.cells.push_back({n, kind, {}, 0.0, 0.0, 0});
  for (auto& rep : reps) {
    report.attempted += rep.attempted;
    for (auto& run : rep.runs) {
      for (auto& c : report.cells)
        if (c.n_obs == run.n_obs && c.fidelity == run.fidelity) c.runs.push_back(std::move(run));
    }
    for (auto& f : rep.failures) report.failures.push_back(std::move(f));
  }
  for (auto& c : report.cells) summarize(c);

  const std::size_t failed = report.attempted - report.successes();
  if (double(failed) > cfg.max_failure_fraction * double(report.attempted)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu of %zu estimations failed, above the %.3g threshold",
                  failed, report.attempted, cfg.max_failure_fraction);
    throw StudyAborted(buf, std::move(report));
  }
  return report;
}

StudyReport run_modified_boundary(StudyConfig cfg) {
  cfg.boundary_mode = BoundaryMode::free;
  return run_study(cfg);
}

StudyReport run_ensemble_scenario(StudyConfig cfg) {
  cfg.scenario = Scenario::ensemble;
  return run_study(cfg);
}

// --- report files ----------------------------------------------------------

namespace {

std::string csv(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
  std::ostringstream out;
  write_csv(out, header, rows);
  return out.str();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

constexpr double kSvgWidth = 640.0;
constexpr double kSvgHeight = 400.0;
constexpr double kMargin = 50.0;

std::string svg_open(const std::string& title) {
  return fmt("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
             "viewBox=\"0 0 %.0f %.0f\">\n",
             kSvgWidth, kSvgHeight, kSvgWidth, kSvgHeight) +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
         fmt("<text x=\"%.0f\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" "
             "text-anchor=\"middle\">",
             kSvgWidth / 2) +
         title + "</text>\n";
}

std::string svg_axes(double x0, double x1, double y0, double y1) {
  const double l = kMargin, r = kSvgWidth - kMargin, t = kMargin, b = kSvgHeight - kMargin;
  std::string s = fmt("<polyline points=\"%.2f,%.2f %.2f,%.2f ", l, t, l, b) +
                  fmt("%.2f,%.2f\" fill=\"none\" stroke=\"black\"/>\n", r, b);
  auto label = [](double x, double y, const char* anchor, double v) {
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"11\" "
                  "text-anchor=\"%s\">%.3g</text>\n",
                  x, y, anchor, v);
    return std::string(buf);
  };
  s += label(l, b + 16, "middle", x0) + label(r, b + 16, "middle", x1);
  s += label(l - 6, b, "end", y0) + label(l - 6, t + 4, "end", y1);
  return s;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kMargin + (x - x0) / (x1 - x0) * (kSvgWidth - 2 * kMargin); }
  double py(double y) const {
    return kSvgHeight - kMargin - (y - y0) / (y1 - y0) * (kSvgHeight - 2 * kMargin);
  }
};

std::string histogram_svg(const std::string& title, double max,
                          const std::vector<std::size_t>& counts) {
  const double top = double(std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end())));
  const Frame f{0.0, max > 0.0 ? max : 1.0, 0.0, top};
  const double width = (f.x1 - f.x0) / double(counts.size());
  std::string s = svg_open(title) + svg_axes(f.x0, f.x1, f.y0, f.y1);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double xl = f.px(double(i) * width), xr = f.px(double(i + 1) * width);
    const double yt = f.py(double(counts[i]));
    s += fmt("<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" ", xl, yt, xr - xl,
             f.py(0.0) - yt) +
         "fill=\"steelblue\" stroke=\"white\"/>\n";
  }
  return s + "</svg>\n";
}

std::string polyline(const Frame& f, const std::vector<double>& xs, const std::vector<double>& ys,
                     const char* color, const char* dash) {
  std::string s = "<polyline fill=\"none\" stroke=\"" + std::string(color) +
                  "\" stroke-width=\"1.5\" stroke-dasharray=\"" + dash + "\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i)
    s += fmt(i ? " %.2f,%.2f" : "%.2f,%.2f", f.px(xs[i]), f.py(ys[i]));
  return s + "\"/>\n";
}

std::string reconstruction_svg(const std::string& title, const std::vector<double>& xs,
                               const std::vector<double>& est, const std::vector<double>& truth) {
  double lo = std::min(*std::min_element(est.begin(), est.end()),
                       *std::min_element(truth.begin(), truth.end()));
  double hi = std::max(*std::max_element(est.begin(), est.end()),
                       *std::max_element(truth.begin(), truth.end()));
  if (!(hi > lo)) hi = lo + 1.0;
  const Frame f{xs.front(), xs.back(), lo, hi};
  std::string s = svg_open(title) + svg_axes(f.x0, f.x1, f.y0, f.y1);
  s += polyline(f, xs, truth, "black", "6,4");
  s += polyline(f, xs, est, "firebrick", "none");
  return s + "</svg>\n";
}

std::string metadata(const StudyReport& report) {
  nlohmann::json j;
  j["config"] = to_json(report.config);
  j["penalty_center"] = report.config.boundary_mode == BoundaryMode::fixed
                            ? "linear interpolant of the true boundary values"
                            : "zero";
  j["l2_data_estimate"] = "gaussian kernel density estimate, Silverman bandwidth, renormalised on the domain";
  j["error"] = "L2(domain) drift error of the oracle-selected iterate divided by that of the initial guess";
  j["variance"] = "unbiased sample variance";
  j["attempted"] = report.attempted;
  j["successes"] = report.successes();
  j["failures"] = report.failures.size();
  return j.dump(2) + "\n";
}

}  // namespace

void emit_report(const StudyReport& report, const std::filesystem::path& out_dir) {
  if (report.empty()) throw PreconditionError("report has no successful runs");
  const StudyConfig& cfg = report.config;

  // Render everything first so a rendering error leaves no partial output.
  std::map<std::string, std::string> files;

  std::vector<std::vector<double>> table;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t n : cfg.n_obs_list) {
    std::vector<double> row{double(n)};
    for (FidelityKind kind : {FidelityKind::kl, FidelityKind::l2}) {
      const CellSummary* c = report.cell(n, kind);
      const bool ok = c && !c->runs.empty();
      row.push_back(ok ? c->mean : nan);
      row.push_back(ok ? c->variance : nan);
    }
    table.push_back(std::move(row));
  }
  files["table1.csv"] = csv({"observations", "kl_mean", "kl_var", "l2_mean", "l2_var"}, table);

  std::ostringstream errors;
  errors << "replication,seed,observations,fidelity,normalized_error,l2_error,interior_rms,"
            "full_rms,selected_iteration,observations_used\n";
  for (const auto& c : report.cells)
    for (const auto& run : c.runs)
      errors << run.replication << ',' << run.seed << ',' << run.n_obs << ','
             << to_string(run.fidelity) << ',' << format_double(run.normalized_error) << ','
             << format_double(run.l2_error) << ',' << format_double(run.interior_rms) << ','
             << format_double(run.full_rms) << ',' << run.selected << ','
             << run.observations_used << '\n';
  files["errors.csv"] = errors.str();

  std::ostringstream fails;
  fails << "replication,observations,fidelity,message\n";
  for (const auto& f : report.failures) {
    std::string msg = f.message;
    std::replace(msg.begin(), msg.end(), '"', '\'');
    fails << f.replication << ',' << f.n_obs << ',' << (f.fidelity ? to_string(*f.fidelity) : "")
          << ",\"" << msg << "\"\n";
  }
  files["failures.csv"] = fails.str();

  const Mesh mesh = cfg.model.mesh();
  const DriftField truth = cfg.model.drift();
  for (const auto& c : report.cells) {
    if (c.runs.empty()) continue;
    const std::string stem = "hist_" + std::to_string(c.n_obs) + "_" + to_string(c.fidelity);
    std::vector<double> values;
    for (const auto& run : c.runs) values.push_back(run.normalized_error);
    const double max = *std::max_element(values.begin(), values.end());
    const auto counts = histogram(values, max);
    const double width = max > 0.0 ? max / double(counts.size()) : 1.0 / double(counts.size());
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < counts.size(); ++i)
      rows.push_back({double(i) * width, double(i + 1) * width, double(counts[i])});
    files[stem + ".csv"] = csv({"bin_left", "bin_right", "count"}, rows);
    files[stem + ".svg"] = histogram_svg(
        "normalized L2 error, n = " + std::to_string(c.n_obs) + ", " + to_string(c.fidelity) +
            " fidelity",
        width * double(counts.size()), counts);
  }

  for (std::size_t n : cfg.n_obs_list) {
    // The likelihood arm when present, else the first arm that has runs.
    const CellSummary* chosen = nullptr;
    for (FidelityKind kind : {FidelityKind::kl, FidelityKind::l2}) {
      const CellSummary* c = report.cell(n, kind);
      if (c && !c->runs.empty()) {
        chosen = c;
        break;
      }
    }
    if (!chosen) continue;
    const RunResult& run = chosen->runs[chosen->median];
    const DriftField est(FemFunction(mesh, run.estimate));
    std::vector<double> xs = mesh.nodes(), mu_hat, mu_true;
    std::vector<std::vector<double>> rows;
    for (double x : xs) {
      mu_hat.push_back(est(x));
      mu_true.push_back(truth(x));
      rows.push_back({x, mu_hat.back(), mu_true.back()});
    }
    const std::string stem = "median_recon_" + std::to_string(n);
    files[stem + ".csv"] = csv({"x", "mu_hat", "mu_true"}, rows);
    files[stem + ".svg"] = reconstruction_svg(
        "median reconstruction (" + std::string(to_string(chosen->fidelity)) + "), n = " +
            std::to_string(n) + ", replication " + std::to_string(run.replication),
        xs, mu_hat, mu_true);
  }
  files["metadata.json"] = metadata(report);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  try {
    for (const auto& [name, content] : files) {
      write_file_atomic(out_dir / name, content);
      written.push_back(out_dir / name);
    }
  } catch (...) {
    for (const auto& p : written) std::filesystem::remove(p, ec);
    throw;
  }
}

}  // namespace fpdrift

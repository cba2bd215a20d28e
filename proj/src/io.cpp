#include "fpdrift/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fpdrift {

std::string format_double(double x) {
  char buf[32];
  // %.17g is locale-sensitive only in the decimal point; the C locale is never changed here.
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

bool CsvTable::has_column(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

std::vector<double> CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw IoError("missing CSV column '" + name + "'");
  const auto idx = static_cast<std::size_t>(it - header.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(row[idx]);
  return out;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& text, std::size_t line) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw IoError("line " + std::to_string(line) + ": cannot parse number '" + t + "'");
  return v;
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (table.header.empty()) {
      for (auto& c : cells) table.header.push_back(trim(c));
      continue;
    }
    if (cells.size() != table.header.size())
      throw IoError("line " + std::to_string(line_no) + ": expected " +
                    std::to_string(table.header.size()) + " fields");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c, line_no));
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw IoError("empty CSV input");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_csv(in);
}

void write_csv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << '\n';
  }
}

std::vector<double> read_observations(const std::filesystem::path& path) {
  return read_csv(path).column("y");
}

void write_observations(std::ostream& out, const std::vector<double>& points) {
  std::vector<std::vector<double>> rows;
  rows.reserve(points.size());
  for (double y : points) rows.push_back({y});
  write_csv(out, {"y"}, rows);
}

DriftField load_drift(const std::string& spec, const Mesh& mesh) {
  if (spec == "reference") return reference_drift(mesh);
  if (spec.rfind("poly:", 0) == 0) {
    std::vector<double> coeffs;
    std::size_t i = 0;
    for (const auto& c : split(spec.substr(5))) coeffs.push_back(parse_double(c, ++i));
    if (coeffs.empty()) throw PreconditionError("polynomial drift needs coefficients");
    return polynomial_drift(mesh, coeffs);
  }
  const CsvTable t = read_csv(std::filesystem::path(spec));
  const std::vector<double> mu = t.column("mu");
  if (Index(mu.size()) != mesh.dofs())
    throw MeshMismatch();
  if (t.has_column("x")) {
    const std::vector<double> x = t.column("x");
    for (Index i = 0; i < mesh.dofs(); ++i)
      if (std::abs(x[std::size_t(i)] - mesh.node(i)) > 1e-9 * mesh.length()) throw MeshMismatch();
  }
  return DriftField(FemFunction(mesh, Eigen::Map<const Vector>(mu.data(), Index(mu.size()))));
}

// --- JSON ------------------------------------------------------------------

namespace {

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ModelSpec model_from_json(const nlohmann::json& j) {
  ModelSpec m;
  if (j.contains("drift")) {
    const auto& d = j.at("drift");
    if (d.is_string()) {
      const std::string name = d.get<std::string>();
      if (name != "reference") throw PreconditionError("unknown drift preset '" + name + "'");
    } else {
      m.drift_coeffs = d.get<std::vector<double>>();
    }
  }
  get_if(j, "sigma", m.sigma);
  get_if(j, "a", m.a);
  get_if(j, "b", m.b);
  get_if(j, "mesh_elements", m.mesh_elements);
  return m;
}

nlohmann::json to_json(const ModelSpec& m) {
  return {{"drift", m.drift_coeffs},
          {"sigma", m.sigma},
          {"a", m.a},
          {"b", m.b},
          {"mesh_elements", m.mesh_elements}};
}

NewtonConfig newton_from_json(const nlohmann::json& j, FidelityKind kind) {
  NewtonConfig c = StudyConfig::study_defaults(kind);
  get_if(j, "alpha0", c.alpha0);
  get_if(j, "decay_q", c.decay_q);
  get_if(j, "max_outer", c.max_outer);
  get_if(j, "inner_tol", c.inner_tol);
  get_if(j, "inner_max", c.inner_max);
  get_if(j, "tau", c.tau.tau);
  return c;
}

nlohmann::json to_json(const NewtonConfig& c) {
  return {{"fidelity", to_string(c.fidelity_kind)},
          {"alpha0", c.alpha0},
          {"decay_q", c.decay_q},
          {"max_outer", c.max_outer},
          {"inner_tol", c.inner_tol},
          {"inner_max", c.inner_max},
          {"tau", c.tau.tau}};
}

StudyConfig study_config_from_json(const nlohmann::json& j) {
  static const char* known[] = {"scenario",        "n_obs_list",       "replications",
                                "base_seed",       "model",            "boundary_mode",
                                "fidelities",      "kl",               "l2",
                                "t_end",           "n_steps",          "burn_in_fraction",
                                "x0",              "ensemble_t_end",   "ensemble_steps",
                                "parabolic_t0",    "parabolic_steps",  "simulation_sigma",
                                "interior_lo",     "interior_hi",      "max_failure_fraction",
                                "threads"};
  if (!j.is_object()) throw PreconditionError("study config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw PreconditionError("unknown study config key '" + key + "'");

  StudyConfig c;
  try {
    if (j.contains("scenario")) c.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    get_if(j, "n_obs_list", c.n_obs_list);
    get_if(j, "replications", c.replications);
    get_if(j, "base_seed", c.base_seed);
    if (j.contains("model")) c.model = model_from_json(j.at("model"));
    if (j.contains("boundary_mode"))
      c.boundary_mode = boundary_from_string(j.at("boundary_mode").get<std::string>());
    if (j.contains("fidelities")) {
      c.fidelities.clear();
      for (const auto& f : j.at("fidelities")) c.fidelities.push_back(fidelity_from_string(f.get<std::string>()));
    }
    if (j.contains("kl")) c.kl = newton_from_json(j.at("kl"), FidelityKind::kl);
    if (j.contains("l2")) c.l2 = newton_from_json(j.at("l2"), FidelityKind::l2);
    get_if(j, "t_end", c.t_end);
    get_if(j, "n_steps", c.n_steps);
    get_if(j, "burn_in_fraction", c.burn_in_fraction);
    get_if(j, "x0", c.x0);
    get_if(j, "ensemble_t_end", c.ensemble_t_end);
    get_if(j, "ensemble_steps", c.ensemble_steps);
    get_if(j, "parabolic_t0", c.parabolic_t0);
    get_if(j, "parabolic_steps", c.parabolic_steps);
    if (j.contains("simulation_sigma") && !j.at("simulation_sigma").is_null())
      c.simulation_sigma = j.at("simulation_sigma").get<double>();
    get_if(j, "interior_lo", c.interior_lo);
    get_if(j, "interior_hi", c.interior_hi);
    get_if(j, "max_failure_fraction", c.max_failure_fraction);
    get_if(j, "threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError(std::string("bad study config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const StudyConfig& c) {
  nlohmann::json fids = nlohmann::json::array();
  for (FidelityKind f : c.fidelities) fids.push_back(to_string(f));
  nlohmann::json j = {{"scenario", to_string(c.scenario)},
                      {"n_obs_list", c.n_obs_list},
                      {"replications", c.replications},
                      {"base_seed", c.base_seed},
                      {"model", to_json(c.model)},
                      {"boundary_mode", to_string(c.boundary_mode)},
                      {"fidelities", fids},
                      {"kl", to_json(c.kl)},
                      {"l2", to_json(c.l2)},
                      {"t_end", c.t_end},
                      {"n_steps", c.n_steps},
                      {"burn_in_fraction", c.burn_in_fraction},
                      {"x0", c.x0},
                      {"ensemble_t_end", c.ensemble_t_end},
                      {"ensemble_steps", c.ensemble_steps},
                      {"parabolic_t0", c.parabolic_t0},
                      {"parabolic_steps", c.parabolic_steps},
                      {"interior_lo", c.interior_lo},
                      {"interior_hi", c.interior_hi},
                      {"max_failure_fraction", c.max_failure_fraction}};
  j["simulation_sigma"] = c.simulation_sigma ? nlohmann::json(*c.simulation_sigma) : nlohmann::json();
  return j;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " into place");
  }
}

}  // namespace fpdrift

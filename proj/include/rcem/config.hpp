#pragma once
// Scenario configuration: JSON-keyed overrides on top of the calibrated
// defaults (an empty config reproduces the default parameterization),
// CSV references for exogenous paths and calibration targets, validation,
// and a canonical dump with a stable hash for run manifests.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcem/calibrate.hpp"
#include "rcem/fbne.hpp"
#include "rcem/planner.hpp"

namespace rcem {

using nlohmann::json;

struct ScenarioConfig {
  std::string mode = "planner";  // planner | fbne | both
  Model model;
  Preferences pref;
  SolverSettings solver;
  double eps_bar = 1e-6;
  bool one_sided = false;

  std::uint64_t seed = 20260824;
  int n_paths = 1000;
  double domain_margin = 0.1;
  std::string out_dir = "out";
  std::array<std::string, 2> population_csv = {"", ""};

  PlannerConfig planner_config() const { return {model, pref, solver}; }

  // The equilibrium solver is closed-economy by construction; the
  // capital_transfer toggle only affects the planner.
  GameConfig game_config() const {
    GameConfig g{model, pref, solver, eps_bar, one_sided};
    return g;
  }

  std::vector<std::string> validate() const {
    std::vector<std::string> bad;
    if (mode != "planner" && mode != "fbne" && mode != "both")
      bad.push_back("mode must be planner, fbne or both");
    try {
      pref.validate();
    } catch (const std::exception& e) {
      bad.push_back(e.what());
    }
    if (solver.horizon < 1) bad.push_back("solver.horizon must be >= 1");
    if (solver.degree < 0) bad.push_back("solver.degree must be >= 0");
    if (solver.oversample < 1.0)
      bad.push_back("solver.oversample must be >= 1");
    if (solver.kkt_tol <= 0.0) bad.push_back("solver.kkt_tol must be > 0");
    if (solver.max_flagged_fraction < 0.0 ||
        solver.max_flagged_fraction > 1.0)
      bad.push_back("solver.max_flagged_fraction must be in [0, 1]");
    if (solver.terminal_years < 0)
      bad.push_back("solver.terminal_years must be >= 0");
    if (eps_bar <= 0.0) bad.push_back("eps_bar must be > 0");
    if (n_paths < 1) bad.push_back("n_paths must be >= 1");
    if (domain_margin < 0.0) bad.push_back("domain_margin must be >= 0");
    if (model.econ.friction_b < 0.0) bad.push_back("friction_b must be >= 0");
    if (model.climate.rho_hazard < 0.0)
      bad.push_back("climate.rho_hazard must be >= 0");
    return bad;
  }
};

namespace detail_config {

template <class T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void get_pair(const json& j, const char* key,
                     std::array<double, 2>& out) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 2)
    throw std::invalid_argument(std::string("config: ") + key +
                                " must be a two-element array");
  out = {a[0].get<double>(), a[1].get<double>()};
}

}  // namespace detail_config

// Two-column CSV (year,value; optional header) as an interpolating series.
inline TimeSeries read_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open series CSV: " + path);
  std::vector<double> years, values;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double y, v;
    if (row >> y >> v) {
      if (!years.empty() && y <= years.back())
        throw std::runtime_error("series CSV years not increasing: " + path);
      years.push_back(y);
      values.push_back(v);
    }
    // non-numeric rows (headers) are skipped
  }
  if (years.empty()) throw std::runtime_error("empty series CSV: " + path);
  return TimeSeries(std::move(years), std::move(values));
}

// Calibration target CSV: series,scenario,year,value (with header allowed).
inline std::vector<CalibrationTarget> read_targets_csv(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open targets CSV: " + path);
  std::vector<CalibrationTarget> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string series, scenario, ys, vs;
    if (!std::getline(row, series, ',') || !std::getline(row, scenario, ',') ||
        !std::getline(row, ys, ',') || !std::getline(row, vs, ','))
      continue;
    double y, v;
    try {
      y = std::stod(ys);
      v = std::stod(vs);
    } catch (const std::exception&) {
      continue;  // header row
    }
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& t) {
      return t.series == series && t.scenario == scenario;
    });
    if (it == out.end()) {
      out.push_back({series, scenario, {}, {}});
      it = out.end() - 1;
    }
    it->years.push_back(y);
    it->values.push_back(v);
  }
  if (out.empty()) throw std::runtime_error("empty targets CSV: " + path);
  return out;
}

inline ScenarioConfig parse_config(const json& j) {
  using detail_config::get_if;
  using detail_config::get_pair;
  ScenarioConfig c;
  get_if(j, "mode", c.mode);
  get_if(j, "seed", c.seed);
  get_if(j, "n_paths", c.n_paths);
  get_if(j, "domain_margin", c.domain_margin);
  get_if(j, "out_dir", c.out_dir);
  get_if(j, "eps_bar", c.eps_bar);
  get_if(j, "one_sided", c.one_sided);

  if (j.contains("toggles")) {
    const json& t = j.at("toggles");
    ModelToggles& g = c.model.toggles;
    get_if(t, "heat_transport", g.heat_transport);
    get_if(t, "slr", g.slr);
    get_if(t, "adaptation", g.adaptation);
    get_if(t, "permafrost", g.permafrost);
    get_if(t, "capital_transfer", g.capital_transfer);
    get_if(t, "stochastic", g.stochastic);
  }
  if (j.contains("preferences")) {
    const json& p = j.at("preferences");
    get_if(p, "beta", c.pref.beta);
    get_if(p, "psi", c.pref.psi);
    get_if(p, "gamma", c.pref.gamma);
  }
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    get_if(s, "horizon", c.solver.horizon);
    get_if(s, "degree", c.solver.degree);
    get_if(s, "oversample", c.solver.oversample);
    get_if(s, "kkt_tol", c.solver.kkt_tol);
    get_if(s, "multi_starts", c.solver.multi_starts);
    get_if(s, "max_flagged_fraction", c.solver.max_flagged_fraction);
    get_if(s, "domain_pad", c.solver.domain_pad);
    get_if(s, "terminal_saving", c.solver.terminal_saving);
    get_if(s, "terminal_adapt", c.solver.terminal_adapt);
    get_if(s, "terminal_years", c.solver.terminal_years);
  }
  if (j.contains("climate")) {
    const json& p = j.at("climate");
    ClimateParams& cp = c.model.climate;
    get_if(p, "phi_12", cp.phi_12);
    get_if(p, "phi_21", cp.phi_21);
    get_if(p, "phi_23", cp.phi_23);
    get_if(p, "phi_32", cp.phi_32);
    get_if(p, "xi_1", cp.xi_1);
    get_if(p, "xi_2", cp.xi_2);
    get_if(p, "xi_3", cp.xi_3);
    get_if(p, "xi_4", cp.xi_4);
    get_if(p, "xi_5", cp.xi_5);
    get_if(p, "xi_6", cp.xi_6);
    get_if(p, "eta", cp.eta);
    get_if(p, "m_star", cp.m_star);
    get_if(p, "zeta_slr_1", cp.zeta_slr_1);
    get_if(p, "zeta_slr_2", cp.zeta_slr_2);
    get_if(p, "zeta_slr_3", cp.zeta_slr_3);
    get_if(p, "zeta_perm_1", cp.zeta_perm_1);
    get_if(p, "zeta_perm_2", cp.zeta_perm_2);
    get_if(p, "zeta_perm_3", cp.zeta_perm_3);
    get_if(p, "rho_hazard", cp.rho_hazard);
    get_if(p, "j_bar", cp.j_bar);
    get_if(p, "d_duration", cp.d_duration);
    get_if(p, "nonconserving_carbon_matrix", cp.nonconserving_carbon_matrix);
  }
  if (j.contains("economy")) {
    const json& p = j.at("economy");
    EconomyParams& ep = c.model.econ;
    get_pair(p, "a0", ep.a0);
    get_pair(p, "alpha_tfp", ep.alpha_tfp);
    get_pair(p, "d_tfp", ep.d_tfp);
    get_pair(p, "sigma0", ep.sigma0);
    get_pair(p, "alpha_sigma", ep.alpha_sigma);
    get_pair(p, "d_sigma", ep.d_sigma);
    get_pair(p, "b0", ep.b0);
    get_pair(p, "alpha_b", ep.alpha_b);
    get_pair(p, "pi_1", ep.pi_1);
    get_pair(p, "pi_2", ep.pi_2);
    get_pair(p, "pi_3", ep.pi_3);
    get_pair(p, "pi_4", ep.pi_4);
    get_pair(p, "k0", ep.k0);
    get_if(p, "alpha", ep.alpha);
    get_if(p, "theta_2", ep.theta_2);
    get_if(p, "eta_1", ep.eta_1);
    get_if(p, "eta_2", ep.eta_2);
    get_if(p, "delta", ep.delta);
    get_if(p, "friction_b", ep.friction_b);
  }
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    if (p.contains("population_csv")) {
      const auto& a = p.at("population_csv");
      if (!a.is_array() || a.size() != 2)
        throw std::invalid_argument(
            "config: paths.population_csv must list two files");
      for (int i = 0; i < 2; ++i) {
        c.population_csv[i] = a[i].get<std::string>();
        if (!c.population_csv[i].empty())
          c.model.paths.population[i] = read_series_csv(c.population_csv[i]);
      }
    }
  }
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  return parse_config(j);
}

// Canonical dump of the effective run setup; feeds the manifest and the
// config hash. Toggle effects show up in the effective_climate block.
inline json config_dump(const ScenarioConfig& c) {
  const ClimateParams& cp = c.model.climate;
  const ClimateParams ec = c.model.effective_climate();
  const EconomyParams& ep = c.model.econ;
  json j;
  j["mode"] = c.mode;
  j["seed"] = c.seed;
  j["n_paths"] = c.n_paths;
  j["domain_margin"] = c.domain_margin;
  j["out_dir"] = c.out_dir;
  j["eps_bar"] = c.eps_bar;
  j["one_sided"] = c.one_sided;
  j["toggles"] = {{"heat_transport", c.model.toggles.heat_transport},
                  {"slr", c.model.toggles.slr},
                  {"adaptation", c.model.toggles.adaptation},
                  {"permafrost", c.model.toggles.permafrost},
                  {"capital_transfer", c.model.toggles.capital_transfer},
                  {"stochastic", c.model.toggles.stochastic}};
  j["preferences"] = {
      {"beta", c.pref.beta}, {"psi", c.pref.psi}, {"gamma", c.pref.gamma}};
  j["solver"] = {{"horizon", c.solver.horizon},
                 {"degree", c.solver.degree},
                 {"oversample", c.solver.oversample},
                 {"kkt_tol", c.solver.kkt_tol},
                 {"multi_starts", c.solver.multi_starts},
                 {"max_flagged_fraction", c.solver.max_flagged_fraction},
                 {"domain_pad", c.solver.domain_pad},
                 {"terminal_saving", c.solver.terminal_saving},
                 {"terminal_adapt", c.solver.terminal_adapt},
                 {"terminal_years", c.solver.terminal_years}};
  j["climate"] = {{"phi_12", cp.phi_12},     {"phi_21", cp.phi_21},
                  {"phi_23", cp.phi_23},     {"phi_32", cp.phi_32},
                  {"xi_1", cp.xi_1},         {"xi_2", cp.xi_2},
                  {"xi_3", cp.xi_3},         {"xi_4", cp.xi_4},
                  {"xi_5", cp.xi_5},         {"xi_6", cp.xi_6},
                  {"eta", cp.eta},           {"m_star", cp.m_star},
                  {"zeta_slr_1", cp.zeta_slr_1}, {"zeta_slr_2", cp.zeta_slr_2},
                  {"zeta_slr_3", cp.zeta_slr_3}, {"zeta_perm_1", cp.zeta_perm_1},
                  {"zeta_perm_2", cp.zeta_perm_2}, {"zeta_perm_3", cp.zeta_perm_3},
                  {"rho_hazard", cp.rho_hazard}, {"j_bar", cp.j_bar},
                  {"d_duration", cp.d_duration}};
  j["effective_climate"] = {{"xi_4", ec.xi_4},
                            {"xi_5", ec.xi_5},
                            {"rho_hazard", ec.rho_hazard}};
  j["economy"] = {{"a0", ep.a0},
                  {"alpha_tfp", ep.alpha_tfp},
                  {"d_tfp", ep.d_tfp},
                  {"sigma0", ep.sigma0},
                  {"alpha_sigma", ep.alpha_sigma},
                  {"d_sigma", ep.d_sigma},
                  {"b0", ep.b0},
                  {"alpha_b", ep.alpha_b},
                  {"pi_1", ep.pi_1},
                  {"pi_2", ep.pi_2},
                  {"pi_3", ep.pi_3},
                  {"pi_4", ep.pi_4},
                  {"k0", ep.k0},
                  {"alpha", ep.alpha},
                  {"theta_2", ep.theta_2},
                  {"eta_1", ep.eta_1},
                  {"eta_2", ep.eta_2},
                  {"delta", ep.delta},
                  {"friction_b", ep.friction_b}};
  j["paths"] = {{"population_csv", c.population_csv}};
  return j;
}

// FNV-1a over the canonical dump; stable across runs of the same build.
inline std::string config_hash(const ScenarioConfig& c) {
  const std::string s = config_dump(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace rcem

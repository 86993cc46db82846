// Command-line front end: solve, simulate, calibrate, sweep and report on
// the two-region climate-economy model. All outputs are CSV or JSON under
// the configured output directory; the exit code is nonzero when a run
// aborts or the flagged-node/path fraction exceeds the configured bound.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rcem/config.hpp"
#include "rcem/metrics.hpp"

namespace fs = std::filesystem;
using namespace rcem;

namespace {

constexpr int kExitAbort = 2;    // a stage threw
constexpr int kExitFlagged = 3;  // flagged fraction above threshold

struct CommonOpts {
  std::string config_path;
  std::string out_override;
  std::string model_override;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 1;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config_path, "JSON scenario config");
  cmd->add_option("--out", c.out_override, "output directory override");
  cmd->add_option("--seed", c.seed, "RNG seed override")
      ->each([&](const std::string&) { c.seed_set = true; });
  cmd->add_option("--workers", c.workers,
                  "worker count hint (solvers currently run serially)")
      ->check(CLI::PositiveNumber);
}

ScenarioConfig load(const CommonOpts& c) {
  ScenarioConfig cfg =
      c.config_path.empty() ? ScenarioConfig{} : load_config(c.config_path);
  if (c.seed_set) cfg.seed = c.seed;
  if (!c.out_override.empty()) cfg.out_dir = c.out_override;
  if (!c.model_override.empty()) cfg.mode = c.model_override;
  const auto bad = cfg.validate();
  if (!bad.empty()) {
    std::ostringstream os;
    os << "invalid config:";
    for (const auto& b : bad) os << "\n  - " << b;
    throw std::runtime_error(os.str());
  }
  fs::create_directories(cfg.out_dir);
  return cfg;
}

void write_text(const fs::path& p, const std::string& body) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << body;
}

json approx_json(const ChebApprox& a) {
  return {{"lower", a.domain().lower},
          {"upper", a.domain().upper},
          {"degree", a.degree()},
          {"coefficients", a.coefficients()}};
}

json checkpoint_json(const std::vector<ValueFunctionApprox>& value) {
  json arr = json::array();
  for (const auto& v : value)
    arr.push_back(
        {{"chi0", approx_json(v.layer[0])}, {"chi1", approx_json(v.layer[1])}});
  return arr;
}

template <class Diag>
std::string diag_csv(const std::vector<Diag>& diag, const char* resid_col) {
  std::ostringstream os;
  os << "t,fit_rms,fit_max," << resid_col << ",flagged,nodes\n";
  for (std::size_t t = 0; t < diag.size(); ++t) {
    const auto& d = diag[t];
    double r;
    if constexpr (std::is_same_v<Diag, StepDiagnostics>)
      r = d.max_kkt;
    else
      r = d.max_l1;
    os << t << ',' << d.fit_rms << ',' << d.fit_max << ',' << r << ','
       << d.flagged << ',' << d.nodes << '\n';
  }
  return os.str();
}

template <class Diag>
json diag_stats(const std::vector<Diag>& diag) {
  double max_resid = 0.0, max_fit = 0.0;
  int flagged = 0, nodes = 0;
  for (const auto& d : diag) {
    if constexpr (std::is_same_v<Diag, StepDiagnostics>)
      max_resid = std::max(max_resid, d.max_kkt);
    else
      max_resid = std::max(max_resid, d.max_l1);
    max_fit = std::max(max_fit, d.fit_max);
    flagged += d.flagged;
    nodes += d.nodes;
  }
  return {{"max_residual", max_resid},
          {"max_fit_error", max_fit},
          {"flagged_nodes", flagged},
          {"total_nodes", nodes}};
}

json versions() {
  return {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                        std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"cli11", CLI11_VERSION},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                                "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"compiler", __VERSION__}};
}

void write_manifest(const ScenarioConfig& cfg, const std::string& command,
                    const json& stats, double seconds) {
  json m;
  m["command"] = command;
  m["config_hash"] = config_hash(cfg);
  m["config"] = config_dump(cfg);
  m["versions"] = versions();
  m["statistics"] = stats;
  m["elapsed_seconds"] = seconds;
  write_text(fs::path(cfg.out_dir) / "manifest.json", m.dump(2) + "\n");
}

// Solves the models requested by cfg.mode; fills per-model stats and
// returns the worst flagged fraction across induction steps.
struct Solved {
  std::optional<PlannerSolution> planner;
  std::optional<GameSolution> fbne;
  json stats = json::object();
};

Solved solve_models(const ScenarioConfig& cfg) {
  Solved s;
  if (cfg.mode == "planner" || cfg.mode == "both") {
    s.planner = backward_induction_sp(cfg.planner_config());
    s.stats["planner"] = diag_stats(s.planner->diag);
  }
  if (cfg.mode == "fbne" || cfg.mode == "both") {
    s.fbne = backward_induction_fbne(cfg.game_config());
    s.stats["fbne"] = diag_stats(s.fbne->diag);
  }
  return s;
}

std::string initial_tax_csv(const Solved& s, const ScenarioConfig& cfg) {
  std::ostringstream os;
  os << "model,tax_north,tax_south\n";
  if (s.planner) {
    const StateVector x0 = cfg.model.initial_state();
    os << "planner," << scc_sp(x0, 0, *s.planner, 0) << ','
       << scc_sp(x0, 0, *s.planner, 1) << '\n';
  }
  if (s.fbne) {
    const StateVector x0 = cfg.model.initial_state();
    os << "fbne," << scc_fbne(x0, 0, *s.fbne, 0) << ','
       << scc_fbne(x0, 0, *s.fbne, 1) << '\n';
  }
  return os.str();
}

int cmd_solve(const CommonOpts& co) {
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioConfig cfg = load(co);
  Solved s = solve_models(cfg);
  const fs::path out(cfg.out_dir);
  if (s.planner) {
    write_text(out / "diag_planner.csv", diag_csv(s.planner->diag, "max_kkt"));
    write_text(out / "value_planner.json",
               checkpoint_json(s.planner->value).dump() + "\n");
  }
  if (s.fbne) {
    write_text(out / "diag_fbne.csv", diag_csv(s.fbne->diag, "max_l1"));
    json both = {{"player0", checkpoint_json(s.fbne->value[0])},
                 {"player1", checkpoint_json(s.fbne->value[1])}};
    write_text(out / "value_fbne.json", both.dump() + "\n");
  }
  write_text(out / "initial_taxes.csv", initial_tax_csv(s, cfg));
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_manifest(cfg, "solve", s.stats, secs);
  std::cout << "solve: done in " << secs << " s, outputs in " << cfg.out_dir
            << "\n"
            << initial_tax_csv(s, cfg);
  return 0;
}

const std::vector<std::string>& fan_series() {
  static const std::vector<std::string> s = {"tax1", "tax2", "t_at1", "t_at2",
                                             "m_at", "slr",  "p1",    "p2",
                                             "mu1",  "mu2"};
  return s;
}

int cmd_simulate(const CommonOpts& co, int n_paths_override) {
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioConfig cfg = load(co);
  if (n_paths_override > 0) cfg.n_paths = n_paths_override;
  Solved s = solve_models(cfg);
  const fs::path out(cfg.out_dir);

  bool over_threshold = false;
  auto emit = [&](const SimulationEnsemble& ens, const std::string& model) {
    int flagged = 0;
    for (bool f : ens.flagged) flagged += f ? 1 : 0;
    const double frac =
        ens.n_paths > 0 ? flagged / static_cast<double>(ens.n_paths) : 0.0;
    over_threshold |= frac > cfg.solver.max_flagged_fraction;
    for (const auto& name : fan_series()) {
      std::ostringstream os;
      write_csv(fan_chart(ens, name), os);
      write_text(out / ("fan_" + model + "_" + name + ".csv"), os.str());
    }
    std::ostringstream os;
    write_csv(ens, os);
    write_text(out / ("paths_" + model + ".csv"), os.str());
    s.stats[model]["flagged_paths"] = flagged;
    s.stats[model]["n_paths"] = ens.n_paths;
  };
  if (s.planner)
    emit(simulate(*s.planner, cfg.n_paths, cfg.seed, cfg.domain_margin),
         "planner");
  if (s.fbne)
    emit(simulate(*s.fbne, cfg.n_paths, cfg.seed, cfg.domain_margin), "fbne");
  write_text(out / "initial_taxes.csv", initial_tax_csv(s, cfg));

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_manifest(cfg, "simulate", s.stats, secs);
  std::cout << "simulate: " << cfg.n_paths << " paths in " << secs
            << " s, outputs in " << cfg.out_dir << "\n";
  if (over_threshold) {
    std::cerr << "simulate: flagged-path fraction exceeds "
              << cfg.solver.max_flagged_fraction << "\n";
    return kExitFlagged;
  }
  return 0;
}

int cmd_sweep(const CommonOpts& co, std::vector<double> psis,
              std::vector<double> gammas) {
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioConfig base = load(co);
  if (psis.empty()) psis = {1.5, 0.69};
  if (gammas.empty()) gammas = {10.0, 3.066};

  std::ostringstream os;
  os << "psi,gamma,model,tax_north,tax_south\n";
  json cells = json::array();
  for (double psi : psis)
    for (double gamma : gammas) {
      ScenarioConfig cfg = base;
      cfg.pref.psi = psi;
      cfg.pref.gamma = gamma;
      Solved s = solve_models(cfg);
      const StateVector x0 = cfg.model.initial_state();
      json cell = {{"psi", psi}, {"gamma", gamma}};
      if (s.planner) {
        os << psi << ',' << gamma << ",planner,"
           << scc_sp(x0, 0, *s.planner, 0) << ','
           << scc_sp(x0, 0, *s.planner, 1) << '\n';
        cell["planner"] = s.stats["planner"];
      }
      if (s.fbne) {
        os << psi << ',' << gamma << ",fbne," << scc_fbne(x0, 0, *s.fbne, 0)
           << ',' << scc_fbne(x0, 0, *s.fbne, 1) << '\n';
        cell["fbne"] = s.stats["fbne"];
      }
      cells.push_back(cell);
      std::cout << "sweep: psi=" << psi << " gamma=" << gamma << " done\n";
    }
  write_text(fs::path(base.out_dir) / "sweep.csv", os.str());
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_manifest(base, "sweep", {{"cells", cells}}, secs);
  std::cout << os.str();
  return 0;
}

int cmd_calibrate(const CommonOpts& co, const std::string& module_name,
                  const std::string& targets_path,
                  const std::vector<std::string>& driver_specs,
                  std::vector<double> guess, std::vector<double> lower,
                  std::vector<double> upper) {
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioConfig cfg = load(co);

  CalibModule module;
  if (module_name == "carbon")
    module = CalibModule::carbon;
  else if (module_name == "temperature")
    module = CalibModule::temperature;
  else if (module_name == "slr")
    module = CalibModule::slr;
  else if (module_name == "permafrost")
    module = CalibModule::permafrost;
  else
    throw std::runtime_error("unknown calibration module: " + module_name);

  // drivers: kind:scenario=path, e.g. emissions:rcp_low=low.csv
  std::vector<CalibrationScenario> scenarios;
  auto scenario = [&](const std::string& label) -> CalibrationScenario& {
    for (auto& sc : scenarios)
      if (sc.label == label) return sc;
    scenarios.emplace_back();
    scenarios.back().label = label;
    return scenarios.back();
  };
  for (const auto& spec : driver_specs) {
    const auto colon = spec.find(':');
    const auto eq = spec.find('=', colon == std::string::npos ? 0 : colon);
    if (colon == std::string::npos || eq == std::string::npos)
      throw std::runtime_error("driver spec must be kind:scenario=path: " +
                               spec);
    const std::string kind = spec.substr(0, colon);
    const std::string label = spec.substr(colon + 1, eq - colon - 1);
    TimeSeries ts = read_series_csv(spec.substr(eq + 1));
    CalibrationScenario& sc = scenario(label);
    if (kind == "emissions")
      sc.emissions = ts;
    else if (kind == "forcing")
      sc.forcing = ts;
    else if (kind == "t_north")
      sc.t_north = ts;
    else if (kind == "t_ocean")
      sc.t_ocean = ts;
    else
      throw std::runtime_error("unknown driver kind: " + kind);
  }

  const auto targets = read_targets_csv(targets_path);
  const auto defaults = calib_defaults(module, cfg.model.climate);
  const int n = static_cast<int>(defaults.size());
  if (guess.empty()) guess = defaults;
  if (lower.empty() || upper.empty()) {
    lower.resize(n);
    upper.resize(n);
    for (int i = 0; i < n; ++i) {
      const double w = std::max(std::abs(defaults[i]), 0.01);
      lower[i] = defaults[i] - 10.0 * w;
      upper[i] = defaults[i] + 10.0 * w;
    }
  }
  if ((int)guess.size() != n || (int)lower.size() != n ||
      (int)upper.size() != n)
    throw std::runtime_error("calibrate: expected " + std::to_string(n) +
                             " values per parameter list");

  CalibrationResult res = calibrate(module, scenarios, targets, guess, lower,
                                    upper, cfg.model.climate);
  json j;
  j["module"] = module_name;
  j["converged"] = res.converged;
  j["iterations"] = res.iterations;
  j["rms"] = res.rms;
  j["max_abs"] = res.max_abs;
  j["scenario_rms"] = res.scenario_rms;
  json params = json::array();
  bool any_bound = false;
  for (std::size_t i = 0; i < res.params.size(); ++i) {
    params.push_back({{"name", res.names[i]},
                      {"value", res.params[i]},
                      {"at_bound", static_cast<bool>(res.at_bound[i])}});
    any_bound |= static_cast<bool>(res.at_bound[i]);
  }
  j["parameters"] = params;
  write_text(fs::path(cfg.out_dir) / "calibration.json", j.dump(2) + "\n");
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_manifest(cfg, "calibrate", j, secs);
  std::cout << j.dump(2) << "\n";
  if (!res.converged || any_bound) {
    std::cerr << "calibrate: "
              << (!res.converged ? "did not converge" : "parameters at bounds")
              << "\n";
    return kExitFlagged;
  }
  return 0;
}

int cmd_report(const CommonOpts& co) {
  ScenarioConfig cfg = load(co);
  const fs::path out(cfg.out_dir);
  const fs::path manifest = out / "manifest.json";
  if (!fs::exists(manifest))
    throw std::runtime_error("no manifest.json in " + out.string() +
                             "; run solve/simulate/sweep first");
  std::ifstream in(manifest);
  json m = json::parse(in);
  std::cout << "run:     " << m.value("command", "?") << "\n"
            << "config:  " << m.value("config_hash", "?") << "\n"
            << "elapsed: " << m.value("elapsed_seconds", 0.0) << " s\n"
            << "stats:   " << m["statistics"].dump(2) << "\n";
  for (const char* f : {"initial_taxes.csv", "sweep.csv", "calibration.json"})
    if (fs::exists(out / f)) {
      std::ifstream fin(out / f);
      std::cout << "\n== " << f << " ==\n" << fin.rdbuf();
    }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-region stochastic climate-economy model"};
  app.require_subcommand(1);

  CommonOpts co;
  int n_paths = 0;
  std::vector<double> psis, gammas, guess, lower, upper;
  std::string calib_module, targets_path;
  std::vector<std::string> drivers;

  const auto model_check = CLI::IsMember({"planner", "fbne", "both"});
  CLI::App* solve = app.add_subcommand("solve", "backward induction");
  add_common(solve, co);
  solve->add_option("--model", co.model_override, "planner|fbne|both")
      ->check(model_check);

  CLI::App* simulate = app.add_subcommand("simulate", "solve + Monte Carlo");
  add_common(simulate, co);
  simulate->add_option("--model", co.model_override, "planner|fbne|both")
      ->check(model_check);
  simulate->add_option("--paths", n_paths, "number of Monte Carlo paths");

  CLI::App* sweep = app.add_subcommand("sweep", "preference grid");
  add_common(sweep, co);
  sweep->add_option("--model", co.model_override, "planner|fbne|both")
      ->check(model_check);
  sweep->add_option("--psi", psis, "psi grid values")->delimiter(',');
  sweep->add_option("--gamma", gammas, "gamma grid values")->delimiter(',');

  CLI::App* calib = app.add_subcommand("calibrate", "least-squares fits");
  add_common(calib, co);
  calib->add_option("--module", calib_module,
                    "carbon|temperature|slr|permafrost")
      ->required();
  calib->add_option("--targets", targets_path, "targets CSV")->required();
  calib->add_option("--driver", drivers,
                    "scenario driver, kind:scenario=path.csv");
  calib->add_option("--guess", guess, "initial parameter guess")->delimiter(',');
  calib->add_option("--lower", lower, "parameter lower bounds")->delimiter(',');
  calib->add_option("--upper", upper, "parameter upper bounds")->delimiter(',');

  CLI::App* report = app.add_subcommand("report", "summarize an output dir");
  add_common(report, co);

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return cmd_solve(co);
    if (simulate->parsed()) return cmd_simulate(co, n_paths);
    if (sweep->parsed()) return cmd_sweep(co, psis, gammas);
    if (calib->parsed())
      return cmd_calibrate(co, calib_module, targets_path, drivers, guess,
                           lower, upper);
    if (report->parsed()) return cmd_report(co);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAbort;
  }
  return 0;
}

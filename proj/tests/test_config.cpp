#include "doctest.h"
#include "rcem/config.hpp"
#include "rcem/metrics.hpp"

#include <cstdio>
#include <fstream>

using namespace rcem;

namespace {

// truth-vs-fit with a floor so exactly-zero parameters are held to an
// absolute 1e-4 of the floor scale
void check_recovery(const std::vector<double>& fit,
                    const std::vector<double>& truth, double rel = 1e-4) {
  REQUIRE(fit.size() == truth.size());
  for (std::size_t i = 0; i < fit.size(); ++i) {
    const double scale = std::max(std::abs(truth[i]), 1e-3);
    CHECK(std::abs(fit[i] - truth[i]) <= rel * scale);
  }
}

std::vector<CalibrationTarget> synth_targets(
    CalibModule mod, const CalibrationScenario& sc,
    const std::vector<std::string>& series, int t_max, int step,
    const ClimateParams& truth) {
  std::vector<CalibrationTarget> tg;
  for (const auto& s : series) {
    CalibrationTarget t;
    t.series = s;
    t.scenario = sc.label;
    const auto sim = detail_calib::forward_series(mod, truth, sc, s, t_max);
    for (int y = 0; y <= t_max; y += step) {
      t.years.push_back(y);
      t.values.push_back(sim[y]);
    }
    tg.push_back(std::move(t));
  }
  return tg;
}

std::string write_tmp(const std::string& name, const std::string& body) {
  const std::string path = "/tmp/rcem_test_" + name;
  std::ofstream out(path);
  out << body;
  return path;
}

}  // namespace

TEST_CASE("empty config reproduces the defaults; overrides apply") {
  ScenarioConfig base;
  ScenarioConfig parsed = parse_config(json::object());
  CHECK(config_hash(parsed) == config_hash(base));
  CHECK(parsed.validate().empty());

  json j;
  j["mode"] = "fbne";
  j["seed"] = 99;
  j["preferences"] = {{"psi", 0.69}, {"gamma", 3.066}};
  j["solver"] = {{"horizon", 12}, {"degree", 1}};
  j["toggles"] = {{"slr", false}};
  j["economy"] = {{"k0", {100.0, 90.0}}, {"friction_b", 0.0}};
  j["climate"] = {{"rho_hazard", 0.001}};
  ScenarioConfig c = parse_config(j);
  CHECK(c.mode == "fbne");
  CHECK(c.seed == 99);
  CHECK(c.pref.psi == 0.69);
  CHECK(c.pref.gamma == 3.066);
  CHECK(c.solver.horizon == 12);
  CHECK(c.model.toggles.slr == false);
  CHECK(c.model.econ.k0[0] == 100.0);
  CHECK(c.model.econ.friction_b == 0.0);
  CHECK(c.model.climate.rho_hazard == 0.001);
  CHECK(config_hash(c) != config_hash(base));
  CHECK(c.validate().empty());

  // the game view carries the equilibrium-only knobs
  c.eps_bar = 1e-7;
  GameConfig g = c.game_config();
  CHECK(g.eps_bar == 1e-7);
  CHECK(g.solver.horizon == 12);
}

TEST_CASE("validation catches bad settings") {
  ScenarioConfig c;
  c.mode = "invalid";
  c.pref.psi = -1.0;
  c.solver.horizon = 0;
  c.eps_bar = 0.0;
  c.n_paths = 0;
  auto bad = c.validate();
  CHECK(bad.size() >= 5);

  json j;
  j["economy"] = {{"k0", {100.0}}};  // wrong arity
  CHECK_THROWS_AS(parse_config(j), std::invalid_argument);
}

TEST_CASE("toggle fidelity: effective dump, pinned adaptation, frozen slr") {
  json j;
  j["toggles"] = {{"heat_transport", false}, {"stochastic", false},
                  {"adaptation", false}, {"slr", false}};
  j["solver"] = {{"horizon", 2}, {"degree", 1}, {"terminal_years", 50}};
  ScenarioConfig c = parse_config(j);

  json dump = config_dump(c);
  CHECK(dump["effective_climate"]["xi_4"] == 0.0);
  CHECK(dump["effective_climate"]["xi_5"] == 0.0);
  CHECK(dump["effective_climate"]["rho_hazard"] == 0.0);
  CHECK(dump["climate"]["xi_4"] != 0.0);  // raw parameters untouched

  PlannerSolution sol = backward_induction_sp(c.planner_config());
  SimulationEnsemble ens = simulate(sol, 1, c.seed, c.domain_margin);
  for (int t = 0; t < ens.horizon; ++t) {
    CHECK(ens.backbone[t].controls.adapt[0] == 0.0);
    CHECK(ens.backbone[t].controls.adapt[1] == 0.0);
    CHECK(ens.backbone[t].state.s == ens.backbone[0].state.s);
  }
}

TEST_CASE("fbne node solve is independent of the capital_transfer toggle") {
  GameConfig a;
  a.solver.horizon = 1;
  a.solver.degree = 1;
  a.solver.terminal_years = 50;
  GameConfig b = a;
  b.model.toggles.capital_transfer = false;

  Domain dom({50.0, 30.0, 600.0, 300.0, 1500.0, 0.0, 0.0, -0.5, 0.0, 0.0},
             {300.0, 200.0, 1100.0, 700.0, 2100.0, 3.0, 2.0, 1.0, 1.0, 0.15});
  ValueFunctionApprox v;
  for (int chi = 0; chi < 2; ++chi) {
    v.layer[chi] = ChebApprox(dom, 1);
    for (double& c : v.layer[chi].coefficients()) c = 0.0;
    auto& coef = v.layer[chi].coefficients();
    coef[0] = 4000.0;  // constant term first in the tensor ordering
  }
  // add capital and carbon slopes through a fit-free linear build
  for (int chi = 0; chi < 2; ++chi) {
    const auto& idx = v.layer[chi].indices();
    for (std::size_t m = 0; m < idx.size(); ++m) {
      if (idx[m].terms.size() != 1) continue;
      const auto [d, o] = idx[m].terms[0];
      if (o != 1) continue;
      if (d == 0 || d == 1) v.layer[chi].coefficients()[m] = 200.0;
      if (d == 2) v.layer[chi].coefficients()[m] = -60.0;
    }
  }
  StateVector x = a.model.initial_state();
  FbneNodeSolution ra = solve_node_fbne(x, 0, {&v, &v}, a);
  FbneNodeSolution rb = solve_node_fbne(x, 0, {&v, &v}, b);
  CHECK(ra.accepted);
  for (int i = 0; i < 2; ++i) {
    CHECK(ra.controls.consump[i] == rb.controls.consump[i]);
    CHECK(ra.controls.mu[i] == rb.controls.mu[i]);
    CHECK(ra.controls.adapt[i] == rb.controls.adapt[i]);
  }
}

TEST_CASE("csv loaders: series interpolation and grouped targets") {
  const std::string sp = write_tmp(
      "series.csv", "year,value\n0,1.0\n10,2.0\n20,4.0\n");
  TimeSeries ts = read_series_csv(sp);
  CHECK(ts(0.0) == 1.0);
  CHECK(ts(5.0) == doctest::Approx(1.5));
  CHECK(ts(50.0) == 4.0);  // constant extrapolation
  std::remove(sp.c_str());

  const std::string bad = write_tmp("bad.csv", "year,value\n5,1.0\n3,2.0\n");
  CHECK_THROWS_AS(read_series_csv(bad), std::runtime_error);
  std::remove(bad.c_str());

  const std::string tp = write_tmp("targets.csv",
                                   "series,scenario,year,value\n"
                                   "m_at,rcp_low,0,851\n"
                                   "m_at,rcp_low,10,900\n"
                                   "m_at,rcp_high,0,851\n"
                                   "slr,rcp_low,0,0.14\n");
  auto tg = read_targets_csv(tp);
  CHECK(tg.size() == 3);
  CHECK(tg[0].series == "m_at");
  CHECK(tg[0].scenario == "rcp_low");
  CHECK(tg[0].years.size() == 2);
  CHECK(tg[0].values[1] == 900.0);
  std::remove(tp.c_str());
}

TEST_CASE("calibration round trip: carbon cycle") {
  ClimateParams truth;
  CalibrationScenario lo;
  lo.label = "low";
  lo.emissions = TimeSeries([](double t) { return 10.0 * std::exp(-0.02 * t); });
  CalibrationScenario hi;
  hi.label = "high";
  hi.emissions = TimeSeries([](double t) { return 12.0 + 0.1 * t; });

  std::vector<CalibrationTarget> tg;
  for (const auto* sc : {&lo, &hi})
    for (auto& t : synth_targets(CalibModule::carbon, *sc,
                                 {"m_at", "m_uo", "m_do"}, 80, 5, truth))
      tg.push_back(std::move(t));

  std::vector<double> tv = calib_defaults(CalibModule::carbon, truth);
  std::vector<double> guess = tv, lob = tv, upb = tv;
  for (std::size_t i = 0; i < tv.size(); ++i) {
    guess[i] *= 1.4;
    lob[i] = 0.1 * tv[i];
    upb[i] = 5.0 * tv[i];
  }
  CalibrationResult res =
      calibrate(CalibModule::carbon, {lo, hi}, tg, guess, lob, upb);
  CHECK(res.converged);
  CHECK(res.rms < 1e-8);
  check_recovery(res.params, tv);
  for (bool ab : res.at_bound) CHECK(!ab);
  CHECK(res.scenario_rms.size() == 2);
}

TEST_CASE("calibration round trip: temperature system") {
  ClimateParams truth;  // note xi_6 = 0 is on its bound by construction
  CalibrationScenario sc;
  sc.label = "forcing_ramp";
  sc.forcing = TimeSeries([](double t) { return 0.5 + 0.04 * t; });
  auto tg = synth_targets(CalibModule::temperature, sc,
                          {"t_north", "t_south", "t_ocean"}, 80, 4, truth);

  std::vector<double> tv = calib_defaults(CalibModule::temperature, truth);
  std::vector<double> guess = tv, lob(tv.size(), 0.0), upb(tv.size(), 2.0);
  for (std::size_t i = 0; i < tv.size(); ++i)
    guess[i] = tv[i] * 1.3 + 0.01;
  CalibrationResult res =
      calibrate(CalibModule::temperature, {sc}, tg, guess, lob, upb);
  CHECK(res.rms < 1e-8);
  check_recovery(res.params, tv);
}

TEST_CASE("calibration round trip: slr and permafrost") {
  ClimateParams truth;
  CalibrationScenario sc;
  sc.label = "warming";
  sc.t_north = TimeSeries([](double t) { return 1.0 + 0.03 * t; });
  sc.t_ocean = TimeSeries([](double t) { return 0.1 + 0.01 * t; });

  {
    auto tg = synth_targets(CalibModule::slr, sc, {"slr"}, 60, 3, truth);
    std::vector<double> tv = calib_defaults(CalibModule::slr, truth);
    std::vector<double> guess = tv, lob = tv, upb = tv;
    for (std::size_t i = 0; i < tv.size(); ++i) {
      guess[i] *= 0.7;
      lob[i] = 0.05 * tv[i];
      upb[i] = 5.0 * tv[i];
    }
    CalibrationResult res =
        calibrate(CalibModule::slr, {sc}, tg, guess, lob, upb);
    CHECK(res.rms < 1e-10);
    check_recovery(res.params, tv);
  }
  {
    auto tg = synth_targets(CalibModule::permafrost, sc, {"e_perm"}, 60, 3,
                            truth);
    std::vector<double> tv = calib_defaults(CalibModule::permafrost, truth);
    std::vector<double> guess = {1.0, -0.05, 0.3};
    std::vector<double> lob = {0.1, -0.5, 0.01};
    std::vector<double> upb = {10.0, 0.5, 2.0};
    CalibrationResult res =
        calibrate(CalibModule::permafrost, {sc}, tg, guess, lob, upb);
    CHECK(res.rms < 1e-10);
    check_recovery(res.params, tv);
  }
}

TEST_CASE("calibration: inconsistent targets report residual, no crash") {
  ClimateParams truth;
  CalibrationScenario sc;
  sc.label = "odd";
  sc.t_north = TimeSeries([](double) { return 2.0; });
  sc.t_ocean = TimeSeries([](double) { return 0.2; });
  CalibrationTarget t;
  t.series = "slr";
  t.scenario = "odd";
  t.years = {0, 10, 20};
  t.values = {0.14, 10.0, 0.0};  // not generated by any parameterization
  std::vector<double> tv = calib_defaults(CalibModule::slr, truth);
  std::vector<double> lob = {1e-5, 0.5, 1e-4}, upb = {0.1, 3.0, 0.1};
  CalibrationResult res = calibrate(CalibModule::slr, {sc}, {t}, tv, lob, upb);
  CHECK(res.rms > 0.1);
  CHECK(std::isfinite(res.rms));

  CHECK_THROWS_AS(calibrate(CalibModule::slr, {sc}, {}, tv, lob, upb),
                  std::invalid_argument);
  CalibrationTarget shuffled = t;
  shuffled.years = {10, 5, 20};
  CHECK_THROWS_AS(
      calibrate(CalibModule::slr, {sc}, {shuffled}, tv, lob, upb),
      std::invalid_argument);
}

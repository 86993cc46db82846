#pragma once
// Least-squares calibration of the geophysical blocks against scenario
// time series: carbon cycle given emissions, temperature system given
// forcing, sea level rise and permafrost emissions given temperatures.

#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcem/climate.hpp"
#include "rcem/economy.hpp"
#include "rcem/optimize.hpp"
#include "rcem/rng.hpp"

namespace rcem {

enum class CalibModule { carbon, temperature, slr, permafrost };

// Observed series to match: values of `series` at `years` (years since
// 2015, strictly increasing) under the scenario named `scenario`.
struct CalibrationTarget {
  std::string series;
  std::string scenario;
  std::vector<double> years;
  std::vector<double> values;
};

// Exogenous drivers and initial stocks for one scenario. Only the
// drivers used by the module being calibrated need to be set.
struct CalibrationScenario {
  std::string label;
  TimeSeries emissions;  // GtC/yr, drives the carbon cycle
  TimeSeries forcing;    // W/m^2 total forcing, drives the temperatures
  TimeSeries t_north, t_ocean;  // deg C, drive SLR and permafrost

  CarbonState m0 = {851.0, 460.0, 1740.0};
  TemperatureState t0 = {1.36, 0.765, 0.0068};
  double s0 = 0.14;
};

struct CalibrationResult {
  std::vector<std::string> names;
  std::vector<double> params;
  double rms = 0.0;
  double max_abs = 0.0;
  std::map<std::string, double> scenario_rms;
  std::vector<bool> at_bound;
  int iterations = 0;
  bool converged = false;
};

inline const std::vector<std::string>& calib_param_names(CalibModule m) {
  static const std::vector<std::string> carbon = {"phi_12", "phi_21", "phi_23",
                                                  "phi_32"};
  static const std::vector<std::string> temp = {"xi_1", "xi_2", "xi_3",
                                                "xi_4", "xi_5", "xi_6"};
  static const std::vector<std::string> slr = {"zeta_slr_1", "zeta_slr_2",
                                               "zeta_slr_3"};
  static const std::vector<std::string> perm = {"zeta_perm_1", "zeta_perm_2",
                                                "zeta_perm_3"};
  switch (m) {
    case CalibModule::carbon: return carbon;
    case CalibModule::temperature: return temp;
    case CalibModule::slr: return slr;
    default: return perm;
  }
}

inline std::vector<double> calib_defaults(CalibModule m,
                                          const ClimateParams& p) {
  switch (m) {
    case CalibModule::carbon: return {p.phi_12, p.phi_21, p.phi_23, p.phi_32};
    case CalibModule::temperature:
      return {p.xi_1, p.xi_2, p.xi_3, p.xi_4, p.xi_5, p.xi_6};
    case CalibModule::slr: return {p.zeta_slr_1, p.zeta_slr_2, p.zeta_slr_3};
    default: return {p.zeta_perm_1, p.zeta_perm_2, p.zeta_perm_3};
  }
}

inline void apply_calib_params(CalibModule m, std::span<const double> v,
                               ClimateParams& p) {
  switch (m) {
    case CalibModule::carbon:
      p.phi_12 = v[0];
      p.phi_21 = v[1];
      p.phi_23 = v[2];
      p.phi_32 = v[3];
      break;
    case CalibModule::temperature:
      p.xi_1 = v[0];
      p.xi_2 = v[1];
      p.xi_3 = v[2];
      p.xi_4 = v[3];
      p.xi_5 = v[4];
      p.xi_6 = v[5];
      break;
    case CalibModule::slr:
      p.zeta_slr_1 = v[0];
      p.zeta_slr_2 = v[1];
      p.zeta_slr_3 = v[2];
      break;
    default:
      p.zeta_perm_1 = v[0];
      p.zeta_perm_2 = v[1];
      p.zeta_perm_3 = v[2];
  }
}

namespace detail_calib {

// Annual forward run of the selected block; returns `series` evaluated at
// integer years 0..t_max. Note the global mean temperature is invariant
// to xi_4/xi_5 (they cancel in the sum), so those two are identifiable
// only from regional targets.
inline std::vector<double> forward_series(CalibModule m,
                                          const ClimateParams& p,
                                          const CalibrationScenario& sc,
                                          const std::string& series,
                                          int t_max) {
  std::vector<double> out(t_max + 1);
  switch (m) {
    case CalibModule::carbon: {
      CarbonState c = sc.m0;
      for (int t = 0; t <= t_max; ++t) {
        if (series == "m_at")
          out[t] = c.m_at;
        else if (series == "m_uo")
          out[t] = c.m_uo;
        else if (series == "m_do")
          out[t] = c.m_do;
        else
          throw std::invalid_argument("calibrate: carbon series " + series);
        c = step_carbon(c, sc.emissions(t), p);
      }
      break;
    }
    case CalibModule::temperature: {
      TemperatureState T = sc.t0;
      for (int t = 0; t <= t_max; ++t) {
        if (series == "t_north")
          out[t] = T.t_at_north;
        else if (series == "t_south")
          out[t] = T.t_at_south;
        else if (series == "t_global")
          out[t] = 0.5 * (T.t_at_north + T.t_at_south);
        else if (series == "t_ocean")
          out[t] = T.t_oc;
        else
          throw std::invalid_argument("calibrate: temperature series " +
                                      series);
        T = step_temperature(T, sc.forcing(t), p);
      }
      break;
    }
    case CalibModule::slr: {
      if (series != "slr")
        throw std::invalid_argument("calibrate: slr series " + series);
      double s = sc.s0;
      for (int t = 0; t <= t_max; ++t) {
        out[t] = s;
        s = step_slr(s, {sc.t_north(t), 0.0, sc.t_ocean(t)}, p);
      }
      break;
    }
    default: {
      if (series != "e_perm")
        throw std::invalid_argument("calibrate: permafrost series " + series);
      for (int t = 0; t <= t_max; ++t)
        out[t] = permafrost_emission(sc.t_north(t), p);
    }
  }
  return out;
}

}  // namespace detail_calib

inline CalibrationResult calibrate(
    CalibModule module, const std::vector<CalibrationScenario>& scenarios,
    const std::vector<CalibrationTarget>& targets,
    const std::vector<double>& guess, const std::vector<double>& lower,
    const std::vector<double>& upper, const ClimateParams& base = {}) {
  const int n = static_cast<int>(calib_param_names(module).size());
  if ((int)guess.size() != n || (int)lower.size() != n ||
      (int)upper.size() != n)
    throw std::invalid_argument("calibrate: parameter count mismatch");
  if (targets.empty()) throw std::invalid_argument("calibrate: no targets");

  auto scenario_of = [&](const std::string& label)
      -> const CalibrationScenario& {
    for (const auto& sc : scenarios)
      if (sc.label == label) return sc;
    throw std::invalid_argument("calibrate: unknown scenario " + label);
  };
  int n_res = 0;
  for (const auto& tg : targets) {
    if (tg.years.size() != tg.values.size() || tg.years.empty())
      throw std::invalid_argument("calibrate: malformed target " + tg.series);
    for (std::size_t k = 1; k < tg.years.size(); ++k)
      if (tg.years[k] <= tg.years[k - 1])
        throw std::invalid_argument("calibrate: target years not increasing");
    scenario_of(tg.scenario);
    n_res += static_cast<int>(tg.years.size());
  }

  // optimize in guess-relative units so finite-difference steps and the
  // damping are well scaled across parameters of very different size
  Eigen::VectorXd scale(n), y0(n), ylo(n), yhi(n);
  for (int i = 0; i < n; ++i) {
    scale(i) = std::max(std::abs(guess[i]), 1e-6);
    y0(i) = guess[i] / scale(i);
    ylo(i) = lower[i] / scale(i);
    yhi(i) = upper[i] / scale(i);
    if (ylo(i) > yhi(i)) throw std::invalid_argument("calibrate: bad bounds");
  }

  // residuals restricted to target points with year <= cutoff
  auto residuals_upto = [&](double cutoff) {
    return [&, cutoff](const Eigen::VectorXd& y) {
      ClimateParams p = base;
      std::vector<double> v(n);
      for (int i = 0; i < n; ++i) v[i] = y(i) * scale(i);
      apply_calib_params(module, v, p);
      std::vector<double> out;
      out.reserve(n_res);
      for (const auto& tg : targets) {
        const CalibrationScenario& sc = scenario_of(tg.scenario);
        const int t_max = static_cast<int>(std::lround(tg.years.back()));
        std::vector<double> sim;
        bool infeasible = false;
        try {
          sim = detail_calib::forward_series(module, p, sc, tg.series, t_max);
        } catch (const std::domain_error&) {
          infeasible = true;
        }
        for (std::size_t k = 0; k < tg.years.size(); ++k) {
          if (tg.years[k] > cutoff) continue;
          const int t = static_cast<int>(std::lround(tg.years[k]));
          out.push_back(infeasible ? 1e6 : sim[t] - tg.values[k]);
        }
      }
      return Eigen::Map<const Eigen::VectorXd>(out.data(), out.size())
          .eval();
    };
  };

  // temporal continuation: trajectory mismatch over long spans is
  // multimodal, so fit an expanding window of target years, warm-starting
  // each stage from the previous fit
  double year_max = 0.0;
  double target_scale = 0.0;
  for (const auto& tg : targets) {
    year_max = std::max(year_max, tg.years.back());
    for (double v : tg.values) target_scale = std::max(target_scale, std::abs(v));
  }
  LsqOptions opt;
  opt.max_iterations = 400;

  auto continuation = [&](Eigen::VectorXd y) {
    LsqResult lr;
    lr.x = y;
    for (double frac : {0.125, 0.25, 0.5, 1.0}) {
      const double cutoff = frac < 1.0 ? frac * year_max : year_max;
      auto fn = residuals_upto(cutoff);
      if (fn(y).size() == 0) continue;
      lr = levenberg_marquardt(fn, y, ylo, yhi, opt);
      y = lr.x;
    }
    return lr;
  };

  // deterministic jittered restarts around the guess guard against the
  // remaining local minima of the full-span objective
  LsqResult lr = continuation(y0);
  const double good = 1e-9 * std::max(target_scale, 1.0);
  for (std::uint64_t s = 1; s <= 12 && lr.residual.norm() > good; ++s) {
    Eigen::VectorXd yj = y0;
    for (int i = 0; i < n; ++i) {
      const double u =
          2.0 * (static_cast<double>(mix64(s * 131 + i) >> 11) * 0x1.0p-53) -
          1.0;
      yj(i) = std::clamp(y0(i) * (1.0 + 0.5 * u), ylo(i), yhi(i));
    }
    LsqResult alt = continuation(yj);
    if (alt.norm2 < lr.norm2) lr = alt;
  }

  CalibrationResult res;
  res.names = calib_param_names(module);
  res.params.resize(n);
  res.at_bound.resize(n);
  for (int i = 0; i < n; ++i) {
    res.params[i] = lr.x(i) * scale(i);
    const double span = yhi(i) - ylo(i);
    res.at_bound[i] = span > 0.0 && (lr.x(i) - ylo(i) < 1e-10 * span ||
                                     yhi(i) - lr.x(i) < 1e-10 * span);
  }
  res.iterations = lr.iterations;
  res.converged = lr.converged;
  res.rms = std::sqrt(lr.residual.squaredNorm() /
                      static_cast<double>(lr.residual.size()));
  res.max_abs = lr.residual.cwiseAbs().maxCoeff();
  int at = 0;
  for (const auto& tg : targets) {
    const int nk = static_cast<int>(tg.years.size());
    const double ss = lr.residual.segment(at, nk).squaredNorm();
    auto [it, fresh] = res.scenario_rms.try_emplace(tg.scenario, 0.0);
    it->second += ss;  // accumulate; converted to rms below
    at += nk;
  }
  std::map<std::string, int> counts;
  at = 0;
  for (const auto& tg : targets) {
    counts[tg.scenario] += static_cast<int>(tg.years.size());
    at += static_cast<int>(tg.years.size());
  }
  for (auto& [label, ss] : res.scenario_rms)
    ss = std::sqrt(ss / static_cast<double>(counts[label]));
  return res;
}

}  // namespace rcem

#pragma once
// Policy metrics: regional carbon taxes from value-function gradients,
// Monte Carlo forward simulation of the solved models, and fan-chart
// quantile summaries with CSV export.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "rcem/fbne.hpp"
#include "rcem/planner.hpp"
#include "rcem/rng.hpp"

namespace rcem {

// Regional carbon tax in $/tC: -1000 (dV/dM_AT) / (dV/dK_i). The value
// functions are fitted untransformed, so the fitted gradient is the
// gradient that enters the ratio directly.
inline double carbon_tax_from(const ChebApprox& v, const StateVector& x,
                              int region) {
  std::array<double, StateVector::kContinuous> g;
  v.eval_grad(x.continuous(), g);
  if (std::abs(g[region]) < 1e-300)
    throw std::domain_error("carbon tax: vanishing capital gradient");
  return -1000.0 * g[2] / g[region];
}

inline double scc_sp(const StateVector& x, int t, const PlannerSolution& sol,
                     int region) {
  return carbon_tax_from(sol.value.at(t).for_chi(x.chi), x, region);
}

inline double scc_fbne(const StateVector& x, int t, const GameSolution& sol,
                       int region) {
  return carbon_tax_from(sol.value[region].at(t).for_chi(x.chi), x, region);
}

// ---------------------------------------------------------------------------
// Forward simulation. The only randomness is the tipping draw, and the
// dynamics after a flip are deterministic, so an ensemble decomposes into
// the no-tip backbone plus one deterministic suffix per flip year; paths
// are assembled by lookup. This is exact, not an approximation.

struct SimYear {
  StateVector state;
  RegionalControls controls;
  std::array<double, 2> tax = {0.0, 0.0};
  double tip_prob = 0.0;  // P(flip during this year's transition)
  bool in_domain = true;
  bool converged = true;
};

struct SimulationEnsemble {
  std::uint64_t seed = 0;
  int horizon = 0;
  int n_paths = 0;
  std::vector<SimYear> backbone;               // chi = 0 trajectory, years 0..horizon-1
  std::vector<std::vector<SimYear>> suffix;    // suffix[ty]: years ty..horizon-1
  std::vector<int> tip_year;                   // per path; -1 = never flips
  std::vector<bool> flagged;                   // domain exit or failed solve

  const SimYear& at(int path, int year) const {
    const int ty = tip_year.at(path);
    if (ty < 0 || year < ty) return backbone.at(year);
    return suffix.at(ty).at(year - ty);
  }
};

namespace detail_metrics {

// Domain membership with a relative margin of the per-dimension span.
inline bool within(const Domain& dom, const StateVector& x, double margin) {
  const auto c = x.continuous();
  for (int d = 0; d < StateVector::kContinuous; ++d) {
    const double span = dom.upper[d] - dom.lower[d];
    if (c[d] < dom.lower[d] - margin * span ||
        c[d] > dom.upper[d] + margin * span)
      return false;
  }
  return true;
}

struct SpPolicy {
  const PlannerSolution& sol;
  Eigen::VectorXd warm;

  int horizon() const { return sol.cfg.solver.horizon; }
  const Model& model() const { return sol.cfg.model; }
  const std::vector<Domain>& domains() const { return sol.domains; }

  // solves the node, fills controls/taxes and the capital inflows
  bool solve(const StateVector& x, int t, SimYear& out,
             std::array<double, 2>& inflow) {
    std::optional<Eigen::VectorXd> ws;
    if (warm.size() > 0) ws = warm;
    NodeSolution ns = solve_node_sp(x, t, sol.value[t + 1], sol.cfg, ws, &warm);
    out.controls = ns.controls;
    for (int i = 0; i < 2; ++i) {
      inflow[i] = ns.controls.invest[i];
      out.tax[i] = scc_sp(x, t, sol, i);
    }
    return ns.converged;
  }
  void reset_warm() { warm.resize(0); }
};

struct FbnePolicy {
  const GameSolution& sol;
  Eigen::VectorXd warm;

  int horizon() const { return sol.cfg.solver.horizon; }
  const Model& model() const { return sol.cfg.model; }
  const std::vector<Domain>& domains() const { return sol.domains; }

  bool solve(const StateVector& x, int t, SimYear& out,
             std::array<double, 2>& inflow) {
    std::optional<Eigen::VectorXd> ws;
    if (warm.size() > 0) ws = warm;
    FbneNodeSolution ns = solve_node_fbne(
        x, t, {&sol.value[0][t + 1], &sol.value[1][t + 1]}, sol.cfg, ws, &warm);
    out.controls = ns.controls;
    const ClimateParams cp = model().effective_climate();
    GlobalFlows f = compute_flows(x, t, ns.controls.mu, ns.controls.adapt,
                                  model(), cp);
    for (int i = 0; i < 2; ++i) {
      inflow[i] = f.region[i].y_hat -
                  ns.controls.consump[i] * model().paths.pop(t, i);
      out.tax[i] = scc_fbne(x, t, sol, i);
    }
    return ns.accepted;
  }
  void reset_warm() { warm.resize(0); }
};

// Deterministic trajectory from (x0, t0) to the horizon under the policy;
// records controls, taxes, per-year flip probability and domain flags.
template <class Policy>
std::vector<SimYear> rollout(Policy& pol, StateVector x0, int t0,
                             double domain_margin) {
  const Model& m = pol.model();
  const ClimateParams cp = m.effective_climate();
  std::vector<SimYear> years;
  years.reserve(pol.horizon() - t0);
  pol.reset_warm();
  StateVector x = x0;
  for (int t = t0; t < pol.horizon(); ++t) {
    SimYear y;
    y.state = x;
    y.in_domain = within(pol.domains()[t], x, domain_margin);
    std::array<double, 2> inflow;
    y.converged = pol.solve(x, t, y, inflow);

    GlobalFlows f =
        compute_flows(x, t, y.controls.mu, y.controls.adapt, m, cp);
    std::array<double, 2> k_next;
    for (int i = 0; i < 2; ++i)
      k_next[i] = step_capital(x.k(i), inflow[i], m.econ);
    TransitionResult tr = step_state(x, t, k_next, f.e_global, m, cp);
    y.tip_prob = tr.tip_prob;
    years.push_back(y);
    x = tr.next;
  }
  return years;
}

template <class Policy>
SimulationEnsemble simulate_impl(Policy pol, int n_paths, std::uint64_t seed,
                                 double domain_margin) {
  SimulationEnsemble ens;
  ens.seed = seed;
  ens.horizon = pol.horizon();
  ens.n_paths = n_paths;
  ens.backbone = rollout(pol, pol.model().initial_state(), 0, domain_margin);
  ens.suffix.resize(ens.horizon + 1);

  // per-path tipping draws along the backbone; the keyed generator makes
  // the draws independent of evaluation order
  ens.tip_year.assign(n_paths, -1);
  const bool stochastic = pol.model().toggles.stochastic;
  for (int p = 0; p < n_paths; ++p) {
    if (!stochastic) break;
    for (int t = 0; t < ens.horizon; ++t) {
      if (uniform01(seed, p, t) < ens.backbone[t].tip_prob) {
        ens.tip_year[p] = t + 1;
        break;
      }
    }
  }

  // deterministic suffixes, one per realized flip year
  for (int p = 0; p < n_paths; ++p) {
    const int ty = ens.tip_year[p];
    if (ty < 0 || ty >= ens.horizon || !ens.suffix[ty].empty()) continue;
    // the flip is applied to the state entering year ty
    const ClimateParams cp = pol.model().effective_climate();
    const Model& m = pol.model();
    const SimYear& prev = ens.backbone[ty - 1];
    GlobalFlows f = compute_flows(prev.state, ty - 1, prev.controls.mu,
                                  prev.controls.adapt, m, cp);
    std::array<double, 2> inflow;
    if constexpr (std::is_same_v<Policy, SpPolicy>) {
      inflow = {prev.controls.invest[0], prev.controls.invest[1]};
    } else {
      for (int i = 0; i < 2; ++i)
        inflow[i] = f.region[i].y_hat -
                    prev.controls.consump[i] * m.paths.pop(ty - 1, i);
    }
    std::array<double, 2> k_next;
    for (int i = 0; i < 2; ++i)
      k_next[i] = step_capital(prev.state.k(i), inflow[i], m.econ);
    TransitionResult tr =
        step_state(prev.state, ty - 1, k_next, f.e_global, m, cp);
    StateVector x_tipped = tr.next;
    x_tipped.chi = 1;
    ens.suffix[ty] = rollout(pol, x_tipped, ty, domain_margin);
  }

  ens.flagged.assign(n_paths, false);
  for (int p = 0; p < n_paths; ++p) {
    bool bad = false;
    for (int t = 0; t < ens.horizon; ++t) {
      const SimYear& y = ens.at(p, t);
      if (!y.in_domain || !y.converged) bad = true;
    }
    ens.flagged[p] = bad;
  }
  return ens;
}

}  // namespace detail_metrics

inline SimulationEnsemble simulate(const PlannerSolution& sol, int n_paths,
                                   std::uint64_t seed,
                                   double domain_margin = 0.1) {
  return detail_metrics::simulate_impl(detail_metrics::SpPolicy{sol}, n_paths,
                                       seed, domain_margin);
}

inline SimulationEnsemble simulate(const GameSolution& sol, int n_paths,
                                   std::uint64_t seed,
                                   double domain_margin = 0.1) {
  return detail_metrics::simulate_impl(detail_metrics::FbnePolicy{sol},
                                       n_paths, seed, domain_margin);
}

// ---------------------------------------------------------------------------
// Named per-year series and fan charts.

inline double series_value(const SimYear& y, const std::string& name) {
  if (name == "k1") return y.state.k1;
  if (name == "k2") return y.state.k2;
  if (name == "m_at") return y.state.m_at;
  if (name == "m_uo") return y.state.m_uo;
  if (name == "m_do") return y.state.m_do;
  if (name == "t_at1") return y.state.t_at1;
  if (name == "t_at2") return y.state.t_at2;
  if (name == "t_oc") return y.state.t_oc;
  if (name == "slr") return y.state.s;
  if (name == "j") return y.state.j;
  if (name == "chi") return static_cast<double>(y.state.chi);
  if (name == "c1") return y.controls.consump[0];
  if (name == "c2") return y.controls.consump[1];
  if (name == "mu1") return y.controls.mu[0];
  if (name == "mu2") return y.controls.mu[1];
  if (name == "p1") return y.controls.adapt[0];
  if (name == "p2") return y.controls.adapt[1];
  if (name == "tax1") return y.tax[0];
  if (name == "tax2") return y.tax[1];
  throw std::invalid_argument("series_value: unknown series '" + name + "'");
}

struct FanChart {
  std::string series;
  // per year: mean, nearest-rank 1/2/5% quantiles, min, max
  std::vector<double> mean, q01, q02, q05, min, max;
};

// Nearest-rank empirical quantile of a sorted sample.
inline double nearest_rank(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  std::size_t r = static_cast<std::size_t>(
      std::ceil(p * static_cast<double>(n)));
  if (r < 1) r = 1;
  if (r > n) r = n;
  return sorted[r - 1];
}

inline FanChart fan_chart(const SimulationEnsemble& ens,
                          const std::string& name) {
  FanChart fc;
  fc.series = name;
  std::vector<double> vals(ens.n_paths);
  for (int t = 0; t < ens.horizon; ++t) {
    double sum = 0.0;
    for (int p = 0; p < ens.n_paths; ++p) {
      vals[p] = series_value(ens.at(p, t), name);
      sum += vals[p];
    }
    std::sort(vals.begin(), vals.end());
    fc.mean.push_back(sum / static_cast<double>(ens.n_paths));
    fc.q01.push_back(nearest_rank(vals, 0.01));
    fc.q02.push_back(nearest_rank(vals, 0.02));
    fc.q05.push_back(nearest_rank(vals, 0.05));
    fc.min.push_back(vals.front());
    fc.max.push_back(vals.back());
  }
  return fc;
}

inline void write_csv(const FanChart& fc, std::ostream& os) {
  os << "year,mean,q01,q02,q05,min,max\n";
  for (std::size_t t = 0; t < fc.mean.size(); ++t)
    os << t << ',' << fc.mean[t] << ',' << fc.q01[t] << ',' << fc.q02[t]
       << ',' << fc.q05[t] << ',' << fc.min[t] << ',' << fc.max[t] << '\n';
}

inline void write_csv(const SimulationEnsemble& ens, std::ostream& os,
                      int max_paths = 100) {
  static const char* cols[] = {"k1", "k2",  "m_at", "m_uo", "m_do", "t_at1",
                               "t_at2", "t_oc", "slr", "j", "chi", "c1",
                               "c2", "mu1", "mu2", "p1", "p2", "tax1", "tax2"};
  os << "path,year";
  for (const char* c : cols) os << ',' << c;
  os << ",flagged\n";
  const int np = std::min(ens.n_paths, max_paths);
  for (int p = 0; p < np; ++p)
    for (int t = 0; t < ens.horizon; ++t) {
      os << p << ',' << t;
      for (const char* c : cols) os << ',' << series_value(ens.at(p, t), c);
      os << ',' << (ens.flagged[p] ? 1 : 0) << '\n';
    }
}

}  // namespace rcem

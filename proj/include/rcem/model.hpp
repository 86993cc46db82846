#pragma once
// Combined climate-economy model: the eleven-variable state, scenario
// toggles, per-period flow accounting, the one-step transition with its
// tipping branches, and time-varying approximation domains built from
// deterministic reference runs.

#include <algorithm>
#include <array>
#include <span>
#include <vector>

#include "rcem/chebyshev.hpp"
#include "rcem/climate.hpp"
#include "rcem/economy.hpp"

namespace rcem {

struct StateVector {
  double k1 = 146.0;
  double k2 = 77.0;
  double m_at = 851.0;
  double m_uo = 460.0;
  double m_do = 1740.0;
  double t_at1 = 1.36;
  double t_at2 = 0.765;
  double t_oc = 0.0068;
  double s = 0.14;
  double j = 0.0;
  int chi = 0;

  static constexpr int kContinuous = 10;

  double k(int i) const { return i == 0 ? k1 : k2; }
  double t_at(int i) const { return i == 0 ? t_at1 : t_at2; }

  std::array<double, kContinuous> continuous() const {
    return {k1, k2, m_at, m_uo, m_do, t_at1, t_at2, t_oc, s, j};
  }

  static StateVector from_continuous(std::span<const double> c, int chi) {
    StateVector x;
    x.k1 = c[0];
    x.k2 = c[1];
    x.m_at = c[2];
    x.m_uo = c[3];
    x.m_do = c[4];
    x.t_at1 = c[5];
    x.t_at2 = c[6];
    x.t_oc = c[7];
    x.s = c[8];
    x.j = c[9];
    x.chi = chi;
    return x;
  }
};

struct ModelToggles {
  bool heat_transport = true;   // off: xi_4 = xi_5 = 0
  bool slr = true;              // off: S frozen at S_0
  bool adaptation = true;       // off: P pinned to 0
  bool permafrost = true;       // off: no permafrost emissions
  bool capital_transfer = true; // off: hard per-region budget (planner)
  bool stochastic = true;       // off: tipping hazard 0
};

struct Model {
  ClimateParams climate;
  EconomyParams econ;
  ExogenousPaths paths;
  ModelToggles toggles;

  // Toggle-adjusted climate parameters; call once, not per node.
  ClimateParams effective_climate() const {
    ClimateParams c = climate;
    if (!toggles.heat_transport) {
      c.xi_4 = 0.0;
      c.xi_5 = 0.0;
    }
    if (!toggles.stochastic) c.rho_hazard = 0.0;
    return c;
  }

  StateVector initial_state() const {
    StateVector x;
    x.k1 = econ.k0[0];
    x.k2 = econ.k0[1];
    return x;
  }
};

struct RegionFlows {
  double gross = 0.0;
  double y_net = 0.0;
  double y_hat = 0.0;
  double e_ind = 0.0;
};

struct GlobalFlows {
  std::array<RegionFlows, 2> region;
  double e_global = 0.0;
};

// Production, damages, net output and emissions at (x, t) under the given
// mitigation and adaptation rates. Throws InfeasibleControl via net_output
// when a control point is inadmissible.
inline GlobalFlows compute_flows(const StateVector& x, double t,
                                 const std::array<double, 2>& mu,
                                 const std::array<double, 2>& adapt,
                                 const Model& m, const ClimateParams& cp) {
  GlobalFlows f;
  for (int i = 0; i < 2; ++i) {
    RegionFlows& r = f.region[i];
    r.gross = gross_output(x.k(i), m.paths.pop(t, i), tfp(t, i, m.econ), m.econ);
    const double p_i = m.toggles.adaptation ? adapt[i] : 0.0;
    NetOutput n = net_output(r.gross, x.j, damage_slr(x.s, i, m.econ),
                             damage_temp(x.t_at(i), i, m.econ), p_i, mu[i], t,
                             i, m.econ);
    r.y_net = n.y_net;
    r.y_hat = n.y_hat;
    r.e_ind = industrial_emission(r.gross, mu[i], t, i, m.econ);
  }
  EmissionToggles et;
  et.permafrost = m.toggles.permafrost;
  f.e_global = global_emission(f.region[0].e_ind, f.region[1].e_ind, x.t_at1,
                               t, cp, et);
  return f;
}

struct TransitionResult {
  StateVector next;     // chi set to the no-flip branch
  double tip_prob = 0.0; // P(chi' = 1 | chi = 0); 0 if already tipped
};

// Advances carbon, temperature, SLR and tipping damage given this
// period's global emissions and next-period capital. The chi draw is the
// only randomness and is left to the caller via tip_prob.
inline TransitionResult step_state(const StateVector& x, double t,
                                   const std::array<double, 2>& k_next,
                                   double e_global, const Model& m,
                                   const ClimateParams& cp) {
  TransitionResult r;
  StateVector& n = r.next;
  n.k1 = k_next[0];
  n.k2 = k_next[1];

  const CarbonState mc =
      step_carbon({x.m_at, x.m_uo, x.m_do}, e_global, cp);
  n.m_at = mc.m_at;
  n.m_uo = mc.m_uo;
  n.m_do = mc.m_do;

  const double f = radiative_forcing(x.m_at, t, cp);
  const TemperatureState tt =
      step_temperature({x.t_at1, x.t_at2, x.t_oc}, f, cp);
  n.t_at1 = tt.t_at_north;
  n.t_at2 = tt.t_at_south;
  n.t_oc = tt.t_oc;

  n.s = m.toggles.slr ? step_slr(x.s, {x.t_at1, x.t_at2, x.t_oc}, cp) : x.s;

  // damage accrues with the current indicator; a flip raises j next step
  n.j = std::min(cp.j_bar, x.j + cp.tipping_increment()) * x.chi;
  n.chi = x.chi;
  r.tip_prob = x.chi == 1 ? 0.0 : tipping_probability(x.t_at1, cp);
  return r;
}

struct Branches {
  std::array<StateVector, 2> next;
  std::array<double, 2> prob = {1.0, 0.0};
  int count = 1;
};

inline Branches tipping_branches(const TransitionResult& r) {
  Branches b;
  b.next[0] = r.next;
  if (r.next.chi == 0 && r.tip_prob > 0.0) {
    b.next[1] = r.next;
    b.next[1].chi = 1;
    b.prob = {1.0 - r.tip_prob, r.tip_prob};
    b.count = 2;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Time-varying approximation domains from deterministic reference runs.

struct ReferenceRun {
  double saving = 0.25;    // investment share of y_hat
  double mu = 0.0;         // constant mitigation rate
  double adapt = 0.1;      // constant adaptation rate
  int chi = 0;             // tipping branch held fixed
};

// Simulates one deterministic path of the continuous state under fixed
// shares, splitting y_hat - I equally per capita within each region.
inline std::vector<StateVector> reference_path(const Model& m, int horizon,
                                               const ReferenceRun& run) {
  const ClimateParams cp = m.effective_climate();
  std::vector<StateVector> path;
  path.reserve(horizon + 1);
  StateVector x = m.initial_state();
  x.chi = run.chi;
  path.push_back(x);
  for (int t = 0; t < horizon; ++t) {
    GlobalFlows f =
        compute_flows(x, t, {run.mu, run.mu}, {run.adapt, run.adapt}, m, cp);
    std::array<double, 2> k_next;
    for (int i = 0; i < 2; ++i)
      k_next[i] = step_capital(x.k(i), run.saving * f.region[i].y_hat, m.econ);
    TransitionResult r = step_state(x, t, k_next, f.e_global, m, cp);
    x = r.next;
    path.push_back(x);
  }
  return path;
}

// Per-period domains enveloping a bundle of reference runs, padded by a
// fraction of the observed span plus absolute floors per dimension.
inline std::vector<Domain> build_domains(const Model& m, int horizon,
                                         double pad = 0.2) {
  const std::array<ReferenceRun, 6> runs = {{{0.15, 0.0, 0.0, 0},
                                             {0.30, 0.0, 0.3, 0},
                                             {0.15, 1.0, 0.0, 0},
                                             {0.30, 1.0, 0.3, 0},
                                             {0.22, 0.0, 0.1, 1},
                                             {0.22, 1.0, 0.1, 1}}};
  std::vector<std::vector<StateVector>> paths;
  for (const ReferenceRun& r : runs)
    paths.push_back(reference_path(m, horizon, r));

  // floors keep every dimension solvable even where the runs agree
  const std::array<double, StateVector::kContinuous> floor = {
      10.0, 10.0, 40.0, 40.0, 40.0, 0.25, 0.25, 0.1, 0.05, 0.0};
  // hard lower bounds protect logs and positivity
  const std::array<double, StateVector::kContinuous> hard_lo = {
      1.0, 1.0, 100.0, 50.0, 200.0, -2.0, -2.0, -2.0, 0.0, 0.0};

  std::vector<Domain> out;
  out.reserve(horizon + 1);
  for (int t = 0; t <= horizon; ++t) {
    std::vector<double> lo(StateVector::kContinuous),
        hi(StateVector::kContinuous);
    for (int d = 0; d < StateVector::kContinuous; ++d) {
      double mn = 1e300, mx = -1e300;
      for (const auto& p : paths) {
        const double v = p[t].continuous()[d];
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
      const double span = mx - mn;
      lo[d] = std::max(hard_lo[d], mn - pad * span - 0.5 * floor[d]);
      hi[d] = mx + pad * span + 0.5 * floor[d];
    }
    // tipping damage always spans its full range
    lo[9] = 0.0;
    hi[9] = m.climate.j_bar;
    out.emplace_back(std::move(lo), std::move(hi));
  }
  return out;
}

}  // namespace rcem

#pragma once
// Social planner backward induction: per-node constrained maximization of
// period utility plus the Epstein-Zin certainty equivalent, terminal value
// by a long discounted tail under frozen policies, and the fitted
// value-function sequence with re-solving policy evaluation.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcem/model.hpp"
#include "rcem/optimize.hpp"
#include "rcem/preferences.hpp"

namespace rcem {

struct SolverSettings {
  int horizon = 100;
  int degree = 2;
  // sparse oversampling (2x) aliases low-order slope coefficients badly
  // enough to corrupt the tax gradients; 4x keeps them accurate
  double oversample = 4.0;
  double kkt_tol = 1e-6;          // relative projected-gradient tolerance
  int multi_starts = 3;
  double max_flagged_fraction = 0.25;
  double domain_pad = 0.2;

  // terminal tail: constant saving rate from the reference pre-runs,
  // adaptation from the y_hat first-order condition at x_T
  double terminal_saving = 0.22;
  double terminal_adapt = -1.0;   // < 0: solve the FOC
  int terminal_years = 300;
};

struct PlannerConfig {
  Model model;
  Preferences pref;
  SolverSettings solver;
};

// Discounted tail sums t = T ... T+terminal_years per region under frozen
// exogenous paths, full mitigation, fixed adaptation, zero adjustment cost,
// and constant consumption/investment shares of net output. The tipping
// state is frozen: chi = 0 never tips, chi = 1 unfolds to the cap. The
// planner terminal value is the sum; the game uses the per-region tails.
inline std::array<double, 2> terminal_tail(const StateVector& x_T, int t_T,
                                           const PlannerConfig& cfg) {
  const Model& m = cfg.model;
  const ClimateParams cp = m.effective_climate();
  const double tt = static_cast<double>(t_T);

  // frozen exogenous levels
  std::array<double, 2> a_frozen, l_frozen;
  for (int i = 0; i < 2; ++i) {
    a_frozen[i] = tfp(tt, i, m.econ);
    l_frozen[i] = m.paths.pop(tt, i);
  }
  const double e_land_frozen = ExogenousPaths::e_land(tt);

  // fixed adaptation rate per region
  std::array<double, 2> adapt = {0.0, 0.0};
  if (m.toggles.adaptation) {
    for (int i = 0; i < 2; ++i) {
      if (cfg.solver.terminal_adapt >= 0.0) {
        adapt[i] = cfg.solver.terminal_adapt;
      } else {
        const double gross =
            gross_output(x_T.k(i), l_frozen[i], a_frozen[i], m.econ);
        adapt[i] = optimal_adaptation(gross, x_T.j, damage_slr(x_T.s, i, m.econ),
                                      damage_temp(x_T.t_at(i), i, m.econ), 1.0,
                                      tt, i, m.econ);
      }
    }
  }

  const double s_inv = cfg.solver.terminal_saving;
  const double s_con = 1.0 - s_inv;

  StateVector x = x_T;
  std::array<double, 2> value = {0.0, 0.0};
  double disc = 1.0;
  for (int n = 0; n <= cfg.solver.terminal_years; ++n) {
    std::array<double, 2> y_hat, k_next;
    double e_ind = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double gross = gross_output(x.k(i), l_frozen[i], a_frozen[i], m.econ);
      NetOutput no = net_output(gross, x.j, damage_slr(x.s, i, m.econ),
                                damage_temp(x.t_at(i), i, m.econ), adapt[i],
                                1.0, tt, i, m.econ);
      y_hat[i] = no.y_hat;
      const double c = s_con * y_hat[i] / l_frozen[i];
      value[i] += disc * utility(c, cfg.pref) * l_frozen[i];
      k_next[i] = step_capital(x.k(i), s_inv * y_hat[i], m.econ);
    }
    disc *= cfg.pref.beta;
    if (disc == 0.0 || n == cfg.solver.terminal_years) break;

    double e_global = e_ind + e_land_frozen;
    if (m.toggles.permafrost) e_global += permafrost_emission(x.t_at1, cp);
    TransitionResult tr = step_state(x, tt, k_next, e_global, m, cp);
    x = tr.next;  // chi frozen: step_state keeps chi and unfolds j by chi
  }
  return value;
}

inline double terminal_value_sp(const StateVector& x_T, int t_T,
                                const PlannerConfig& cfg) {
  const std::array<double, 2> tail = terminal_tail(x_T, t_T, cfg);
  return tail[0] + tail[1];
}

struct NodeSolution {
  double value = -std::numeric_limits<double>::infinity();
  RegionalControls controls;
  double kkt_residual = std::numeric_limits<double>::infinity();
  bool converged = false;
};

namespace detail_sp {

// Shared per-node context: precomputed scales and the objective over the
// reduced control vector. Open economy (capital transfer on) uses
// theta = (s_i1, s_i2, cshare1, mu1, mu2, p1, p2) with region 2's
// consumption eliminated through market clearing; the closed economy uses
// theta = (cshare1, cshare2, mu1, mu2, p1, p2) with I_i = y_hat_i - c_i L_i.
struct NodeProblem {
  const StateVector& x;
  double t;
  const ValueFunctionApprox& v_next;
  const PlannerConfig& cfg;
  const ClimateParams& cp;
  std::array<double, 2> pops;
  bool open;  // capital transfer allowed

  int dim() const { return open ? 7 : 6; }

  Eigen::VectorXd lower() const {
    Eigen::VectorXd lo(dim());
    if (open)
      lo << 0.0, 0.0, 1e-4, 0.0, 0.0, 0.0, 0.0;
    else
      lo << 1e-4, 1e-4, 0.0, 0.0, 0.0, 0.0;
    return lo;
  }
  Eigen::VectorXd upper() const {
    Eigen::VectorXd hi(dim());
    const double pmax = cfg.model.toggles.adaptation ? 1.0 : 0.0;
    if (open)
      hi << 0.9, 0.9, 0.98, 1.0, 1.0, pmax, pmax;
    else
      hi << 0.999, 0.999, 1.0, 1.0, pmax, pmax;
    return hi;
  }

  // Decodes theta into full controls; returns false when inadmissible.
  bool decode(const Eigen::VectorXd& th, RegionalControls& a,
              GlobalFlows& f) const {
    std::array<double, 2> mu, ad;
    if (open) {
      mu = {th(3), th(4)};
      ad = {th(5), th(6)};
    } else {
      mu = {th(2), th(3)};
      ad = {th(4), th(5)};
    }
    f = compute_flows(x, t, mu, ad, cfg.model, cp);  // may throw
    a.mu = mu;
    a.adapt = ad;
    const double y1 = f.region[0].y_hat, y2 = f.region[1].y_hat;
    if (open) {
      const double y_sum = y1 + y2;
      a.invest = {th(0) * y_sum, th(1) * y_sum};
      a.consump[0] = th(2) * y_sum / pops[0];
      // market clearing: solve for region 2's absorption z2 = I2 + c2 L2
      const double b = cfg.model.econ.friction_b;
      const double gamma1 = adjustment_cost(y1, a.invest[0], a.consump[0],
                                            pops[0], cfg.model.econ);
      const double rem = y_sum - a.invest[0] - a.consump[0] * pops[0] - gamma1;
      double z2;
      if (b == 0.0) {
        z2 = rem;
      } else {
        const double disc2 = 1.0 + 2.0 * b * (rem - y2) / y2;
        if (disc2 < 0.0) return false;
        z2 = y2 + (y2 / b) * (std::sqrt(disc2) - 1.0);
      }
      a.consump[1] = (z2 - a.invest[1]) / pops[1];
      if (a.consump[1] <= 0.0) return false;
    } else {
      a.consump[0] = th(0) * y1 / pops[0];
      a.consump[1] = th(1) * y2 / pops[1];
      a.invest = {y1 - a.consump[0] * pops[0], y2 - a.consump[1] * pops[1]};
    }
    if (a.invest[0] < 0.0 || a.invest[1] < 0.0) return false;
    return true;
  }

  // Value of the Bellman right-hand side; throws/returns -inf style via
  // exceptions for inadmissible points (caught by the optimizer wrapper).
  double value(const Eigen::VectorXd& th) const {
    RegionalControls a;
    GlobalFlows f;
    if (!decode(th, a, f))
      throw InfeasibleControl("solve_node_sp: inadmissible control point");
    std::array<double, 2> k_next;
    for (int i = 0; i < 2; ++i)
      k_next[i] = step_capital(x.k(i), a.invest[i], cfg.model.econ);
    TransitionResult tr =
        step_state(x, t, k_next, f.e_global, cfg.model, cp);
    Branches br = tipping_branches(tr);
    std::array<double, 2> vals, probs;
    for (int bi = 0; bi < br.count; ++bi) {
      vals[bi] = v_next.for_chi(br.next[bi].chi).eval(br.next[bi].continuous());
      probs[bi] = br.prob[bi];
    }
    const double g = ez_aggregate({vals.data(), (std::size_t)br.count},
                                  {probs.data(), (std::size_t)br.count},
                                  cfg.pref);
    double total = cfg.pref.beta * g;
    for (int i = 0; i < 2; ++i)
      total += utility(a.consump[i], cfg.pref) * pops[i];
    return total;
  }
};

}  // namespace detail_sp

inline NodeSolution solve_node_sp(
    const StateVector& x, int t, const ValueFunctionApprox& v_next,
    const PlannerConfig& cfg,
    const std::optional<Eigen::VectorXd>& warm_start = std::nullopt,
    Eigen::VectorXd* theta_out = nullptr) {
  const ClimateParams cp = cfg.model.effective_climate();
  detail_sp::NodeProblem prob{
      x,
      static_cast<double>(t),
      v_next,
      cfg,
      cp,
      {cfg.model.paths.pop(t, 0), cfg.model.paths.pop(t, 1)},
      cfg.model.toggles.capital_transfer};

  const Eigen::VectorXd lo = prob.lower(), hi = prob.upper();

  // candidate starts: warm start first, then fixed share patterns
  std::vector<Eigen::VectorXd> starts;
  if (warm_start && warm_start->size() == prob.dim()) starts.push_back(*warm_start);
  auto add_start = [&](double si, double mu, double p) {
    Eigen::VectorXd th(prob.dim());
    if (prob.open) {
      // split investment/consumption shares by output weight
      th << si * 0.55, si * 0.45, 0.40, mu, mu, p, p;
    } else {
      th << 1.0 - si, 1.0 - si, mu, mu, p, p;
    }
    starts.push_back(th);
  };
  add_start(0.25, 0.3, 0.1);
  if (cfg.solver.multi_starts > 1) add_start(0.20, 0.9, 0.3);
  if (cfg.solver.multi_starts > 2) add_start(0.30, 0.0, 0.0);

  NodeSolution best;
  double scale = 1.0;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    // normalize the objective so tolerances are scale-free
    double probe = detail::eval_or_inf(
        [&](const Eigen::VectorXd& th) { return -prob.value(th); }, starts[s]);
    if (!std::isfinite(probe)) continue;
    scale = std::max(1.0, std::abs(probe));
    ObjectiveFn f = [&prob, scale](const Eigen::VectorXd& th) {
      return -prob.value(th) / scale;
    };
    OptimOptions opt;
    opt.gradient_tol = 0.2 * cfg.solver.kkt_tol;
    opt.fd_step = 1e-7;
    OptimResult r = minimize_box(f, starts[s], lo, hi, opt);
    if (!std::isfinite(r.f)) continue;

    // scaled projected-gradient KKT measure at the returned point
    Eigen::VectorXd g = detail::fd_gradient(f, r.x, r.f, lo, hi, opt.fd_step);
    double kkt = 0.0;
    for (int i = 0; i < r.x.size(); ++i) {
      double step = std::min(hi(i), std::max(lo(i), r.x(i) - g(i))) - r.x(i);
      kkt = std::max(kkt, std::abs(step));
    }

    const double val = -r.f * scale;
    if (val > best.value) {
      best.value = val;
      best.kkt_residual = kkt;
      best.converged = kkt <= cfg.solver.kkt_tol;
      RegionalControls a;
      GlobalFlows fl;
      prob.decode(r.x, a, fl);
      best.controls = a;
      if (theta_out) *theta_out = r.x;
    }
    if (best.converged && !warm_start) break;
    if (best.converged && s == 0) break;  // warm start sufficed
  }
  return best;
}

struct StepDiagnostics {
  double fit_rms = 0.0;
  double fit_max = 0.0;
  double max_kkt = 0.0;
  int flagged = 0;
  int nodes = 0;
};

struct PlannerSolution {
  PlannerConfig cfg;
  std::vector<Domain> domains;             // index 0..horizon
  std::vector<ValueFunctionApprox> value;  // index 0..horizon
  std::vector<StepDiagnostics> diag;       // index 0..horizon-1

  NodeSolution policy(const StateVector& x, int t) const {
    if (t < 0 || t >= static_cast<int>(value.size()) - 1)
      throw std::out_of_range("PlannerSolution::policy: t outside horizon");
    return solve_node_sp(x, t, value[t + 1], cfg);
  }
};

inline PlannerSolution backward_induction_sp(const PlannerConfig& cfg) {
  cfg.pref.validate();
  const int horizon = cfg.solver.horizon;
  const int degree = cfg.solver.degree;

  PlannerSolution sol;
  sol.cfg = cfg;
  sol.domains = build_domains(cfg.model, horizon, cfg.solver.domain_pad);
  sol.value.resize(horizon + 1);
  sol.diag.resize(horizon);

  // terminal layer
  {
    NodeSet nodes = cheb_nodes(sol.domains[horizon], degree, degree + 1,
                               cfg.solver.oversample);
    for (int chi = 0; chi < 2; ++chi) {
      std::vector<double> vals;
      vals.reserve(nodes.points.size());
      for (const auto& pt : nodes.points)
        vals.push_back(
            terminal_value_sp(StateVector::from_continuous(pt, chi), horizon, cfg));
      sol.value[horizon].layer[chi] = ChebApprox(sol.domains[horizon], degree);
      fit(sol.value[horizon].layer[chi], nodes, vals);
    }
  }

  // warm-start memory per (node index, chi)
  std::array<std::vector<Eigen::VectorXd>, 2> warm;

  for (int t = horizon - 1; t >= 0; --t) {
    NodeSet nodes =
        cheb_nodes(sol.domains[t], degree, degree + 1, cfg.solver.oversample);
    const std::size_t n = nodes.points.size();
    StepDiagnostics d;
    d.nodes = static_cast<int>(2 * n);

    for (int chi = 0; chi < 2; ++chi) {
      std::vector<double> vals(n);
      if (warm[chi].size() != n) warm[chi].assign(n, Eigen::VectorXd());
      for (std::size_t k = 0; k < n; ++k) {
        StateVector x = StateVector::from_continuous(nodes.points[k], chi);
        std::optional<Eigen::VectorXd> ws;
        if (warm[chi][k].size() > 0) ws = warm[chi][k];
        Eigen::VectorXd theta;
        NodeSolution ns = solve_node_sp(x, t, sol.value[t + 1], cfg, ws, &theta);
        if (!std::isfinite(ns.value)) {
          throw std::runtime_error(
              "backward_induction_sp: no feasible point at node " +
              std::to_string(k) + ", t=" + std::to_string(t));
        }
        vals[k] = ns.value;
        warm[chi][k] = theta;
        d.max_kkt = std::max(d.max_kkt, ns.kkt_residual);
        if (!ns.converged) ++d.flagged;
      }
      sol.value[t].layer[chi] = ChebApprox(sol.domains[t], degree);
      FitReport fr = fit(sol.value[t].layer[chi], nodes, vals);
      d.fit_rms = std::max(d.fit_rms, fr.residual_norm);
      d.fit_max = std::max(d.fit_max, fr.max_residual);
    }

    if (d.flagged >
        cfg.solver.max_flagged_fraction * static_cast<double>(d.nodes)) {
      throw std::runtime_error(
          "backward_induction_sp: flagged-node fraction exceeded at t=" +
          std::to_string(t) + " (" + std::to_string(d.flagged) + "/" +
          std::to_string(d.nodes) + ")");
    }
    sol.diag[t] = d;
  }
  return sol;
}

}  // namespace rcem

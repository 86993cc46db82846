#pragma once
// Feedback Nash equilibrium between the two regions: the six first-order
// conditions of the per-player Bellman problems, the per-node slack
// minimization that solves them, backward induction over the horizon, and
// a self-contained scalar linear-quadratic game used to validate the
// backward-iteration scheme against a Riccati oracle.

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcem/planner.hpp"

namespace rcem {

struct GameConfig {
  Model model;
  Preferences pref;
  SolverSettings solver;

  // FOC residual acceptance bound in marginal-utility-scaled (relative)
  // units; one_sided switches the slack reformulation to the cheaper
  // nonnegative-band variant.
  double eps_bar = 1e-6;
  bool one_sided = false;

  PlannerConfig planner_view() const { return {model, pref, solver}; }
};

// Six scaled residuals. Consumption entries are relative Euler errors
// 1 - beta (dG/dK) / u'(c); adaptation entries are dYhat/dP divided by
// net-of-damage output; mitigation entries are the capital/carbon
// trade-off divided by (dG/dK) times net-of-damage output. Adaptation and
// mitigation residuals are complementarity-projected at their [0,1] box.
struct FocResidual {
  std::array<double, 2> c = {0.0, 0.0};
  std::array<double, 2> adapt = {0.0, 0.0};
  std::array<double, 2> mu = {0.0, 0.0};

  double l1() const {
    return std::abs(c[0]) + std::abs(c[1]) + std::abs(adapt[0]) +
           std::abs(adapt[1]) + std::abs(mu[0]) + std::abs(mu[1]);
  }
  double linf() const {
    double m = 0.0;
    for (double v : {c[0], c[1], adapt[0], adapt[1], mu[0], mu[1]})
      m = std::max(m, std::abs(v));
    return m;
  }
  Eigen::VectorXd vec() const {
    Eigen::VectorXd r(6);
    r << c[0], c[1], adapt[0], adapt[1], mu[0], mu[1];
    return r;
  }
};

namespace detail_fbne {

// Objective gradient of a maximization variable projected onto its box:
// at the lower face only an inward (positive) gradient is a violation, at
// the upper face only an outward-pointing (negative) one.
inline double project_residual(double g, double x, double lo, double hi) {
  const double eps = 1e-11;
  if (x <= lo + eps) return std::max(g, 0.0);
  if (x >= hi - eps) return std::min(g, 0.0);
  return g;
}

struct ContinuationGrad {
  double value = 0.0;  // G_i, the certainty equivalent
  double d_k = 0.0;    // dG_i / dK'_i
  double d_m = 0.0;    // dG_i / dM'_AT
};

// Certainty equivalent of player i's next-period value over the tipping
// branches together with its derivatives with respect to the player's own
// next capital and the next atmospheric carbon stock. Derivatives chain
// the aggregator gradient through the fitted value-function gradient, so
// they are exact for both psi regimes (no sign-flip bookkeeping needed).
inline ContinuationGrad continuation_grad(const Branches& br, int player,
                                          const ValueFunctionApprox& v_next,
                                          const Preferences& pref) {
  std::array<double, 2> vals, probs;
  std::array<double, StateVector::kContinuous> g;
  std::array<double, 2> dvk, dvm;
  for (int b = 0; b < br.count; ++b) {
    vals[b] = v_next.for_chi(br.next[b].chi)
                  .eval_grad(br.next[b].continuous(), g);
    dvk[b] = g[player];  // state dims 0,1 are the two capital stocks
    dvm[b] = g[2];       // dim 2 is atmospheric carbon
    probs[b] = br.prob[b];
  }
  std::array<double, 2> w;
  ContinuationGrad out;
  out.value = ez_aggregate_grad({vals.data(), (std::size_t)br.count},
                                {probs.data(), (std::size_t)br.count}, pref,
                                {w.data(), (std::size_t)br.count});
  for (int b = 0; b < br.count; ++b) {
    out.d_k += w[b] * dvk[b];
    out.d_m += w[b] * dvm[b];
  }
  return out;
}

}  // namespace detail_fbne

// Controls in the game are (c1, c2, mu1, mu2, P1, P2); capital follows the
// closed-economy law K' = (1-delta)K + Yhat - cL with no transfers and no
// interaction costs.
inline FocResidual foc_residuals(
    const StateVector& x, const RegionalControls& a, int t,
    const std::array<const ValueFunctionApprox*, 2>& v_next,
    const GameConfig& cfg, std::array<double, 2>* values_out = nullptr) {
  const Model& m = cfg.model;
  const ClimateParams cp = m.effective_climate();
  const double tt = static_cast<double>(t);
  const std::array<double, 2> pops = {m.paths.pop(tt, 0), m.paths.pop(tt, 1)};

  GlobalFlows f = compute_flows(x, tt, a.mu, a.adapt, m, cp);
  std::array<double, 2> k_next;
  for (int i = 0; i < 2; ++i)
    k_next[i] = step_capital(
        x.k(i), f.region[i].y_hat - a.consump[i] * pops[i], m.econ);
  const TransitionResult tr = step_state(x, tt, k_next, f.e_global, m, cp);
  const Branches br = tipping_branches(tr);

  FocResidual r;
  for (int i = 0; i < 2; ++i) {
    const detail_fbne::ContinuationGrad g =
        detail_fbne::continuation_grad(br, i, *v_next[i], cfg.pref);
    const double up = marginal_utility(a.consump[i], cfg.pref);
    r.c[i] = 1.0 - cfg.pref.beta * g.d_k / up;
    if (values_out)
      (*values_out)[i] =
          utility(a.consump[i], cfg.pref) * pops[i] + cfg.pref.beta * g.value;

    // adaptation stationarity: dYhat/dP / Y_net
    if (!m.toggles.adaptation) {
      r.adapt[i] = 0.0;  // P pinned, not a choice variable
    } else {
      const double dsum =
          damage_slr(x.s, i, m.econ) + damage_temp(x.t_at(i), i, m.econ);
      const double omega = 1.0 / (1.0 + (1.0 - a.adapt[i]) * dsum);
      const double cost_share =
          abatement_coef(tt, i, m.econ) *
              std::pow(a.mu[i], m.econ.theta_2) +
          m.econ.eta_1 * std::pow(a.adapt[i], m.econ.eta_2);
      const double dyp =
          (1.0 - cost_share) * omega * dsum -
          m.econ.eta_1 * m.econ.eta_2 *
              std::pow(a.adapt[i], m.econ.eta_2 - 1.0);
      r.adapt[i] = detail_fbne::project_residual(dyp, a.adapt[i], 0.0, 1.0);
    }

    // mitigation trade-off: (dG/dK dYhat/dmu + dG/dM dEInd/dmu) scaled by
    // dG/dK times net-of-damage output
    const double y_net = f.region[i].y_net;
    const double dy_dmu = -abatement_coef(tt, i, m.econ) * m.econ.theta_2 *
                          std::pow(a.mu[i], m.econ.theta_2 - 1.0) * y_net;
    const double de_dmu = -carbon_intensity(tt, i, m.econ) * f.region[i].gross;
    const double rmu =
        (g.d_k * dy_dmu + g.d_m * de_dmu) / (g.d_k * y_net);
    r.mu[i] = detail_fbne::project_residual(rmu, a.mu[i], 0.0, 1.0);
  }
  return r;
}

struct FbneNodeSolution {
  std::array<double, 2> value = {
      -std::numeric_limits<double>::infinity(),
      -std::numeric_limits<double>::infinity()};
  RegionalControls controls;
  FocResidual residual;
  double l1 = std::numeric_limits<double>::infinity();
  bool accepted = false;
};

namespace detail_fbne {

// Control vector layout: (c1, c2, mu1, mu2, P1, P2).
inline RegionalControls decode(const Eigen::VectorXd& v) {
  RegionalControls a;
  a.consump = {v(0), v(1)};
  a.mu = {v(2), v(3)};
  a.adapt = {v(4), v(5)};
  return a;
}

}  // namespace detail_fbne

// Solves the per-node slack minimization: the L1 norm of the FOC system
// with split nonnegative slacks reduces, after eliminating the slacks at
// their optimum, to minimizing the sum of absolute scaled residuals over
// the control box. Since an equilibrium drives every residual to (near)
// zero, the minimizer coincides with the damped-least-squares minimizer,
// which is what is computed; acceptance applies the per-component slack
// bound |r_k| <= eps_bar (one-sided variant: 0 <= r_k <= eps_bar up to a
// small feasibility tolerance, with the solve targeting the band center).
inline FbneNodeSolution solve_node_fbne(
    const StateVector& x, int t,
    const std::array<const ValueFunctionApprox*, 2>& v_next,
    const GameConfig& cfg,
    const std::optional<Eigen::VectorXd>& warm_start = std::nullopt,
    Eigen::VectorXd* controls_out = nullptr) {
  const Model& m = cfg.model;
  const double tt = static_cast<double>(t);
  const std::array<double, 2> pops = {m.paths.pop(tt, 0), m.paths.pop(tt, 1)};

  // consumption box from the undamaged-output budget; the true budget
  // (positive next capital) is enforced by the residual penalty below
  Eigen::VectorXd lo(6), hi(6);
  const double pmax = m.toggles.adaptation ? 1.0 : 0.0;
  lo << 1e-6, 1e-6, 0.0, 0.0, 0.0, 0.0;
  for (int i = 0; i < 2; ++i) {
    const double gross =
        gross_output(x.k(i), pops[i], tfp(tt, i, m.econ), m.econ);
    hi(i) = ((1.0 - x.j) * gross + (1.0 - m.econ.delta) * x.k(i)) / pops[i];
  }
  hi(2) = 1.0;
  hi(3) = 1.0;
  hi(4) = pmax;
  hi(5) = pmax;

  const double target = cfg.one_sided ? 0.5 * cfg.eps_bar : 0.0;
  ResidualFn resid = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    try {
      const FocResidual r = foc_residuals(x, detail_fbne::decode(v), t,
                                          v_next, cfg);
      return r.vec().array() - target;
    } catch (const std::exception&) {
      // inadmissible (typically next capital or transformed value
      // nonpositive from over-consumption): a penalty decreasing in c
      // steers the solver back into the feasible region
      Eigen::VectorXd p(6);
      p.setConstant(1e3 * (1.0 + v(0) / hi(0) + v(1) / hi(1)));
      return p;
    }
  };

  // candidate starts: warm start first, then consumption-share patterns
  std::vector<Eigen::VectorXd> starts;
  if (warm_start && warm_start->size() == 6) starts.push_back(*warm_start);
  auto add_start = [&](double cons_share, double mu, double p) {
    Eigen::VectorXd v(6);
    for (int i = 0; i < 2; ++i) {
      const double gross =
          gross_output(x.k(i), pops[i], tfp(tt, i, m.econ), m.econ);
      v(i) = cons_share * 0.6 * (1.0 - x.j) * gross / pops[i];
    }
    v(2) = mu;
    v(3) = mu;
    v(4) = std::min(p, pmax);
    v(5) = std::min(p, pmax);
    starts.push_back(v);
  };
  add_start(0.75, 0.2, 0.1);
  if (cfg.solver.multi_starts > 1) add_start(0.6, 0.8, 0.3);
  if (cfg.solver.multi_starts > 2) add_start(0.9, 0.0, 0.0);

  FbneNodeSolution best;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    LsqOptions opt;
    opt.residual_tol = 1e-14;
    opt.step_tol = 1e-14;
    LsqResult lr = levenberg_marquardt(resid, starts[s], lo, hi, opt);
    std::array<double, 2> vals;
    FocResidual r;
    try {
      r = foc_residuals(x, detail_fbne::decode(lr.x), t, v_next, cfg, &vals);
    } catch (const std::exception&) {
      continue;
    }
    const double l1 = r.l1();
    if (l1 < best.l1) {
      best.l1 = l1;
      best.residual = r;
      best.value = vals;
      best.controls = detail_fbne::decode(lr.x);
      bool ok = true;
      for (double v : {r.c[0], r.c[1], r.adapt[0], r.adapt[1], r.mu[0],
                       r.mu[1]}) {
        if (cfg.one_sided)
          ok = ok && v >= -1e-2 * cfg.eps_bar && v <= cfg.eps_bar;
        else
          ok = ok && std::abs(v) <= cfg.eps_bar;
      }
      best.accepted = ok;
      if (controls_out) *controls_out = lr.x;
    }
    if (best.accepted && s == 0 && warm_start) break;
    if (best.accepted) break;
  }
  return best;
}

struct GameStepDiagnostics {
  double fit_rms = 0.0;
  double fit_max = 0.0;
  double max_l1 = 0.0;
  int flagged = 0;  // non-equilibrium nodes (slack bound violated)
  int nodes = 0;
};

struct GameSolution {
  GameConfig cfg;
  std::vector<Domain> domains;
  // value[player][t], t = 0..horizon
  std::array<std::vector<ValueFunctionApprox>, 2> value;
  std::vector<GameStepDiagnostics> diag;

  FbneNodeSolution policy(const StateVector& x, int t) const {
    if (t < 0 || t >= static_cast<int>(value[0].size()) - 1)
      throw std::out_of_range("GameSolution::policy: t outside horizon");
    return solve_node_fbne(
        x, t, {&value[0][t + 1], &value[1][t + 1]}, cfg);
  }
};

// Backward iteration: per-step slack minimization at every node for both
// players against the immutable next-period fits, then a per-player fit.
inline GameSolution backward_induction_fbne(const GameConfig& cfg) {
  cfg.pref.validate();
  const int horizon = cfg.solver.horizon;
  const int degree = cfg.solver.degree;
  const PlannerConfig pv = cfg.planner_view();

  GameSolution sol;
  sol.cfg = cfg;
  sol.domains = build_domains(cfg.model, horizon, cfg.solver.domain_pad);
  for (int i = 0; i < 2; ++i) sol.value[i].resize(horizon + 1);
  sol.diag.resize(horizon);

  // terminal layer: per-player discounted tails
  {
    NodeSet nodes = cheb_nodes(sol.domains[horizon], degree, degree + 1,
                               cfg.solver.oversample);
    for (int chi = 0; chi < 2; ++chi) {
      std::array<std::vector<double>, 2> vals;
      for (const auto& pt : nodes.points) {
        const std::array<double, 2> tail =
            terminal_tail(StateVector::from_continuous(pt, chi), horizon, pv);
        vals[0].push_back(tail[0]);
        vals[1].push_back(tail[1]);
      }
      for (int i = 0; i < 2; ++i) {
        sol.value[i][horizon].layer[chi] =
            ChebApprox(sol.domains[horizon], degree);
        fit(sol.value[i][horizon].layer[chi], nodes, vals[i]);
      }
    }
  }

  std::array<std::vector<Eigen::VectorXd>, 2> warm;  // per (chi, node)

  for (int t = horizon - 1; t >= 0; --t) {
    NodeSet nodes =
        cheb_nodes(sol.domains[t], degree, degree + 1, cfg.solver.oversample);
    const std::size_t n = nodes.points.size();
    GameStepDiagnostics d;
    d.nodes = static_cast<int>(2 * n);
    const std::array<const ValueFunctionApprox*, 2> vnext = {
        &sol.value[0][t + 1], &sol.value[1][t + 1]};

    for (int chi = 0; chi < 2; ++chi) {
      std::array<std::vector<double>, 2> vals;
      vals[0].resize(n);
      vals[1].resize(n);
      if (warm[chi].size() != n) warm[chi].assign(n, Eigen::VectorXd());
      for (std::size_t k = 0; k < n; ++k) {
        StateVector x = StateVector::from_continuous(nodes.points[k], chi);
        std::optional<Eigen::VectorXd> ws;
        if (warm[chi][k].size() > 0) ws = warm[chi][k];
        Eigen::VectorXd controls;
        FbneNodeSolution ns =
            solve_node_fbne(x, t, vnext, cfg, ws, &controls);
        if (!std::isfinite(ns.value[0]) || !std::isfinite(ns.value[1])) {
          throw std::runtime_error(
              "backward_induction_fbne: no admissible point at node " +
              std::to_string(k) + ", t=" + std::to_string(t));
        }
        vals[0][k] = ns.value[0];
        vals[1][k] = ns.value[1];
        warm[chi][k] = controls;
        d.max_l1 = std::max(d.max_l1, ns.l1);
        if (!ns.accepted) ++d.flagged;
      }
      for (int i = 0; i < 2; ++i) {
        sol.value[i][t].layer[chi] = ChebApprox(sol.domains[t], degree);
        FitReport fr = fit(sol.value[i][t].layer[chi], nodes, vals[i]);
        d.fit_rms = std::max(d.fit_rms, fr.residual_norm);
        d.fit_max = std::max(d.fit_max, fr.max_residual);
      }
    }

    if (d.flagged >
        cfg.solver.max_flagged_fraction * static_cast<double>(d.nodes)) {
      throw std::runtime_error(
          "backward_induction_fbne: flagged-node fraction exceeded at t=" +
          std::to_string(t) + " (" + std::to_string(d.flagged) + "/" +
          std::to_string(d.nodes) + ")");
    }
    sol.diag[t] = d;
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Scalar two-player linear-quadratic validation game. Shared state
// x' = a x + b1 u1 + b2 u2; player i minimizes sum_t beta^t (q_i x_t^2 +
// r_i u_{t,i}^2). The same backward iteration as the full game applies:
// quadratic value guesses V_i = p_i x^2, simultaneous per-step FOC solve
// (closed form here), refit, repeat until the value functions settle.

struct LqGame {
  double a = 0.9;
  std::array<double, 2> b = {0.5, 0.4};
  std::array<double, 2> q = {1.0, 0.8};
  std::array<double, 2> r = {1.0, 1.2};
  double beta = 0.95;
  int max_iterations = 100000;
  double tol = 1e-9;  // successive value-function difference
};

struct LqGains {
  std::array<double, 2> k = {0.0, 0.0};  // u_i = -k_i x
  std::array<double, 2> p = {0.0, 0.0};  // V_i = p_i x^2
  int iterations = 0;
  bool converged = false;
};

inline LqGains solve_lq_game(const LqGame& g) {
  LqGains out;
  std::array<double, 2> p = {0.0, 0.0};
  for (out.iterations = 0; out.iterations < g.max_iterations;
       ++out.iterations) {
    // FOC_i: r_i u_i + beta p_i b_i x' = 0 with x' = a x + b1 u1 + b2 u2
    // gives u_i = -(beta p_i b_i / r_i) x'; substituting yields
    // x' = a x / (1 + S) with S = sum_j beta p_j b_j^2 / r_j.
    double s = 0.0;
    for (int i = 0; i < 2; ++i) s += g.beta * p[i] * g.b[i] * g.b[i] / g.r[i];
    std::array<double, 2> k;
    double closed = g.a;
    for (int i = 0; i < 2; ++i) {
      k[i] = g.beta * p[i] * g.b[i] * g.a / (g.r[i] * (1.0 + s));
      closed -= g.b[i] * k[i];
    }
    std::array<double, 2> p_new;
    double diff = 0.0;
    for (int i = 0; i < 2; ++i) {
      p_new[i] = g.q[i] + g.r[i] * k[i] * k[i] +
                 g.beta * p[i] * closed * closed;
      diff = std::max(diff, std::abs(p_new[i] - p[i]));
    }
    p = p_new;
    out.k = k;
    out.p = p;
    if (diff < g.tol) {
      out.converged = true;
      // one refresh so the gains correspond to the converged values
      double s2 = 0.0;
      for (int i = 0; i < 2; ++i)
        s2 += g.beta * p[i] * g.b[i] * g.b[i] / g.r[i];
      for (int i = 0; i < 2; ++i)
        out.k[i] = g.beta * p[i] * g.b[i] * g.a / (g.r[i] * (1.0 + s2));
      return out;
    }
  }
  return out;
}

}  // namespace rcem

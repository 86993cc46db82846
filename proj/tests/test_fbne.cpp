#include "doctest.h"
#include "rcem/fbne.hpp"

#include <functional>
#include <random>

using namespace rcem;

namespace {

GameConfig toy_config(int horizon, int degree) {
  GameConfig cfg;
  cfg.solver.horizon = horizon;
  cfg.solver.degree = degree;
  cfg.solver.terminal_years = 50;  // cheap tail for tests
  return cfg;
}

Domain toy_domain() {
  return Domain({50.0, 30.0, 600.0, 300.0, 1500.0, 0.0, 0.0, -0.5, 0.0, 0.0},
                {300.0, 200.0, 1100.0, 700.0, 2100.0, 3.0, 2.0, 1.0, 1.0,
                 0.15});
}

// Sets the coefficient of the basis term with the given (dim, order) pairs.
void set_coeff(ChebApprox& a, const std::vector<std::pair<int, int>>& term,
               double value) {
  const auto& idx = a.indices();
  for (std::size_t m = 0; m < idx.size(); ++m) {
    if (idx[m].terms.size() != term.size()) continue;
    bool match = true;
    for (std::size_t q = 0; q < term.size(); ++q)
      match = match && idx[m].terms[q].first == term[q].first &&
              idx[m].terms[q].second == term[q].second;
    if (match) {
      a.coefficients()[m] = value;
      return;
    }
  }
  throw std::runtime_error("set_coeff: term not found");
}

// Hand-built quadratic value function: exactly symmetric under a swap of
// the two capital dimensions, increasing and concave in capital, linearly
// decreasing in atmospheric carbon. a_k scales the capital slope, a_m the
// carbon slope; chi = 1 is shifted down by drop.
ValueFunctionApprox quadratic_value(const Domain& dom, double base,
                                    double a_k, double a_m, double drop,
                                    double a_k2 = 0.0) {
  ValueFunctionApprox v;
  for (int chi = 0; chi < 2; ++chi) {
    v.layer[chi] = ChebApprox(dom, 2);
    for (double& c : v.layer[chi].coefficients()) c = 0.0;
    set_coeff(v.layer[chi], {}, base - chi * drop);
    set_coeff(v.layer[chi], {{0, 1}}, a_k);
    set_coeff(v.layer[chi], {{1, 1}}, a_k == 0.0 ? 0.0 : a_k);
    set_coeff(v.layer[chi], {{0, 2}}, -a_k2);
    set_coeff(v.layer[chi], {{1, 2}}, -a_k2);
    set_coeff(v.layer[chi], {{2, 1}}, -a_m);
  }
  return v;
}

// Player objective u(c_i) L_i + beta G_i at arbitrary controls.
std::array<double, 2> node_values(
    const StateVector& x, const RegionalControls& a, int t,
    const std::array<const ValueFunctionApprox*, 2>& v, const GameConfig& cfg) {
  std::array<double, 2> out;
  foc_residuals(x, a, t, v, cfg, &out);
  return out;
}

}  // namespace

TEST_CASE("lq game: zero coupling reduces to scalar lqr") {
  LqGame g;
  g.b = {0.5, 0.0};
  LqGains got = solve_lq_game(g);
  CHECK(got.converged);
  CHECK(got.k[1] == 0.0);

  // scalar Riccati iteration oracle for player 1
  double p = 0.0;
  for (int it = 0; it < 100000; ++it) {
    const double p_new =
        g.q[0] + g.beta * p * g.a * g.a -
        std::pow(g.beta * p * g.a * g.b[0], 2) /
            (g.r[0] + g.beta * p * g.b[0] * g.b[0]);
    if (std::abs(p_new - p) < 1e-14) break;
    p = p_new;
  }
  const double k_oracle =
      g.beta * p * g.a * g.b[0] / (g.r[0] + g.beta * p * g.b[0] * g.b[0]);
  CHECK(got.k[0] == doctest::Approx(k_oracle).epsilon(1e-9));
  CHECK(got.p[0] == doctest::Approx(p).epsilon(1e-9));
}

TEST_CASE("lq game: symmetric coupled gains match a best-response oracle") {
  LqGame g;
  g.b = {0.5, 0.5};
  g.q = {1.0, 1.0};
  g.r = {1.0, 1.0};
  LqGains got = solve_lq_game(g);
  CHECK(got.converged);
  CHECK(got.k[0] == doctest::Approx(got.k[1]).epsilon(1e-12));

  // independent oracle: policy-style best-response iteration on the gains.
  // Given gains, each player's value solves p_i = (q_i + r_i k_i^2) /
  // (1 - beta Acl^2); the best response to the other's gain then updates.
  std::array<double, 2> k = {0.1, 0.1};
  for (int it = 0; it < 200000; ++it) {
    const double acl = g.a - g.b[0] * k[0] - g.b[1] * k[1];
    std::array<double, 2> k_new;
    double diff = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double p =
          (g.q[i] + g.r[i] * k[i] * k[i]) / (1.0 - g.beta * acl * acl);
      const double a_other = g.a - g.b[1 - i] * k[1 - i];
      k_new[i] = g.beta * p * g.b[i] * a_other /
                 (g.r[i] + g.beta * p * g.b[i] * g.b[i]);
      diff = std::max(diff, std::abs(k_new[i] - k[i]));
    }
    k = k_new;
    if (diff < 1e-13) break;
  }
  CHECK(got.k[0] == doctest::Approx(k[0]).epsilon(1e-6));
  CHECK(got.k[1] == doctest::Approx(k[1]).epsilon(1e-6));
}

TEST_CASE("lq game: zero state weight gives zero gains") {
  LqGame g;
  g.q = {0.0, 0.0};
  LqGains got = solve_lq_game(g);
  CHECK(got.converged);
  CHECK(got.k[0] == 0.0);
  CHECK(got.k[1] == 0.0);
  CHECK(got.p[0] == 0.0);
}

TEST_CASE("continuation derivatives match finite differences") {
  GameConfig cfg = toy_config(1, 2);
  Domain dom = toy_domain();
  ValueFunctionApprox v = quadratic_value(dom, 4000.0, 200.0, 60.0, 500.0, 20.0);

  Model& m = cfg.model;
  const ClimateParams cp = m.effective_climate();
  StateVector x = m.initial_state();
  GlobalFlows f = compute_flows(x, 0.0, {0.3, 0.2}, {0.1, 0.1}, m, cp);
  TransitionResult tr = step_state(x, 0.0, {150.0, 80.0}, f.e_global, m, cp);
  Branches br = tipping_branches(tr);
  REQUIRE(br.count == 2);

  for (int player = 0; player < 2; ++player) {
    const detail_fbne::ContinuationGrad g =
        detail_fbne::continuation_grad(br, player, v, cfg.pref);

    // finite differences of the aggregate through the fitted evaluation
    auto agg_at = [&](double dk, double dm) {
      Branches b2 = br;
      for (int bi = 0; bi < b2.count; ++bi) {
        if (player == 0)
          b2.next[bi].k1 += dk;
        else
          b2.next[bi].k2 += dk;
        b2.next[bi].m_at += dm;
      }
      std::array<double, 2> vals;
      for (int bi = 0; bi < b2.count; ++bi)
        vals[bi] = v.for_chi(b2.next[bi].chi).eval(b2.next[bi].continuous());
      return ez_aggregate({vals.data(), 2}, {br.prob.data(), 2}, cfg.pref);
    };
    const double h = 1e-5;
    CHECK(g.value == doctest::Approx(agg_at(0, 0)).epsilon(1e-12));
    CHECK(g.d_k ==
          doctest::Approx((agg_at(h, 0) - agg_at(-h, 0)) / (2 * h))
              .epsilon(1e-6));
    CHECK(g.d_m ==
          doctest::Approx((agg_at(0, 100 * h) - agg_at(0, -100 * h)) /
                          (200 * h))
              .epsilon(1e-6));
  }
}

TEST_CASE("foc residuals: zero damages put adaptation at the boundary") {
  GameConfig cfg = toy_config(1, 2);
  for (auto* arr : {&cfg.model.econ.pi_1, &cfg.model.econ.pi_2,
                    &cfg.model.econ.pi_3, &cfg.model.econ.pi_4})
    (*arr) = {0.0, 0.0};
  Domain dom = toy_domain();
  ValueFunctionApprox v = quadratic_value(dom, 4000.0, 200.0, 60.0, 500.0, 20.0);
  StateVector x = cfg.model.initial_state();
  x.j = 0.0;

  RegionalControls a;
  a.consump = {2.0, 1.5};
  a.mu = {0.3, 0.3};
  a.adapt = {0.0, 0.0};
  FocResidual r = foc_residuals(x, a, 0, {&v, &v}, cfg);
  // complementarity: the pure-cost gradient points outward at P = 0
  CHECK(r.adapt[0] == 0.0);
  CHECK(r.adapt[1] == 0.0);

  // interior adaptation with zero damages is strictly wasteful
  a.adapt = {0.2, 0.2};
  FocResidual ri = foc_residuals(x, a, 0, {&v, &v}, cfg);
  CHECK(ri.adapt[0] < 0.0);
  CHECK(ri.adapt[1] < 0.0);
}

TEST_CASE("adaptation residual depends only on own-region quantities") {
  GameConfig cfg = toy_config(1, 2);
  Domain dom = toy_domain();
  ValueFunctionApprox v = quadratic_value(dom, 4000.0, 200.0, 60.0, 500.0, 20.0);
  StateVector x = cfg.model.initial_state();
  RegionalControls a;
  a.consump = {2.0, 1.5};
  a.mu = {0.3, 0.2};
  a.adapt = {0.15, 0.25};

  FocResidual r0 = foc_residuals(x, a, 0, {&v, &v}, cfg);
  StateVector xp = x;
  xp.k2 *= 1.3;      // perturb the other region's capital ...
  xp.t_at2 += 0.4;   // ... and temperature
  FocResidual r1 = foc_residuals(xp, a, 0, {&v, &v}, cfg);
  CHECK(r1.adapt[0] == r0.adapt[0]);

  StateVector xq = x;
  xq.k1 *= 1.3;
  xq.t_at1 += 0.4;
  FocResidual r2 = foc_residuals(xq, a, 0, {&v, &v}, cfg);
  CHECK(r2.adapt[1] == r0.adapt[1]);
}

TEST_CASE("beta = 0 reduces the focs to static conditions") {
  GameConfig cfg = toy_config(1, 2);
  cfg.pref.beta = 0.0;
  Domain dom = toy_domain();
  ValueFunctionApprox v = quadratic_value(dom, 4000.0, 200.0, 60.0, 500.0, 20.0);
  ValueFunctionApprox v2 = v;  // doubled continuation
  for (int chi = 0; chi < 2; ++chi)
    for (double& c : v2.layer[chi].coefficients()) c *= 2.0;

  StateVector x = cfg.model.initial_state();
  RegionalControls a;
  a.consump = {2.0, 1.5};
  a.mu = {0.3, 0.2};
  a.adapt = {0.15, 0.25};
  FocResidual r = foc_residuals(x, a, 0, {&v, &v}, cfg);
  FocResidual rs = foc_residuals(x, a, 0, {&v2, &v2}, cfg);
  for (int i = 0; i < 2; ++i) {
    // myopic Euler: u'(c) can never meet a zero continuation value
    CHECK(r.c[i] == 1.0);
    // the remaining conditions are static: invariant to scaling the
    // continuation (adaptation is fully static; mitigation depends only
    // on the scale-free carbon/capital gradient ratio)
    CHECK(r.adapt[i] == rs.adapt[i]);
    CHECK(r.mu[i] == doctest::Approx(rs.mu[i]).epsilon(1e-12));
  }
}

TEST_CASE("symmetric instance yields symmetric equilibrium controls") {
  GameConfig cfg = toy_config(1, 2);
  Model& m = cfg.model;
  m.toggles.heat_transport = false;  // symmetric temperature dynamics
  m.econ.a0[1] = m.econ.a0[0];
  m.econ.alpha_tfp[1] = m.econ.alpha_tfp[0];
  m.econ.d_tfp[1] = m.econ.d_tfp[0];
  m.econ.sigma0[1] = m.econ.sigma0[0];
  m.econ.alpha_sigma[1] = m.econ.alpha_sigma[0];
  m.econ.d_sigma[1] = m.econ.d_sigma[0];
  m.econ.b0[1] = m.econ.b0[0];
  m.econ.pi_1[1] = m.econ.pi_1[0];
  m.econ.pi_2[1] = m.econ.pi_2[0];
  m.econ.pi_3[1] = m.econ.pi_3[0];
  m.econ.pi_4[1] = m.econ.pi_4[0];
  m.econ.k0[1] = m.econ.k0[0];
  m.paths.population[1] = m.paths.population[0];

  Domain dom({50.0, 50.0, 600.0, 300.0, 1500.0, 0.0, 0.0, -0.5, 0.0, 0.0},
             {300.0, 300.0, 1100.0, 700.0, 2100.0, 3.0, 3.0, 1.0, 1.0, 0.15});
  ValueFunctionApprox v = quadratic_value(dom, 4000.0, 200.0, 60.0, 500.0, 20.0);

  StateVector x = m.initial_state();
  x.t_at2 = x.t_at1;
  FbneNodeSolution ns = solve_node_fbne(x, 0, {&v, &v}, cfg);
  CHECK(ns.accepted);
  CHECK(ns.controls.consump[0] ==
        doctest::Approx(ns.controls.consump[1]).epsilon(1e-8));
  CHECK(ns.controls.mu[0] == doctest::Approx(ns.controls.mu[1]).epsilon(1e-8));
  CHECK(ns.controls.adapt[0] ==
        doctest::Approx(ns.controls.adapt[1]).epsilon(1e-8));
  CHECK(ns.value[0] == doctest::Approx(ns.value[1]).epsilon(1e-8));
}

TEST_CASE("node solve matches a best-response grid fixed point") {
  GameConfig cfg = toy_config(1, 2);
  Domain dom = toy_domain();
  ValueFunctionApprox v = quadratic_value(dom, 4000.0, 200.0, 60.0, 500.0, 20.0);
  StateVector x = cfg.model.initial_state();
  const Model& m = cfg.model;
  const std::array<double, 2> pops = {m.paths.pop(0, 0), m.paths.pop(0, 1)};

  FbneNodeSolution ns = solve_node_fbne(x, 0, {&v, &v}, cfg);
  CHECK(ns.accepted);

  // best-response iteration, each player on a 20-point grid per control
  const int n = 20;
  RegionalControls a = ns.controls;  // start near; iteration re-derives it
  a.consump = {1.0, 1.0};
  a.mu = {0.5, 0.5};
  a.adapt = {0.5, 0.5};
  double c_step[2];
  for (int it = 0; it < 40; ++it) {
    for (int i = 0; i < 2; ++i) {
      const double gross =
          gross_output(x.k(i), pops[i], tfp(0, i, m.econ), m.econ);
      const double c_hi =
          ((1.0 - x.j) * gross + (1.0 - m.econ.delta) * x.k(i)) / pops[i];
      c_step[i] = 0.9 * c_hi / n;
      double best = -1e300;
      RegionalControls trial = a;
      RegionalControls pick = a;
      for (int ic = 1; ic <= n; ++ic)
        for (int imu = 0; imu < n; ++imu)
          for (int ip = 0; ip < n; ++ip) {
            trial.consump[i] = ic * c_step[i];
            trial.mu[i] = imu / double(n - 1);
            trial.adapt[i] = ip / double(n - 1);
            double val;
            try {
              val = node_values(x, trial, 0, {&v, &v}, cfg)[i];
            } catch (const std::exception&) {
              continue;
            }
            if (val > best) {
              best = val;
              pick = trial;
            }
          }
      a = pick;
    }
  }
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(ns.controls.consump[i] - a.consump[i]) <= c_step[i]);
    CHECK(std::abs(ns.controls.mu[i] - a.mu[i]) <= 1.0 / (n - 1));
    CHECK(std::abs(ns.controls.adapt[i] - a.adapt[i]) <= 1.0 / (n - 1));
  }
}

TEST_CASE("binding mitigation bound is accepted through complementarity") {
  GameConfig cfg = toy_config(1, 2);
  Domain dom = toy_domain();
  // steep carbon penalty makes full mitigation optimal
  ValueFunctionApprox v =
      quadratic_value(dom, 60000.0, 200.0, 20000.0, 500.0, 20.0);
  StateVector x = cfg.model.initial_state();

  FbneNodeSolution ns = solve_node_fbne(x, 0, {&v, &v}, cfg);
  CHECK(ns.accepted);
  CHECK(ns.controls.mu[0] == doctest::Approx(1.0));
  CHECK(ns.controls.mu[1] == doctest::Approx(1.0));
  CHECK(ns.residual.mu[0] == 0.0);  // projected: inward pressure absorbed
  CHECK(ns.residual.mu[1] == 0.0);

  // the raw gradient indeed pushes outward at the bound
  RegionalControls a = ns.controls;
  a.mu = {1.0 - 1e-4, 1.0 - 1e-4};
  FocResidual inward = foc_residuals(x, a, 0, {&v, &v}, cfg);
  CHECK(inward.mu[0] > 0.0);
  CHECK(inward.mu[1] > 0.0);
}

TEST_CASE("backward induction: horizon 1 equals a direct node solve") {
  GameConfig cfg = toy_config(1, 1);
  cfg.solver.oversample = 2.0;  // near-interpolatory fit for an exact compare
  GameSolution sol = backward_induction_fbne(cfg);
  CHECK(sol.value[0].size() == 2);
  CHECK(sol.diag[0].flagged == 0);

  std::vector<double> center(StateVector::kContinuous);
  for (int d = 0; d < StateVector::kContinuous; ++d)
    center[d] = 0.5 * (sol.domains[0].lower[d] + sol.domains[0].upper[d]);
  StateVector x = StateVector::from_continuous(center, 0);
  FbneNodeSolution ns =
      solve_node_fbne(x, 0, {&sol.value[0][1], &sol.value[1][1]}, cfg);
  CHECK(ns.accepted);
  for (int i = 0; i < 2; ++i)
    CHECK(sol.value[i][0].for_chi(0).eval(center) ==
          doctest::Approx(ns.value[i]).epsilon(1e-6));
}

TEST_CASE("accepted nodes: unilateral deviations and the transfer corner") {
  GameConfig cfg = toy_config(2, 1);
  GameSolution sol = backward_induction_fbne(cfg);

  std::mt19937 rng(7);
  NodeSet nodes = cheb_nodes(sol.domains[0], 1, 2, cfg.solver.oversample);
  std::uniform_int_distribution<std::size_t> pick(0, nodes.points.size() - 1);
  int tested = 0;
  for (int trial = 0; trial < 30 && tested < 10; ++trial) {
    StateVector x = StateVector::from_continuous(nodes.points[pick(rng)], 0);
    const std::array<const ValueFunctionApprox*, 2> vn = {&sol.value[0][1],
                                                          &sol.value[1][1]};
    FbneNodeSolution ns = solve_node_fbne(x, 0, vn, cfg);
    if (!ns.accepted) continue;
    ++tested;

    const std::array<double, 2> base = node_values(x, ns.controls, 0, vn, cfg);
    for (int i = 0; i < 2; ++i) {
      // no-transfer corner: shadow price strictly positive at delta = 0
      const double lambda = marginal_utility(ns.controls.consump[i], cfg.pref);
      CHECK(lambda * (1.0 - 0.0) > 0.0);

      for (double sgn : {-1.0, 1.0}) {
        auto deviate = [&](auto setter) {
          RegionalControls d = ns.controls;
          setter(d);
          try {
            const double dev = node_values(x, d, 0, vn, cfg)[i];
            CHECK(dev <= base[i] + 1e-8);
          } catch (const std::exception&) {
            // infeasible deviation cannot improve
          }
        };
        deviate([&](RegionalControls& d) { d.consump[i] += sgn * 1e-3; });
        deviate([&](RegionalControls& d) {
          d.mu[i] = std::clamp(d.mu[i] + sgn * 1e-3, 0.0, 1.0);
        });
        deviate([&](RegionalControls& d) {
          d.adapt[i] = std::clamp(d.adapt[i] + sgn * 1e-3, 0.0, 1.0);
        });
      }
    }
  }
  CHECK(tested >= 5);
}

#pragma once
// Regional production, damages, adaptation, mitigation, emissions
// accounting, capital dynamics, adjustment costs, and exogenous paths.

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "rcem/climate.hpp"

namespace rcem {

// Thrown when a control point yields nonpositive net output or capital;
// solvers catch it and reject the point.
struct InfeasibleControl : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EconomyParams {
  // per-region arrays: index 0 = North, 1 = Tropic-South
  std::array<double, 2> a0 = {7.331, 3.582};            // initial TFP
  std::array<double, 2> alpha_tfp = {0.013, 0.0184};    // initial TFP growth
  std::array<double, 2> d_tfp = {0.0053, 0.0061};       // growth decay
  std::array<double, 2> sigma0 = {0.094, 0.104};        // carbon intensity
  std::array<double, 2> alpha_sigma = {0.0156, 0.0181};
  std::array<double, 2> d_sigma = {0.0063, 0.007};
  std::array<double, 2> b0 = {1.71, 2.19};              // backstop price
  std::array<double, 2> alpha_b = {0.005, 0.005};
  std::array<double, 2> pi_1 = {0.00447, 0.00408};      // SLR damage, linear
  std::array<double, 2> pi_2 = {0.01146, 0.00646};      // SLR damage, quadratic
  std::array<double, 2> pi_3 = {0.00094, 0.00322};      // temp damage, linear
  std::array<double, 2> pi_4 = {0.0002, 0.00074};       // temp damage, quadratic
  std::array<double, 2> k0 = {146.0, 77.0};             // initial capital, T$

  double alpha = 0.3;    // capital share
  double theta_2 = 2.6;  // mitigation cost exponent
  double eta_1 = 0.115;  // adaptation cost level
  double eta_2 = 3.6;    // adaptation cost exponent
  double delta = 0.1;    // depreciation
  double friction_b = 1.0;
  double beta = 0.985;
};

struct EconomyState {
  double k_north = 146.0;
  double k_south = 77.0;

  double k(int i) const { return i == 0 ? k_north : k_south; }
};

struct RegionalControls {
  std::array<double, 2> invest = {0.0, 0.0};   // trillions/yr (planner only)
  std::array<double, 2> consump = {0.0, 0.0};  // per-capita, thousands $/yr
  std::array<double, 2> mu = {0.0, 0.0};       // emission control rate [0,1]
  std::array<double, 2> adapt = {0.0, 0.0};    // adaptation rate [0,1]
};

// One evaluable time series: either a closed-form default or a table
// loaded from CSV (linear interpolation, constant extrapolation).
class TimeSeries {
 public:
  TimeSeries() = default;
  explicit TimeSeries(std::function<double(double)> fn) : fn_(std::move(fn)) {}
  TimeSeries(std::vector<double> years, std::vector<double> values)
      : years_(std::move(years)), values_(std::move(values)) {
    if (years_.size() != values_.size() || years_.empty())
      throw std::invalid_argument("TimeSeries: mismatched table");
  }

  double operator()(double t) const {
    if (fn_) return fn_(t);
    if (t <= years_.front()) return values_.front();
    if (t >= years_.back()) return values_.back();
    std::size_t hi = 1;
    while (years_[hi] < t) ++hi;
    const double w = (t - years_[hi - 1]) / (years_[hi] - years_[hi - 1]);
    return (1.0 - w) * values_[hi - 1] + w * values_[hi];
  }

  bool tabulated() const { return !years_.empty(); }

 private:
  std::function<double(double)> fn_;
  std::vector<double> years_;
  std::vector<double> values_;
};

// Population paths are stand-ins (logistic per region); the initial
// levels are chosen so that initial gross returns to capital are close
// to equal across regions. Overridable from CSV.
struct ExogenousPaths {
  std::array<TimeSeries, 2> population;  // billions

  ExogenousPaths() {
    population[0] = logistic_path(3.0, 3.1, 0.01);
    population[1] = logistic_path(4.4, 7.0, 0.016);
  }

  static TimeSeries logistic_path(double l0, double linf, double g) {
    return TimeSeries([l0, linf, g](double t) {
      return linf / (1.0 + (linf / l0 - 1.0) * std::exp(-g * t));
    });
  }

  double pop(double t, int i) const { return population[i](t); }

  // GtC/yr from biological processes
  static double e_land(double t) { return 0.95 * std::exp(-0.115 * t); }
};

inline double tfp(double t, int i, const EconomyParams& p) {
  return p.a0[i] * std::exp(p.alpha_tfp[i] *
                            (1.0 - std::exp(-p.d_tfp[i] * t)) / p.d_tfp[i]);
}

inline double carbon_intensity(double t, int i, const EconomyParams& p) {
  return p.sigma0[i] *
         std::exp(-p.alpha_sigma[i] * (1.0 - std::exp(-p.d_sigma[i] * t)) /
                  p.d_sigma[i]);
}

// Abatement cost coefficient theta_1(t, i).
inline double abatement_coef(double t, int i, const EconomyParams& p) {
  return p.b0[i] * std::exp(-p.alpha_b[i] * t) * carbon_intensity(t, i, p) /
         p.theta_2;
}

inline double gross_output(double k, double l, double a,
                           const EconomyParams& p) {
  if (k <= 0.0 || l <= 0.0)
    throw std::domain_error("gross_output: nonpositive inputs");
  return a * std::pow(k, p.alpha) * std::pow(l, 1.0 - p.alpha);
}

inline double damage_slr(double s, int i, const EconomyParams& p) {
  return p.pi_1[i] * s + p.pi_2[i] * s * s;
}

inline double damage_temp(double t_at, int i, const EconomyParams& p) {
  return p.pi_3[i] * t_at + p.pi_4[i] * t_at * t_at;
}

struct NetOutput {
  double y_net;  // output net of damages after adaptation
  double y_hat;  // net of damages, mitigation and adaptation expenditure
};

inline NetOutput net_output(double gross, double j, double d_slr, double d_temp,
                            double adapt_p, double mu, double t, int i,
                            const EconomyParams& p) {
  const double omega = 1.0 / (1.0 + (1.0 - adapt_p) * (d_slr + d_temp));
  const double y_net = (1.0 - j) * gross * omega;
  const double cost_share = abatement_coef(t, i, p) * std::pow(mu, p.theta_2) +
                            p.eta_1 * std::pow(adapt_p, p.eta_2);
  const double y_hat = y_net * (1.0 - cost_share);
  if (y_hat <= 0.0) throw InfeasibleControl("net_output: nonpositive y_hat");
  return {y_net, y_hat};
}

// Adaptation rate maximizing y_hat for given damages; golden-section on
// [0,1] (y_hat is strictly concave in the rate near its interior maximum).
inline double optimal_adaptation(double gross, double j, double d_slr,
                                 double d_temp, double mu, double t, int i,
                                 const EconomyParams& p) {
  auto yhat = [&](double a) {
    return net_output(gross, j, d_slr, d_temp, a, mu, t, i, p).y_hat;
  };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0, hi = 1.0;
  double a = hi - inv_phi * (hi - lo), b = lo + inv_phi * (hi - lo);
  double fa = yhat(a), fb = yhat(b);
  for (int it = 0; it < 90; ++it) {
    if (fa > fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - inv_phi * (hi - lo);
      fa = yhat(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + inv_phi * (hi - lo);
      fb = yhat(b);
    }
  }
  return 0.5 * (lo + hi);
}

inline double industrial_emission(double gross, double mu, double t, int i,
                                  const EconomyParams& p) {
  return carbon_intensity(t, i, p) * (1.0 - mu) * gross;
}

struct EmissionToggles {
  bool permafrost = true;
};

inline double global_emission(double e_ind_1, double e_ind_2, double t_north,
                              double t, const ClimateParams& cp,
                              const EmissionToggles& tog = {}) {
  double e = e_ind_1 + e_ind_2 + ExogenousPaths::e_land(t);
  if (tog.permafrost) e += permafrost_emission(t_north, cp);
  return e;
}

inline double adjustment_cost(double y_hat, double i_inv, double c, double l,
                              const EconomyParams& p) {
  if (y_hat <= 0.0) throw std::domain_error("adjustment_cost: y_hat <= 0");
  const double r = (i_inv + c * l) / y_hat - 1.0;
  return 0.5 * p.friction_b * y_hat * r * r;
}

inline double step_capital(double k, double inflow, const EconomyParams& p) {
  const double next = (1.0 - p.delta) * k + inflow;
  if (next <= 0.0) throw InfeasibleControl("step_capital: nonpositive capital");
  return next;
}

inline double market_clearing_residual(const RegionalControls& a,
                                       const std::array<double, 2>& y_hats,
                                       const std::array<double, 2>& pops,
                                       const EconomyParams& p) {
  double lhs = 0.0, rhs = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double absorb = a.invest[i] + a.consump[i] * pops[i];
    lhs += absorb + adjustment_cost(y_hats[i], a.invest[i], a.consump[i],
                                    pops[i], p);
    rhs += y_hats[i];
  }
  return lhs - rhs;
}

}  // namespace rcem

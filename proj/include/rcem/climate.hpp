#pragma once
// Geophysical transition laws: three-layer carbon cycle, two-region
// temperature system with poleward heat transport, sea level rise,
// permafrost thaw, and the tipping-point Markov chain.

#include <array>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace rcem {

using Mat3 = std::array<std::array<double, 3>, 3>;
using Vec3 = std::array<double, 3>;

struct CarbonState {
  double m_at = 0.0;  // atmosphere, GtC
  double m_uo = 0.0;  // upper ocean, GtC
  double m_do = 0.0;  // deep ocean, GtC

  double total() const { return m_at + m_uo + m_do; }
};

struct TemperatureState {
  double t_at_north = 0.0;  // deg C anomaly, region 1
  double t_at_south = 0.0;  // deg C anomaly, region 2
  double t_oc = 0.0;        // deg C anomaly, ocean
};

struct TippingState {
  double j = 0.0;  // damage level, fraction of output in [0, j_bar]
  int chi = 0;     // 0 = not tipped, 1 = tipped
};

struct ClimateParams {
  // carbon transfer rates per year
  double phi_12 = 0.0237;
  double phi_21 = 0.0388;
  double phi_23 = 0.00136;
  double phi_32 = 0.00284;

  // temperature-system coefficients
  double xi_1 = 0.0526;
  double xi_2 = 0.08987;
  double xi_3 = 0.0022;
  double xi_4 = 0.6557;   // heat/moisture transport
  double xi_5 = 0.5565;   // heat/moisture transport
  double xi_6 = 0.0;      // outgoing long-wave sensitivity

  double eta = 3.68;      // forcing per CO2 doubling, W/m^2
  double m_star = 588.0;  // pre-industrial atmospheric stock, GtC

  // sea level rise
  double zeta_slr_1 = 0.00073;
  double zeta_slr_2 = 1.4;
  double zeta_slr_3 = 0.007;

  // permafrost emissions
  double zeta_perm_1 = 1.951;
  double zeta_perm_2 = -0.0858;
  double zeta_perm_3 = 0.2257;

  // tipping process
  double rho_hazard = 0.00063;  // per degC-year above 1C
  double j_bar = 0.15;
  double d_duration = 50.0;

  // Variant carbon matrix that applies phi_32 instead of phi_23 to the
  // upper-ocean diagonal (does not conserve mass when phi_23 != phi_32);
  // off by default.
  bool nonconserving_carbon_matrix = false;

  double tipping_increment() const { return j_bar / d_duration; }

  // Column-stochastic arrangement: the upper ocean loses phi_23 to the
  // deep ocean and the deep ocean loses phi_32 upward, so every column
  // sums to one and total carbon is conserved.
  Mat3 carbon_matrix() const {
    if (nonconserving_carbon_matrix) {
      return {{{1.0 - phi_12, phi_21, 0.0},
               {phi_12, 1.0 - phi_21 - phi_32, phi_32},
               {0.0, phi_23, 1.0 - phi_32}}};
    }
    return {{{1.0 - phi_12, phi_21, 0.0},
             {phi_12, 1.0 - phi_21 - phi_23, phi_32},
             {0.0, phi_23, 1.0 - phi_32}}};
  }

  Mat3 temperature_matrix() const {
    return {{{1.0 - xi_2 - xi_4 - xi_6, xi_4 + xi_5, xi_2},
             {xi_4, 1.0 - xi_2 - xi_4 - xi_5 - xi_6, xi_2},
             {xi_3, xi_3, 1.0 - 2.0 * xi_3}}};
  }
};

// Exogenous radiative forcing, W/m^2. t in years since 2015.
inline double exogenous_forcing(double t) {
  return t <= 85.0 ? 0.5 + 0.00588 * t : 1.0;
}

inline CarbonState step_carbon(const CarbonState& m, double e_global,
                               const ClimateParams& p) {
  const Mat3 a = p.carbon_matrix();
  CarbonState out;
  out.m_at = a[0][0] * m.m_at + a[0][1] * m.m_uo + a[0][2] * m.m_do + e_global;
  out.m_uo = a[1][0] * m.m_at + a[1][1] * m.m_uo + a[1][2] * m.m_do;
  out.m_do = a[2][0] * m.m_at + a[2][1] * m.m_uo + a[2][2] * m.m_do;
  return out;
}

inline double radiative_forcing(double m_at, double t, const ClimateParams& p) {
  if (m_at <= 0.0)
    throw std::domain_error("radiative_forcing: nonpositive atmospheric stock");
  return p.eta * std::log2(m_at / p.m_star) + exogenous_forcing(t);
}

inline TemperatureState step_temperature(const TemperatureState& T, double f,
                                         const ClimateParams& p) {
  const Mat3 a = p.temperature_matrix();
  TemperatureState out;
  out.t_at_north = a[0][0] * T.t_at_north + a[0][1] * T.t_at_south +
                   a[0][2] * T.t_oc + p.xi_1 * f;
  out.t_at_south = a[1][0] * T.t_at_north + a[1][1] * T.t_at_south +
                   a[1][2] * T.t_oc + p.xi_1 * f;
  out.t_oc = a[2][0] * T.t_at_north + a[2][1] * T.t_at_south + a[2][2] * T.t_oc;
  return out;
}

// Steady state of the temperature system under constant forcing:
// solves (I - Phi_T) T = xi_1 (f, f, 0). With xi_6 = 0 the system is
// exactly singular (a non-decaying warming mode), so the minimum-norm
// least-squares solution is returned; it coincides with the exact solve
// whenever the system is nonsingular and its north/south ratio equals
// the amplification ratio of the unit-eigenvalue mode.
inline TemperatureState equilibrium_temperature(double f,
                                                const ClimateParams& p) {
  const Mat3 phi = p.temperature_matrix();
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      m(r, c) = (r == c ? 1.0 : 0.0) - phi[r][c];
  const Eigen::Vector3d b(p.xi_1 * f, p.xi_1 * f, 0.0);
  Eigen::CompleteOrthogonalDecomposition<Eigen::Matrix3d> cod(m);
  const Eigen::Vector3d t = cod.solve(b);
  return {t(0), t(1), t(2)};
}

// SLR is irreversible; the fractional power of the north temperature is
// clamped at zero for transiently negative anomalies.
inline double step_slr(double s, const TemperatureState& T,
                       const ClimateParams& p) {
  const double tn = std::max(0.0, T.t_at_north);
  return s + p.zeta_slr_1 * std::pow(tn, p.zeta_slr_2) + p.zeta_slr_3 * T.t_oc;
}

// Clamped at zero: with the calibrated negative linear coefficient the
// raw expression dips slightly below zero for small anomalies.
inline double permafrost_emission(double t_north, const ClimateParams& p) {
  const double den =
      1.0 + p.zeta_perm_2 * t_north + p.zeta_perm_3 * t_north * t_north;
  if (den <= 0.0)
    throw std::domain_error("permafrost_emission: nonpositive denominator");
  return std::max(0.0, p.zeta_perm_1 * (1.0 - 1.0 / den));
}

inline double tipping_probability(double t_north, const ClimateParams& p) {
  return 1.0 - std::exp(-p.rho_hazard * std::max(0.0, t_north - 1.0));
}

// Damage accrues with the current indicator, so a flip at t raises j
// starting the following step. chi never reverts.
inline TippingState step_tipping(const TippingState& ts, double t_north,
                                 double draw, const ClimateParams& p) {
  TippingState out;
  out.j = std::min(p.j_bar, ts.j + p.tipping_increment()) * ts.chi;
  out.chi = ts.chi == 1 || draw < tipping_probability(t_north, p) ? 1 : 0;
  return out;
}

}  // namespace rcem

#pragma once
// Epstein-Zin recursive preferences: period utility and the certainty
// equivalent over next-period value outcomes. The recursion works on the
// transformed value W = (1 - 1/psi) V, which is positive for psi > 1
// (V > 0) and for psi < 1 (V < 0), so one code path covers both.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

namespace rcem {

struct Preferences {
  double beta = 0.985;
  double psi = 1.5;    // intertemporal elasticity of substitution
  double gamma = 10.0; // risk aversion

  double rho() const { return 1.0 - 1.0 / psi; }
  double theta() const { return (1.0 - gamma) / rho(); }

  void validate() const {
    if (psi <= 0.0 || psi == 1.0)
      throw std::invalid_argument("Preferences: psi must be positive and != 1");
    if (gamma <= 0.0)
      throw std::invalid_argument("Preferences: gamma must be positive");
    if (beta < 0.0 || beta >= 1.0)
      throw std::invalid_argument("Preferences: beta must be in [0, 1)");
  }
};

// Period utility of per-capita consumption and its derivative.
inline double utility(double c, const Preferences& p) {
  if (c <= 0.0) throw std::domain_error("utility: nonpositive consumption");
  return std::pow(c, p.rho()) / p.rho();
}

inline double marginal_utility(double c, const Preferences& p) {
  if (c <= 0.0)
    throw std::domain_error("marginal_utility: nonpositive consumption");
  return std::pow(c, -1.0 / p.psi);
}

// Certainty equivalent of next-period values:
//   (1/(1-1/psi)) [ E( ((1-1/psi) V)^Theta ) ]^(1/Theta).
// The caller applies beta. Throws if any transformed value is nonpositive.
inline double ez_aggregate(std::span<const double> next_values,
                           std::span<const double> probs,
                           const Preferences& pref) {
  if (next_values.size() != probs.size() || next_values.empty())
    throw std::invalid_argument("ez_aggregate: size mismatch");
  double psum = 0.0;
  for (double p : probs) psum += p;
  if (std::abs(psum - 1.0) > 1e-12)
    throw std::invalid_argument("ez_aggregate: probabilities must sum to 1");

  const double rho = pref.rho(), th = pref.theta();
  // reference value keeps the scaled powers bounded by 1 in magnitude
  double w_ref = 0.0;
  for (std::size_t k = 0; k < next_values.size(); ++k) {
    const double w = rho * next_values[k];
    if (w <= 0.0)
      throw std::domain_error(
          "ez_aggregate: nonpositive transformed value at outcome " +
          std::to_string(k));
    if (k == 0 || (th > 0.0 ? w > w_ref : w < w_ref)) w_ref = w;
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < next_values.size(); ++k)
    acc += probs[k] * std::pow(rho * next_values[k] / w_ref, th);
  return w_ref * std::pow(acc, 1.0 / th) / rho;
}

// Certainty equivalent plus its partial derivatives with respect to each
// next-period value: d(agg)/dV_k = p_k (W_k / M)^(Theta-1), with
// M = [E(W^Theta)]^(1/Theta) the transformed certainty equivalent.
inline double ez_aggregate_grad(std::span<const double> next_values,
                                std::span<const double> probs,
                                const Preferences& pref,
                                std::span<double> dvalue) {
  const double agg = ez_aggregate(next_values, probs, pref);
  if (dvalue.size() != next_values.size())
    throw std::invalid_argument("ez_aggregate_grad: gradient size mismatch");
  const double rho = pref.rho(), th = pref.theta();
  const double m = rho * agg;  // transformed certainty equivalent, > 0
  for (std::size_t k = 0; k < next_values.size(); ++k)
    dvalue[k] = probs[k] * std::pow(rho * next_values[k] / m, th - 1.0);
  return agg;
}

}  // namespace rcem

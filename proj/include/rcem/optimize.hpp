#pragma once
// Small dense optimizers used by the node solvers and calibration:
// a box-projected BFGS minimizer with finite-difference gradients and a
// box-clamped Levenberg-Marquardt least-squares solver. Objectives may
// signal inadmissible points by throwing; such points are rejected.

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace rcem {

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;
using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct OptimResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

struct OptimOptions {
  int max_iterations = 200;
  double gradient_tol = 1e-9;   // projected-gradient infinity norm
  double step_tol = 1e-12;      // relative step size
  double fd_step = 1e-7;        // relative finite-difference step
};

namespace detail {

inline double eval_or_inf(const ObjectiveFn& f, const Eigen::VectorXd& x) {
  try {
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const std::exception&) {
    return std::numeric_limits<double>::infinity();
  }
}

inline Eigen::VectorXd clamp_box(Eigen::VectorXd x, const Eigen::VectorXd& lo,
                                 const Eigen::VectorXd& hi) {
  for (int i = 0; i < x.size(); ++i) x(i) = std::min(hi(i), std::max(lo(i), x(i)));
  return x;
}

// One-sided-safe central differences: points pushed outside the box fall
// back to the admissible side.
inline Eigen::VectorXd fd_gradient(const ObjectiveFn& f,
                                   const Eigen::VectorXd& x, double fx,
                                   const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi, double rel_h) {
  const int n = static_cast<int>(x.size());
  Eigen::VectorXd g(n);
  for (int i = 0; i < n; ++i) {
    const double h = rel_h * std::max(1.0, std::abs(x(i)));
    Eigen::VectorXd xp = x, xm = x;
    xp(i) = std::min(hi(i), x(i) + h);
    xm(i) = std::max(lo(i), x(i) - h);
    const double denom = xp(i) - xm(i);
    if (denom <= 0.0) {
      g(i) = 0.0;
      continue;
    }
    double fp = eval_or_inf(f, xp), fm = eval_or_inf(f, xm);
    if (!std::isfinite(fp) && std::isfinite(fm)) {
      g(i) = (fx - fm) / (x(i) - xm(i));
    } else if (std::isfinite(fp) && !std::isfinite(fm)) {
      g(i) = (fp - fx) / (xp(i) - x(i));
    } else if (std::isfinite(fp) && std::isfinite(fm)) {
      g(i) = (fp - fm) / denom;
    } else {
      g(i) = 0.0;
    }
  }
  return g;
}

}  // namespace detail

// Projected BFGS with backtracking line search. Gradients by finite
// differences of the objective; the Hessian approximation is reset
// whenever curvature information degenerates (e.g. at box faces).
inline OptimResult minimize_box(const ObjectiveFn& f, Eigen::VectorXd x0,
                                const Eigen::VectorXd& lo,
                                const Eigen::VectorXd& hi,
                                const OptimOptions& opt = {}) {
  const int n = static_cast<int>(x0.size());
  if (lo.size() != n || hi.size() != n)
    throw std::invalid_argument("minimize_box: bound size mismatch");

  OptimResult res;
  res.x = detail::clamp_box(std::move(x0), lo, hi);
  res.f = detail::eval_or_inf(f, res.x);
  if (!std::isfinite(res.f)) return res;  // infeasible start

  const double bound_eps = 1e-11;
  double lambda = 1e-4;  // Newton damping

  Eigen::VectorXd g =
      detail::fd_gradient(f, res.x, res.f, lo, hi, opt.fd_step);

  for (res.iterations = 0; res.iterations < opt.max_iterations;
       ++res.iterations) {
    // projected-gradient optimality measure
    double pg = 0.0;
    for (int i = 0; i < n; ++i) {
      double step = res.x(i) - g(i);
      step = std::min(hi(i), std::max(lo(i), step)) - res.x(i);
      pg = std::max(pg, std::abs(step));
    }
    if (pg <= opt.gradient_tol) {
      res.converged = true;
      return res;
    }

    // free variables: not pinned at a bound by the gradient sign
    std::vector<int> free;
    for (int i = 0; i < n; ++i) {
      const bool at_lo = res.x(i) <= lo(i) + bound_eps && g(i) > 0.0;
      const bool at_hi = res.x(i) >= hi(i) - bound_eps && g(i) < 0.0;
      if (!at_lo && !at_hi && hi(i) > lo(i)) free.push_back(i);
    }
    if (free.empty()) {
      res.converged = true;  // optimum at a vertex
      return res;
    }
    const int m = static_cast<int>(free.size());

    // finite-difference Hessian on the free subspace; stencils stay inside
    // the box (signed steps, one-sided second differences at faces) and a
    // coordinate whose stencil is inadmissible degrades to a unit diagonal
    // instead of poisoning the whole matrix
    const double hrel = 2e-5;
    Eigen::VectorXd h(m), fp(m);
    std::vector<bool> col_ok(m, true);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(m, m);
    for (int a = 0; a < m; ++a) {
      const int i = free[a];
      const double ha = hrel * std::max(1.0, std::abs(res.x(i)));
      h(a) = (res.x(i) + ha <= hi(i)) ? ha : -ha;  // step away from a face
      Eigen::VectorXd xp = res.x;
      xp(i) += h(a);
      fp(a) = detail::eval_or_inf(f, xp);
      double diag = std::numeric_limits<double>::quiet_NaN();
      if (std::isfinite(fp(a))) {
        if (res.x(i) - ha >= lo(i) && res.x(i) + ha <= hi(i)) {
          Eigen::VectorXd xm = res.x;
          xm(i) -= ha;
          const double fmv = detail::eval_or_inf(f, xm);
          if (std::isfinite(fmv) && h(a) > 0.0)
            diag = (fp(a) - 2.0 * res.f + fmv) / (ha * ha);
        }
        if (!std::isfinite(diag)) {
          Eigen::VectorXd x2 = res.x;
          x2(i) += 2.0 * h(a);
          const double f2 = detail::eval_or_inf(f, x2);
          if (std::isfinite(f2))
            diag = (f2 - 2.0 * fp(a) + res.f) / (h(a) * h(a));
        }
      }
      if (!std::isfinite(diag)) {
        col_ok[a] = false;
        diag = 1.0;
      }
      hess(a, a) = diag;
    }
    for (int a = 0; a < m; ++a)
      for (int b = a + 1; b < m; ++b) {
        if (!col_ok[a] || !col_ok[b]) continue;
        Eigen::VectorXd xab = res.x;
        xab(free[a]) += h(a);
        xab(free[b]) += h(b);
        const double fab = detail::eval_or_inf(f, xab);
        if (std::isfinite(fab))
          hess(a, b) = hess(b, a) =
              (fab - fp(a) - fp(b) + res.f) / (h(a) * h(b));
      }

    Eigen::VectorXd gf(m);
    for (int a = 0; a < m; ++a) gf(a) = g(free[a]);

    // damped Newton step on the free subspace, gradient fallback
    bool moved = false;
    Eigen::VectorXd x_new;
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
    for (int attempt = 0; attempt < 12 && !moved; ++attempt) {
      Eigen::VectorXd df;
      if (eig.info() == Eigen::Success) {
        // modified Newton: negative curvature is flipped, tiny curvature
        // floored by the damping parameter
        const double emax = eig.eigenvalues().cwiseAbs().maxCoeff();
        const double floor = std::max(lambda * std::max(1.0, emax),
                                      1e-12 * std::max(1.0, emax));
        Eigen::VectorXd ev = eig.eigenvalues().cwiseAbs().cwiseMax(floor);
        const Eigen::VectorXd gq = eig.eigenvectors().transpose() * gf;
        df = eig.eigenvectors() * (-gq.array() / ev.array()).matrix();
        if (!df.allFinite() || df.dot(gf) >= 0.0)
          df = -gf / std::max(1.0, gf.lpNorm<Eigen::Infinity>());
      } else {
        df = -gf / std::max(1.0, gf.lpNorm<Eigen::Infinity>());
      }
      Eigen::VectorXd dir = Eigen::VectorXd::Zero(n);
      for (int a2 = 0; a2 < m; ++a2) dir(free[a2]) = df(a2);

      double alpha = 1.0;
      for (int ls = 0; ls < 30; ++ls) {
        x_new = detail::clamp_box(res.x + alpha * dir, lo, hi);
        f_new = detail::eval_or_inf(f, x_new);
        const double decrease = 1e-4 * g.dot(x_new - res.x);
        if (std::isfinite(f_new) && f_new <= res.f + decrease &&
            (x_new - res.x).lpNorm<Eigen::Infinity>() > 0.0) {
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!moved) lambda *= 10.0;  // steeper damping, retry
    }
    if (!moved) {
      res.converged = pg <= 1e2 * opt.gradient_tol;
      return res;
    }
    lambda = std::max(1e-10, lambda * 0.2);

    res.x = x_new;
    res.f = f_new;
    g = detail::fd_gradient(f, res.x, res.f, lo, hi, opt.fd_step);
  }
  return res;
}

struct LsqResult {
  Eigen::VectorXd x;
  Eigen::VectorXd residual;
  double norm2 = std::numeric_limits<double>::infinity();  // 0.5 ||r||^2
  int iterations = 0;
  bool converged = false;
};

struct LsqOptions {
  int max_iterations = 200;
  double residual_tol = 1e-12;  // on the gradient J'r
  double step_tol = 1e-13;
  double fd_step = 1e-7;
  double lambda0 = 1e-3;        // initial damping
};

namespace detail {

inline Eigen::MatrixXd fd_jacobian(const ResidualFn& f,
                                   const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& rx,
                                   const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi, double rel_h) {
  const int n = static_cast<int>(x.size());
  const int m = static_cast<int>(rx.size());
  Eigen::MatrixXd jac(m, n);
  for (int i = 0; i < n; ++i) {
    const double h = rel_h * std::max(1.0, std::abs(x(i)));
    Eigen::VectorXd xp = x, xm = x;
    xp(i) = std::min(hi(i), x(i) + h);
    xm(i) = std::max(lo(i), x(i) - h);
    const double denom = xp(i) - xm(i);
    if (denom <= 0.0) {
      jac.col(i).setZero();
      continue;
    }
    jac.col(i) = (f(xp) - f(xm)) / denom;
  }
  return jac;
}

}  // namespace detail

// Levenberg-Marquardt with box clamping of iterates. The residual
// function must be defined on the whole box.
inline LsqResult levenberg_marquardt(const ResidualFn& f, Eigen::VectorXd x0,
                                     const Eigen::VectorXd& lo,
                                     const Eigen::VectorXd& hi,
                                     const LsqOptions& opt = {}) {
  const int n = static_cast<int>(x0.size());
  if (lo.size() != n || hi.size() != n)
    throw std::invalid_argument("levenberg_marquardt: bound size mismatch");

  LsqResult res;
  res.x = detail::clamp_box(std::move(x0), lo, hi);
  res.residual = f(res.x);
  res.norm2 = 0.5 * res.residual.squaredNorm();

  double lambda = opt.lambda0;
  for (res.iterations = 0; res.iterations < opt.max_iterations;
       ++res.iterations) {
    const Eigen::MatrixXd jac =
        detail::fd_jacobian(f, res.x, res.residual, lo, hi, opt.fd_step);
    const Eigen::VectorXd grad = jac.transpose() * res.residual;
    if (grad.lpNorm<Eigen::Infinity>() < opt.residual_tol) {
      res.converged = true;
      return res;
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;

    bool accepted = false;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::VectorXd step = a.ldlt().solve(-grad);
      const Eigen::VectorXd x_new = detail::clamp_box(res.x + step, lo, hi);
      const Eigen::VectorXd r_new = f(x_new);
      const double n_new = 0.5 * r_new.squaredNorm();
      if (std::isfinite(n_new) && n_new < res.norm2) {
        const double rel_step =
            (x_new - res.x).lpNorm<Eigen::Infinity>() /
            std::max(1.0, res.x.lpNorm<Eigen::Infinity>());
        res.x = x_new;
        res.residual = r_new;
        res.norm2 = n_new;
        lambda = std::max(1e-12, lambda * 0.3);
        accepted = true;
        if (rel_step < opt.step_tol) {
          res.converged = true;
          return res;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      res.converged = grad.lpNorm<Eigen::Infinity>() < 1e3 * opt.residual_tol;
      return res;
    }
  }
  return res;
}

}  // namespace rcem

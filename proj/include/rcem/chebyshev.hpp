#pragma once
// Complete (total-degree-bounded) Chebyshev polynomial approximation over
// hyper-rectangular domains: node generation, least-squares fitting,
// evaluation and analytic gradients.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rcem {

struct Domain {
  std::vector<double> lower;
  std::vector<double> upper;

  Domain() = default;
  Domain(std::vector<double> lo, std::vector<double> hi)
      : lower(std::move(lo)), upper(std::move(hi)) {
    validate();
  }

  void validate() const {
    if (lower.size() != upper.size() || lower.empty())
      throw std::invalid_argument("Domain: mismatched bounds");
    for (std::size_t d = 0; d < lower.size(); ++d)
      if (!(lower[d] < upper[d]))
        throw std::invalid_argument("Domain: degenerate dimension " +
                                    std::to_string(d));
  }

  int dim() const { return static_cast<int>(lower.size()); }

  double to_unit(double x, int d) const {
    return 2.0 * (x - lower[d]) / (upper[d] - lower[d]) - 1.0;
  }
  double from_unit(double z, int d) const {
    return lower[d] + 0.5 * (z + 1.0) * (upper[d] - lower[d]);
  }
  // d z / d x
  double unit_scale(int d) const { return 2.0 / (upper[d] - lower[d]); }

  bool contains(std::span<const double> x, double margin = 0.0) const {
    for (int d = 0; d < dim(); ++d) {
      const double pad = margin * (upper[d] - lower[d]);
      if (x[d] < lower[d] - pad || x[d] > upper[d] + pad) return false;
    }
    return true;
  }
};

// One multi-index of the complete basis, stored sparsely as (dim, order)
// pairs for the nonzero entries.
struct ChebIndex {
  std::vector<std::pair<std::uint8_t, std::uint8_t>> terms;
  int total = 0;
};

inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::uint64_t r = 1;
  for (int j = 1; j <= k; ++j) r = r * (n - k + j) / j;
  return r;
}

// All multi-indices with total degree <= degree over `dim` dimensions.
inline std::vector<ChebIndex> complete_indices(int dim, int degree) {
  std::vector<ChebIndex> out;
  std::vector<int> cur(dim, 0);
  std::function<void(int, int)> rec = [&](int d, int remaining) {
    if (d == dim) {
      ChebIndex ix;
      for (int j = 0; j < dim; ++j)
        if (cur[j] > 0)
          ix.terms.emplace_back(static_cast<std::uint8_t>(j),
                                static_cast<std::uint8_t>(cur[j]));
      for (int j = 0; j < dim; ++j) ix.total += cur[j];
      out.push_back(std::move(ix));
      return;
    }
    for (int k = 0; k <= remaining; ++k) {
      cur[d] = k;
      rec(d + 1, remaining - k);
    }
    cur[d] = 0;
  };
  rec(0, degree);
  std::sort(out.begin(), out.end(), [](const ChebIndex& a, const ChebIndex& b) {
    return a.total < b.total;
  });
  return out;
}

// Chebyshev values T_0..T_n at z by the three-term recurrence.
inline void cheb_values(double z, int n, double* t) {
  t[0] = 1.0;
  if (n >= 1) t[1] = z;
  for (int k = 2; k <= n; ++k) t[k] = 2.0 * z * t[k - 1] - t[k - 2];
}

// Derivatives T_0'..T_n' at z.
inline void cheb_derivs(double z, int n, const double* t, double* dt) {
  dt[0] = 0.0;
  if (n >= 1) dt[1] = 1.0;
  for (int k = 2; k <= n; ++k)
    dt[k] = 2.0 * t[k - 1] + 2.0 * z * dt[k - 1] - dt[k - 2];
}

// Chebyshev-Gauss-Lobatto points on [-1, 1], ordered ascending.
inline std::vector<double> lobatto_points(int n) {
  if (n < 1) throw std::invalid_argument("lobatto_points: n < 1");
  if (n == 1) return {0.0};
  std::vector<double> z(n);
  for (int k = 0; k < n; ++k)
    z[n - 1 - k] = std::cos(M_PI * k / (n - 1));
  z.front() = -1.0;
  z.back() = 1.0;
  return z;
}

class ChebApprox {
 public:
  ChebApprox() = default;
  ChebApprox(Domain domain, int degree)
      : domain_(std::move(domain)),
        degree_(degree),
        indices_(complete_indices(domain_.dim(), degree)),
        coeffs_(indices_.size(), 0.0) {}

  int dim() const { return domain_.dim(); }
  int degree() const { return degree_; }
  const Domain& domain() const { return domain_; }
  const std::vector<double>& coefficients() const { return coeffs_; }
  std::vector<double>& coefficients() { return coeffs_; }
  std::size_t coefficient_count() const { return indices_.size(); }

  double eval(std::span<const double> x) const {
    scratch_tables(x);
    double v = 0.0;
    for (std::size_t m = 0; m < indices_.size(); ++m) {
      double term = coeffs_[m];
      for (auto [d, k] : indices_[m].terms) term *= tval_[d * (degree_ + 1) + k];
      v += term;
    }
    return v;
  }

  // Value plus gradient with respect to the physical coordinates.
  double eval_grad(std::span<const double> x, std::span<double> grad) const {
    scratch_tables(x);
    const int nd = dim();
    for (int d = 0; d < nd; ++d) grad[d] = 0.0;
    double v = 0.0;
    for (std::size_t m = 0; m < indices_.size(); ++m) {
      const auto& terms = indices_[m].terms;
      double prod = coeffs_[m];
      for (auto [d, k] : terms) prod *= tval_[d * (degree_ + 1) + k];
      v += prod;
      for (std::size_t a = 0; a < terms.size(); ++a) {
        double g = coeffs_[m];
        for (std::size_t b = 0; b < terms.size(); ++b) {
          const auto [d, k] = terms[b];
          g *= (a == b) ? tder_[d * (degree_ + 1) + k]
                        : tval_[d * (degree_ + 1) + k];
        }
        grad[terms[a].first] += g * domain_.unit_scale(terms[a].first);
      }
    }
    return v;
  }

  const std::vector<ChebIndex>& indices() const { return indices_; }

 private:
  void scratch_tables(std::span<const double> x) const {
    const int nd = dim(), stride = degree_ + 1;
    tval_.resize(static_cast<std::size_t>(nd) * stride);
    tder_.resize(static_cast<std::size_t>(nd) * stride);
    for (int d = 0; d < nd; ++d) {
      const double z = domain_.to_unit(x[d], d);
      cheb_values(z, degree_, &tval_[d * stride]);
      cheb_derivs(z, degree_, &tval_[d * stride], &tder_[d * stride]);
    }
  }

  Domain domain_;
  int degree_ = 0;
  std::vector<ChebIndex> indices_;
  std::vector<double> coeffs_;
  mutable std::vector<double> tval_, tder_;
};

// Deterministic low-discrepancy sequence (Halton) used to subsample the
// tensor grid of Lobatto points.
inline double halton(std::uint64_t index, int base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * (index % base);
    index /= base;
  }
  return r;
}

constexpr int kHaltonPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19,
                                 23, 29, 31, 37, 41, 43, 47, 53};

struct NodeSet {
  std::vector<std::vector<double>> points;  // physical coordinates
};

// Node set built from per-dimension Lobatto points, subsampled from the
// tensor grid down to `oversample` times the coefficient count.
inline NodeSet cheb_nodes(const Domain& domain, int degree, int nodes_per_dim,
                          double oversample = 2.0) {
  domain.validate();
  if (nodes_per_dim < degree + 1)
    throw std::invalid_argument("cheb_nodes: nodes_per_dim < degree + 1");
  const int nd = domain.dim();
  if (nd > static_cast<int>(std::size(kHaltonPrimes)))
    throw std::invalid_argument("cheb_nodes: dimension too large");

  const auto lob = lobatto_points(nodes_per_dim);
  const std::size_t n_coef = binomial(nd + degree, degree);
  const std::size_t target =
      std::max<std::size_t>(n_coef, static_cast<std::size_t>(
                                        std::ceil(oversample * n_coef)));

  NodeSet out;
  if (degree == 0) {
    std::vector<double> center(nd);
    for (int d = 0; d < nd; ++d) center[d] = domain.from_unit(0.0, d);
    out.points.push_back(std::move(center));
    return out;
  }

  // Seed with the corners-free structured points: for each dimension, the
  // center node perturbed along that dimension, covering each Lobatto
  // level; guarantees degree+1 distinct levels per dimension.
  for (int d = 0; d < nd; ++d) {
    for (int k = 0; k < nodes_per_dim; ++k) {
      std::vector<double> p(nd);
      for (int j = 0; j < nd; ++j)
        p[j] = domain.from_unit(j == d ? lob[k] : 0.0, j);
      out.points.push_back(std::move(p));
    }
  }
  std::uint64_t s = 1;
  while (out.points.size() < target) {
    std::vector<double> p(nd);
    for (int d = 0; d < nd; ++d) {
      int idx = static_cast<int>(halton(s, kHaltonPrimes[d]) * nodes_per_dim);
      idx = std::min(idx, nodes_per_dim - 1);
      p[d] = domain.from_unit(lob[idx], d);
    }
    out.points.push_back(std::move(p));
    ++s;
  }
  return out;
}

struct FitReport {
  double residual_norm = 0.0;  // RMS residual at the nodes
  double max_residual = 0.0;
};

// Least-squares fit of `values` at `nodes`; exact interpolation when the
// counts match and the design is nonsingular.
inline FitReport fit(ChebApprox& approx, const NodeSet& nodes,
                     std::span<const double> values) {
  const std::size_t n = nodes.points.size();
  const std::size_t m = approx.coefficient_count();
  if (values.size() != n)
    throw std::invalid_argument("fit: node/value count mismatch");
  if (n < m) throw std::invalid_argument("fit: fewer nodes than coefficients");

  const int nd = approx.dim(), deg = approx.degree();
  Eigen::MatrixXd design(n, m);
  std::vector<double> t(static_cast<std::size_t>(nd) * (deg + 1));
  for (std::size_t r = 0; r < n; ++r) {
    for (int d = 0; d < nd; ++d) {
      const double z = approx.domain().to_unit(nodes.points[r][d], d);
      cheb_values(z, deg, &t[d * (deg + 1)]);
    }
    const auto& idx = approx.indices();
    for (std::size_t c = 0; c < m; ++c) {
      double v = 1.0;
      for (auto [d, k] : idx[c].terms) v *= t[d * (deg + 1) + k];
      design(r, c) = v;
    }
  }

  Eigen::Map<const Eigen::VectorXd> b(values.data(), n);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < static_cast<Eigen::Index>(m)) {
    // Identify a dimension with too few distinct levels, if any.
    for (int d = 0; d < nd; ++d) {
      std::vector<double> levels;
      for (const auto& p : nodes.points) levels.push_back(p[d]);
      std::sort(levels.begin(), levels.end());
      levels.erase(std::unique(levels.begin(), levels.end(),
                               [](double a, double b) {
                                 return std::abs(a - b) < 1e-13;
                               }),
                   levels.end());
      if (static_cast<int>(levels.size()) < deg + 1)
        throw std::runtime_error("fit: rank-deficient design, dimension " +
                                 std::to_string(d) + " has too few levels");
    }
    throw std::runtime_error("fit: rank-deficient design");
  }
  Eigen::VectorXd coef = qr.solve(b);
  for (std::size_t c = 0; c < m; ++c) approx.coefficients()[c] = coef(c);

  Eigen::VectorXd resid = design * coef - b;
  FitReport rep;
  rep.residual_norm = std::sqrt(resid.squaredNorm() / n);
  rep.max_residual = resid.cwiseAbs().maxCoeff();
  return rep;
}

// Value function approximation with one coefficient layer per tipping
// indicator value.
struct ValueFunctionApprox {
  std::array<ChebApprox, 2> layer;  // indexed by chi

  const ChebApprox& for_chi(int chi) const { return layer[chi]; }
  ChebApprox& for_chi(int chi) { return layer[chi]; }
};

}  // namespace rcem

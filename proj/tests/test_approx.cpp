#include "doctest.h"
#include "rcem/chebyshev.hpp"

#include <random>

using namespace rcem;

namespace {

Domain unit_box(int dim) {
  return Domain(std::vector<double>(dim, -1.0), std::vector<double>(dim, 1.0));
}

std::vector<double> random_point(const Domain& dom, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  std::vector<double> x(dom.dim());
  for (int d = 0; d < dom.dim(); ++d) x[d] = dom.from_unit(u(rng), d);
  return x;
}

}  // namespace

TEST_CASE("chebyshev recurrence agrees with cos(n arccos)") {
  std::vector<double> t(9);
  for (double z = -1.0; z <= 1.0; z += 1e-3) {
    cheb_values(z, 8, t.data());
    for (int n = 0; n <= 8; ++n)
      CHECK(t[n] == doctest::Approx(std::cos(n * std::acos(z))).epsilon(1e-12));
  }
}

TEST_CASE("domain mapping round trip") {
  Domain dom({-3.0, 100.0, 0.001}, {7.5, 2000.0, 0.002});
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i)
    for (int d = 0; d < 3; ++d) {
      double x = dom.lower[d] + u(rng) * (dom.upper[d] - dom.lower[d]);
      CHECK(dom.from_unit(dom.to_unit(x, d), d) ==
            doctest::Approx(x).epsilon(1e-14));
    }
}

TEST_CASE("node generation") {
  // degree 0: single center node
  NodeSet n0 = cheb_nodes(unit_box(4), 0, 1);
  CHECK(n0.points.size() == 1);
  for (double c : n0.points[0]) CHECK(c == doctest::Approx(0.0));

  // 1-D Lobatto points for degree 2 with 3 levels
  auto lob = lobatto_points(3);
  CHECK(lob[0] == doctest::Approx(-1.0));
  CHECK(lob[1] == doctest::Approx(0.0));
  CHECK(lob[2] == doctest::Approx(1.0));

  // 10-D degree 2 yields at least C(12, 2) = 66 nodes
  CHECK(binomial(12, 2) == 66);
  NodeSet n10 = cheb_nodes(unit_box(10), 2, 3);
  CHECK(n10.points.size() >= 66);

  CHECK_THROWS(cheb_nodes(unit_box(2), 3, 2));  // too few levels
  CHECK_THROWS(Domain({0.0}, {0.0}));           // degenerate
}

TEST_CASE("fit: constant data leaves only the constant coefficient") {
  Domain dom = unit_box(3);
  ChebApprox a(dom, 2);
  NodeSet nodes = cheb_nodes(dom, 2, 3);
  std::vector<double> v(nodes.points.size(), 4.25);
  FitReport rep = fit(a, nodes, v);
  CHECK(rep.max_residual < 1e-12);
  CHECK(a.coefficients()[0] == doctest::Approx(4.25));
  for (std::size_t c = 1; c < a.coefficient_count(); ++c)
    CHECK(std::abs(a.coefficients()[c]) < 1e-12);
}

TEST_CASE("fit reproduces total-degree polynomials off-node") {
  Domain dom({-2.0, 0.5, 10.0, -1.0, 3.0, 0.0, -5.0, 1.0, 0.2, -0.3},
             {2.0, 1.5, 20.0, 1.0, 9.0, 4.0, 5.0, 2.0, 0.7, 0.3});
  auto target = [&](std::span<const double> x) {
    // total degree 2 in the mapped coordinates
    double z0 = dom.to_unit(x[0], 0), z3 = dom.to_unit(x[3], 3),
           z5 = dom.to_unit(x[5], 5), z9 = dom.to_unit(x[9], 9);
    return 2.0 + z0 - 0.5 * z3 + 0.25 * z0 * z5 + z9 * z9;
  };
  ChebApprox a(dom, 2);
  NodeSet nodes = cheb_nodes(dom, 2, 3);
  std::vector<double> v;
  for (const auto& p : nodes.points) v.push_back(target(p));
  fit(a, nodes, v);

  std::mt19937 rng(17);
  for (int i = 0; i < 200; ++i) {
    auto x = random_point(dom, rng);
    CHECK(a.eval(x) == doctest::Approx(target(x)).epsilon(1e-10));
  }
}

TEST_CASE("spectral convergence on a smooth 1-D target") {
  Domain dom({-1.0}, {1.0});
  auto target = [](double x) { return std::exp(x) * std::sin(2.0 * x); };
  std::vector<double> errs;
  for (int deg : {2, 4, 6}) {
    ChebApprox a(dom, deg);
    NodeSet nodes = cheb_nodes(dom, deg, deg + 3, 3.0);
    std::vector<double> v;
    for (const auto& p : nodes.points) v.push_back(target(p[0]));
    fit(a, nodes, v);
    double err = 0.0;
    for (double x = -0.95; x <= 0.95; x += 0.01) {
      double p[1] = {x};
      err = std::max(err, std::abs(a.eval(p) - target(x)));
    }
    errs.push_back(err);
  }
  CHECK(errs[1] < errs[0]);
  CHECK(errs[2] < errs[1]);
}

TEST_CASE("gradients") {
  // constant approximant
  Domain dom = unit_box(4);
  ChebApprox c(dom, 2);
  c.coefficients()[0] = 3.0;
  std::vector<double> g(4);
  double x[4] = {0.3, -0.2, 0.1, 0.9};
  c.eval_grad(std::span<const double>(x, 4), g);
  for (double gi : g) CHECK(gi == doctest::Approx(0.0));

  // linear approximant with a known slope in dimension 0
  Domain dl({0.0, 0.0}, {4.0, 2.0});
  ChebApprox lin(dl, 1);
  lin.coefficients()[0] = 1.0;
  for (std::size_t m = 0; m < lin.indices().size(); ++m) {
    const auto& terms = lin.indices()[m].terms;
    if (terms.size() == 1 && terms[0].first == 0 && terms[0].second == 1)
      lin.coefficients()[m] = 2.0;
  }
  std::vector<double> gl(2);
  double xl[2] = {1.0, 0.5};
  lin.eval_grad(std::span<const double>(xl, 2), gl);
  CHECK(gl[0] == doctest::Approx(2.0 * dl.unit_scale(0)).epsilon(1e-13));
  CHECK(gl[1] == doctest::Approx(0.0));
}

TEST_CASE("analytic gradient matches central finite differences") {
  Domain dom({-2.0, 1.0, 0.0, -1.0, 5.0}, {3.0, 4.0, 2.0, 1.0, 15.0});
  ChebApprox a(dom, 3);
  std::mt19937 rng(23);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& c : a.coefficients()) c = n(rng);

  std::vector<double> g(5), x(5);
  for (int trial = 0; trial < 1000; ++trial) {
    x = random_point(dom, rng);
    double v = a.eval_grad(x, g);
    CHECK(v == doctest::Approx(a.eval(x)).epsilon(1e-13));
    for (int d = 0; d < 5; ++d) {
      const double h = 1e-6 * (dom.upper[d] - dom.lower[d]);
      auto xp = x, xm = x;
      xp[d] += h;
      xm[d] -= h;
      double fd = (a.eval(xp) - a.eval(xm)) / (2.0 * h);
      CHECK(g[d] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("fitting the evaluations of an approximant is a projection") {
  Domain dom = unit_box(6);
  ChebApprox a(dom, 2);
  std::mt19937 rng(31);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& c : a.coefficients()) c = n(rng);

  NodeSet nodes = cheb_nodes(dom, 2, 3);
  std::vector<double> v;
  for (const auto& p : nodes.points) v.push_back(a.eval(p));

  ChebApprox b(dom, 2);
  fit(b, nodes, v);
  for (std::size_t c = 0; c < a.coefficient_count(); ++c)
    CHECK(b.coefficients()[c] == doctest::Approx(a.coefficients()[c]).epsilon(1e-10));
}

TEST_CASE("rank-deficient design reports the offending dimension") {
  Domain dom = unit_box(2);
  ChebApprox a(dom, 2);
  // all nodes share one coordinate level in dimension 1
  NodeSet nodes;
  for (double z : {-1.0, -0.5, 0.0, 0.5, 1.0})
    nodes.points.push_back({z, 0.25});
  nodes.points.push_back({0.7, 0.25});
  std::vector<double> v(nodes.points.size(), 1.0);
  try {
    fit(a, nodes, v);
    FAIL("expected rank-deficiency error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("dimension 1") != std::string::npos);
  }
}

#include <cmath>
#include <stdexcept>
#include <random>

#include "doctest.h"
#include "sglab/grid.hpp"

using namespace sglab;

namespace {

Field sample(const Grid1D& g, double (*f)(double)) {
  Field out(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) out[i] = f(g.node(i));
  return out;
}

Field random_decaying(const Grid1D& g, std::mt19937& rng) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double a = uni(rng), b = uni(rng), c = 4.0 * uni(rng), d = 2.0 * uni(rng);
  Field out(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    double x = g.node(i);
    out[i] = a * std::exp(-0.2 * (x - c) * (x - c)) * std::cos(d * x) +
             b * std::exp(-0.3 * (x + c) * (x + c));
  }
  return out;
}

}  // namespace

TEST_CASE("make_grid spacing conventions") {
  Grid1D gp = make_grid(20.0, 16, Boundary::periodic);
  CHECK(gp.spacing == doctest::Approx(2.5).epsilon(1e-15));
  Grid1D gd = make_grid(20.0, 2048, Boundary::dirichlet_decay);
  CHECK(gd.spacing == doctest::Approx(40.0 / 2047.0).epsilon(1e-15));
  CHECK(gd.node(0) == doctest::Approx(-20.0));
  CHECK(gd.node(2047) == doctest::Approx(20.0));
  CHECK_THROWS_AS(make_grid(-1.0, 64, Boundary::periodic), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(10.0, 8, Boundary::periodic), std::invalid_argument);
}

TEST_CASE("derivative is 4th order and exact on low polynomials") {
  Grid1D g = make_grid(5.0, 128, Boundary::dirichlet_decay);
  Field x2(g.n_points), x4(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    double x = g.node(i);
    x2[i] = x * x;
    x4[i] = x * x * x * x;
  }
  Field d2 = derivative(x2, g, 2);
  Field d1 = derivative(x4, g, 1);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    CHECK(d2[i] == doctest::Approx(2.0).epsilon(1e-9));
    double x = g.node(i);
    CHECK(d1[i] == doctest::Approx(4.0 * x * x * x).scale(100.0).epsilon(1e-10));
  }

  Field c(g.n_points, 3.7);
  Field dc = derivative(c, g, 1);
  for (double v : dc) CHECK(std::abs(v) < 1e-12);

  // periodic: sin derivative converges at 4th order
  double prev_err = 0.0;
  for (std::size_t n : {64u, 128u, 256u}) {
    Grid1D gp = make_grid(10.0, n, Boundary::periodic);
    Field f(n), ref(n);
    for (std::size_t i = 0; i < n; ++i) {
      double x = gp.node(i);
      f[i] = std::sin(M_PI * x / 10.0);
      ref[i] = M_PI / 10.0 * std::cos(M_PI * x / 10.0);
    }
    Field d = derivative(f, gp, 1);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(d[i] - ref[i]));
    if (prev_err > 0.0) CHECK(prev_err / err > 12.0);  // ~16 for 4th order
    prev_err = err;
  }

  Field wrong(64, 0.0);
  CHECK_THROWS(derivative(wrong, g, 1));
  CHECK_THROWS(derivative(x2, g, 3));
}

TEST_CASE("integrate: constants, odd symmetry, soliton mass integrand") {
  Grid1D g = make_grid(20.0, 1024, Boundary::dirichlet_decay);
  Field one(g.n_points, 1.0);
  CHECK(integrate(one, g) == doctest::Approx(40.0).epsilon(1e-12));

  Field odd(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    double x = g.node(i);
    odd[i] = x * std::exp(-x * x / 7.0);
  }
  CHECK(std::abs(integrate(odd, g)) < 1e-13);

  // integral of 4 sech^2 = 8 (trapezoid is exponentially accurate here)
  Field s2(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    double s = 1.0 / std::cosh(g.node(i));
    s2[i] = 4.0 * s * s;
  }
  CHECK(integrate(s2, g) == doctest::Approx(8.0).epsilon(1e-10));
}

TEST_CASE("integrate is linear") {
  Grid1D g = make_grid(15.0, 512, Boundary::dirichlet_decay);
  std::mt19937 rng(7u);
  for (int t = 0; t < 10; ++t) {
    Field f = random_decaying(g, rng), h = random_decaying(g, rng);
    double a = 1.7, b = -0.3;
    Field comb(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) comb[i] = a * f[i] + b * h[i];
    CHECK(std::abs(integrate(comb, g) - a * integrate(f, g) - b * integrate(h, g)) < 1e-12);
  }
}

TEST_CASE("sobolev_norm definition, examples, monotonicity") {
  Grid1D g = make_grid(20.0, 2048, Boundary::dirichlet_decay);
  Field zero(g.n_points, 0.0);
  CHECK(sobolev_norm(zero, g, {2, 1}) == 0.0);

  std::mt19937 rng(11u);
  Field f = random_decaying(g, rng);
  double h1 = sobolev_norm(f, g, {1, 0});
  Field df = derivative(f, g, 1);
  double l2f = sobolev_norm(f, g, {0, 0});
  double l2df = sobolev_norm(df, g, {0, 0});
  CHECK(h1 * h1 == doctest::Approx(l2f * l2f + l2df * l2df).epsilon(1e-12));

  Field sech = sample(g, [](double x) { return 1.0 / std::cosh(x); });
  CHECK(sobolev_norm(sech, g, {0, 0}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-8));

  // nondecreasing in k and alpha
  for (int t = 0; t < 5; ++t) {
    Field r = random_decaying(g, rng);
    double n00 = sobolev_norm(r, g, {0, 0});
    double n10 = sobolev_norm(r, g, {1, 0});
    double n20 = sobolev_norm(r, g, {2, 0});
    double n01 = sobolev_norm(r, g, {0, 1});
    double n21 = sobolev_norm(r, g, {2, 1});
    CHECK(n10 >= n00);
    CHECK(n20 >= n10);
    CHECK(n01 >= n00);
    CHECK(n21 >= n20);
    CHECK(n21 >= n01);
  }
  CHECK_THROWS(sobolev_norm(f, g, {4, 0}));
  CHECK_THROWS(sobolev_norm(f, g, {1, 2}));
}

TEST_CASE("symplectic form: antisymmetric, bilinear") {
  Grid1D g = make_grid(15.0, 512, Boundary::dirichlet_decay);
  std::mt19937 rng(23u);
  for (int t = 0; t < 10; ++t) {
    FieldPair a{random_decaying(g, rng), random_decaying(g, rng)};
    FieldPair b{random_decaying(g, rng), random_decaying(g, rng)};
    CHECK(std::abs(symplectic_form(a, a, g)) < 1e-14);
    CHECK(std::abs(symplectic_form(a, b, g) + symplectic_form(b, a, g)) < 1e-12);

    FieldPair c{random_decaying(g, rng), random_decaying(g, rng)};
    FieldPair bc;
    double al = 0.6, be = -1.2;
    bc.theta.resize(g.n_points);
    bc.psi.resize(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) {
      bc.theta[i] = al * b.theta[i] + be * c.theta[i];
      bc.psi[i] = al * b.psi[i] + be * c.psi[i];
    }
    CHECK(symplectic_form(a, bc, g) ==
          doctest::Approx(al * symplectic_form(a, b, g) + be * symplectic_form(a, c, g))
              .epsilon(1e-11)
              .scale(1.0));
  }
  // the mass pairing that the decomposition rests on
  FieldPair a{sample(g, [](double x) { return 1.0 / std::cosh(x); }), Field(g.n_points, 0.0)};
  FieldPair b{Field(g.n_points, 0.0), sample(g, [](double x) { return 1.0 / std::cosh(x); })};
  CHECK(symplectic_form(a, b, g) == doctest::Approx(-2.0).epsilon(1e-10));
}

#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "sglab/grid.hpp"
#include "sglab/kink.hpp"

using namespace sglab;

TEST_CASE("kink profile closed forms") {
  KinkProfile k0 = kink_profile(0.0);
  CHECK(k0.theta == doctest::Approx(M_PI).epsilon(1e-15));
  CHECK(k0.dtheta == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(std::abs(k0.ddtheta) < 1e-15);

  CHECK(kink_theta(40.0) == doctest::Approx(2.0 * M_PI).epsilon(1e-14));
  CHECK(std::abs(kink_theta(-40.0)) < 1e-14);

  // theta_K'' = sin(theta_K) and cos(theta_K) = 1 - 2 sech^2 pointwise
  for (int i = 0; i <= 1000; ++i) {
    double Z = -10.0 + 0.02 * i;
    KinkProfile k = kink_profile(Z);
    CHECK(std::abs(k.ddtheta - std::sin(k.theta)) < 1e-14);
    double s = 1.0 / std::cosh(Z);
    CHECK(std::abs(std::cos(k.theta) - (1.0 - 2.0 * s * s)) < 1e-13);
  }

  // derivative consistency by central differences
  double h = 1e-5;
  for (double Z : {-3.0, -0.7, 0.4, 2.2}) {
    double fd1 = (kink_theta(Z + h) - kink_theta(Z - h)) / (2.0 * h);
    double fd2 = (kink_dtheta(Z + h) - kink_dtheta(Z - h)) / (2.0 * h);
    CHECK(fd1 == doctest::Approx(kink_dtheta(Z)).epsilon(1e-8));
    CHECK(fd2 == doctest::Approx(kink_ddtheta(Z)).epsilon(1e-7));
  }
}

TEST_CASE("lorentz gamma") {
  CHECK(lorentz_gamma(0.0) == 1.0);
  CHECK(lorentz_gamma(0.6) == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(lorentz_gamma(-0.6) == doctest::Approx(1.25).epsilon(1e-15));
  CHECK_THROWS_AS(lorentz_gamma(1.0), std::invalid_argument);
  CHECK_THROWS_AS(lorentz_gamma(-1.3), std::invalid_argument);
}

TEST_CASE("soliton pair") {
  Grid1D g = make_grid(20.0, 1024, Boundary::dirichlet_decay);
  FieldPair rest = soliton_pair({0.0, 0.0}, g);
  for (double v : rest.psi) CHECK(v == 0.0);

  // theta_0 = pi at the center
  FieldPair p = soliton_pair({g.node(512), 0.0}, g);
  CHECK(p.theta[512] == doctest::Approx(M_PI).epsilon(1e-14));

  // stationary-profile equation u d/dxi (theta,psi) = (psi, theta_xx - sin theta)
  SolitonParams q{1.0, 0.4};
  FieldPair s = soliton_pair(q, g);
  auto [t1, t2] = tangent_vectors(q, g);
  Field d2 = derivative(s.theta, g, 2);
  double worst = 0.0;
  for (std::size_t i = 40; i + 40 < g.n_points; ++i) {
    double r1 = q.u * t1.theta[i] - s.psi[i];
    double r2 = q.u * t1.psi[i] - (d2[i] - std::sin(s.theta[i]));
    worst = std::max(worst, std::abs(r1) + std::abs(r2));
  }
  double h4 = std::pow(g.spacing, 4);
  CHECK(std::abs(worst) < 200.0 * h4);
}

TEST_CASE("tangent vectors match parameter differences") {
  Grid1D g = make_grid(20.0, 1024, Boundary::dirichlet_decay);
  SolitonParams p{0.7, 0.25};
  auto [t1, t2] = tangent_vectors(p, g);

  // closed forms at u=0
  auto [s1, s2] = tangent_vectors({0.3, 0.0}, g);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    double y = g.node(i) - 0.3;
    CHECK(s1.theta[i] == doctest::Approx(-kink_dtheta(y)).epsilon(1e-13));
    CHECK(std::abs(s1.psi[i]) < 1e-15);
    CHECK(std::abs(s2.theta[i]) < 1e-15);
    CHECK(s2.psi[i] == doctest::Approx(-kink_dtheta(y)).epsilon(1e-13));
  }

  double h = 1e-4;
  FieldPair xp = soliton_pair({p.xi + h, p.u}, g);
  FieldPair xm = soliton_pair({p.xi - h, p.u}, g);
  FieldPair up = soliton_pair({p.xi, p.u + h}, g);
  FieldPair um = soliton_pair({p.xi, p.u - h}, g);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.n_points; ++i) {
    worst = std::max(worst, std::abs((xp.theta[i] - xm.theta[i]) / (2 * h) - t1.theta[i]));
    worst = std::max(worst, std::abs((xp.psi[i] - xm.psi[i]) / (2 * h) - t1.psi[i]));
    worst = std::max(worst, std::abs((up.theta[i] - um.theta[i]) / (2 * h) - t2.theta[i]));
    worst = std::max(worst, std::abs((up.psi[i] - um.psi[i]) / (2 * h) - t2.psi[i]));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("soliton mass and companion constant") {
  Grid1D g = make_grid(20.0, 2048, Boundary::dirichlet_decay);
  KinkConstants c = kink_constants(g);
  CHECK(c.mass == doctest::Approx(8.0).epsilon(1e-10));
  CHECK(c.mass_second == doctest::Approx(8.0 / 3.0).epsilon(1e-10));

  Grid1D g2 = make_grid(40.0, 4096, Boundary::dirichlet_decay);
  CHECK(std::abs(kink_constants(g2).mass - c.mass) < 1e-10);
}

TEST_CASE("symplectic pairing of the tangent frame") {
  Grid1D g = make_grid(30.0, 2048, Boundary::dirichlet_decay);
  for (double u : {0.0, 0.2, -0.35}) {
    SolitonParams p{0.4, u};
    auto [t1, t2] = tangent_vectors(p, g);
    double om = symplectic_form(t1, t2, g);
    double g3m = std::pow(lorentz_gamma(u), 3) * soliton_mass(g);
    CHECK(om == doctest::Approx(-g3m).epsilon(1e-8));
  }
}

#include <cmath>

#include "doctest.h"
#include "sglab/decomp.hpp"
#include "sglab/manifold.hpp"
#include "sglab/util.hpp"

using namespace sglab;

namespace {

struct Setup {
  Grid2D g2;
  ManifoldExpansion exp;
  Grid1D g;

  Setup() {
    g2.xi_grid = make_grid(16.0, 64, Boundary::periodic);
    g2.x_grid = make_grid(30.0, 512, Boundary::dirichlet_decay);
    PerturbationSpec F = make_perturbation("sech", 1.0, 0);
    CutoffProfile chi = make_cutoff(0.0, g2.xi_grid);
    std::vector<double> us = chebyshev_nodes(0.8 * estimate_u_star(), 9);
    exp = taylor_coefficients(1, F, chi, us, g2, 1);
    g = make_grid(40.0, 2048, Boundary::dirichlet_decay);
  }
};

Setup& setup() {
  static Setup s;
  return s;
}

}  // namespace

TEST_CASE("orthogonality residual: on-manifold zero, tangent displacement, linearity") {
  auto& S = setup();
  double eps = 0.04;
  SolitonParams p{0.6, 0.08};
  FieldPair on = evaluate_virtual_soliton(S.exp, eps, p, S.g);

  auto [N1, N2] = orthogonality_residual(on.theta, on.psi, p, S.exp, eps, S.g);
  CHECK(std::abs(N1) < 1e-10);
  CHECK(std::abs(N2) < 1e-10);

  // displacement along t2 at eps=0: N2 = 0 by antisymmetry, N1 = -gamma^3 m
  SolitonParams q{0.0, 0.1};
  FieldPair cls = soliton_pair(q, S.g);
  auto [t1, t2] = tangent_vectors(q, S.g);
  Field th = cls.theta, ps = cls.psi;
  for (std::size_t i = 0; i < S.g.n_points; ++i) {
    th[i] += t2.theta[i];
    ps[i] += t2.psi[i];
  }
  auto [M1, M2] = orthogonality_residual(th, ps, q, S.exp, 0.0, S.g);
  double g3m = std::pow(lorentz_gamma(q.u), 3) * soliton_mass(S.g);
  CHECK(M1 == doctest::Approx(-g3m).epsilon(1e-8));
  CHECK(std::abs(M2) < 1e-8);

  // linear in the displacement
  Field dth(S.g.n_points), dps(S.g.n_points);
  for (std::size_t i = 0; i < S.g.n_points; ++i) {
    double x = S.g.node(i);
    dth[i] = std::exp(-0.3 * x * x);
    dps[i] = x * std::exp(-0.2 * x * x);
  }
  auto probe = [&](double delta) {
    Field a = on.theta, b = on.psi;
    for (std::size_t i = 0; i < S.g.n_points; ++i) {
      a[i] += delta * dth[i];
      b[i] += delta * dps[i];
    }
    return orthogonality_residual(a, b, p, S.exp, eps, S.g);
  };
  auto [a1, a2] = probe(1.0);
  auto [b1, b2] = probe(0.5);
  CHECK(a1 == doctest::Approx(2.0 * b1).epsilon(1e-10).scale(1.0));
  CHECK(a2 == doctest::Approx(2.0 * b2).epsilon(1e-10).scale(1.0));
}

TEST_CASE("overlap coefficients and the Lemma 4.4 identity") {
  auto& S = setup();

  // eps = 0: k_n = 0 and m_n = gamma^3 m
  for (double u : {0.0, 0.12, -0.2}) {
    auto [m_n, k_n] = overlap_coefficients({0.4, u}, S.exp, 0.0, S.g);
    double g3m = std::pow(lorentz_gamma(u), 3) * soliton_mass(S.g);
    CHECK(std::abs(k_n) < 1e-12);
    CHECK(m_n == doctest::Approx(g3m).epsilon(1e-10));
  }

  // identity and sandwich at several sampled points
  double ucap = S.exp.u_samples.back();
  for (double eps : {0.02, 0.06, 0.1}) {
    for (double xi : {-1.0, 0.0, 1.5}) {
      for (double u : {0.0, 0.45 * ucap, -0.8 * ucap}) {
        auto [m_n, k_n] = overlap_coefficients({xi, u}, S.exp, eps, S.g);
        double g3m = std::pow(lorentz_gamma(u), 3) * soliton_mass(S.g);
        CHECK(std::abs(m_n - g3m - k_n) < 1e-8);
        CHECK(m_n > 0.5 * g3m);
        CHECK(m_n < 2.0 * g3m);
      }
    }
  }
}

TEST_CASE("jacobian: structure, determinant, finite-difference match") {
  auto& S = setup();
  double eps = 0.05;
  SolitonParams p{0.3, 0.06};
  FieldPair on = evaluate_virtual_soliton(S.exp, eps, p, S.g);

  // on-manifold: (gamma^3 m + k_n) [[0,1],[-1,0]] structure
  Jacobian2 J0 = jacobian_N(on.theta, on.psi, p, S.exp, eps, S.g);
  auto [m_n, k_n] = overlap_coefficients(p, S.exp, eps, S.g);
  (void)k_n;
  CHECK(std::abs(J0.a11) < 1e-8 * m_n);
  CHECK(std::abs(J0.a22) < 1e-8 * m_n);
  CHECK(J0.a12 == doctest::Approx(m_n).epsilon(1e-9));
  CHECK(J0.a21 == doctest::Approx(-m_n).epsilon(1e-9));
  CHECK(J0.det() == doctest::Approx(m_n * m_n).epsilon(1e-8));

  // at eps=0, u=0: [[0, m],[-m, 0]] with m ~ 8
  FieldPair cls = soliton_pair({0.0, 0.0}, S.g);
  Jacobian2 Jc = jacobian_N(cls.theta, cls.psi, {0.0, 0.0}, S.exp, 0.0, S.g);
  CHECK(Jc.a12 == doctest::Approx(8.0).epsilon(1e-9));
  CHECK(Jc.a21 == doctest::Approx(-8.0).epsilon(1e-9));

  // off-manifold: finite differences of N match the formula
  Field th = on.theta, ps = on.psi;
  for (std::size_t i = 0; i < S.g.n_points; ++i)
    th[i] += 1e-3 * std::exp(-0.5 * std::pow(S.g.node(i) - 0.3, 2));
  Jacobian2 J = jacobian_N(th, ps, p, S.exp, eps, S.g);
  double h = 1e-5;
  auto [n1p, n2p] = orthogonality_residual(th, ps, {p.xi + h, p.u}, S.exp, eps, S.g);
  auto [n1m, n2m] = orthogonality_residual(th, ps, {p.xi - h, p.u}, S.exp, eps, S.g);
  auto [m1p, m2p] = orthogonality_residual(th, ps, {p.xi, p.u + h}, S.exp, eps, S.g);
  auto [m1m, m2m] = orthogonality_residual(th, ps, {p.xi, p.u - h}, S.exp, eps, S.g);
  CHECK(std::abs(J.a11 - (n1p - n1m) / (2 * h)) < 1e-5);
  CHECK(std::abs(J.a12 - (m1p - m1m) / (2 * h)) < 1e-5);
  CHECK(std::abs(J.a21 - (n2p - n2m) / (2 * h)) < 1e-5);
  CHECK(std::abs(J.a22 - (m2p - m2m) / (2 * h)) < 1e-5);
}

TEST_CASE("projection: recovery, idempotence, uniqueness, strip exit") {
  auto& S = setup();
  double eps = 0.05;
  SolitonParams p{0.25, 0.05};
  FieldPair on = evaluate_virtual_soliton(S.exp, eps, p, S.g);

  // exact guess: 0 iterations, v = w = 0
  DecompositionResult d0 = project(on.theta, on.psi, p, S.exp, eps, S.g);
  CHECK(d0.newton_iters == 0);
  CHECK(sobolev_norm(d0.v, S.g, {0, 0}) < 1e-9);

  // translation: soliton at xi+0.1 with guess at xi (eps = 0)
  FieldPair tr = soliton_pair({0.35, 0.05}, S.g);
  DecompositionResult dt = project(tr.theta, tr.psi, {0.25, 0.05}, S.exp, 0.0, S.g);
  CHECK(dt.params.xi == doctest::Approx(0.35).epsilon(1e-9));
  CHECK(dt.params.u == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(sobolev_norm(dt.v, S.g, {0, 0}) < 1e-8);

  // small transversal perturbation: parameters move a little, v keeps the
  // injected scale, orthogonality at the solver tolerance
  Field th = on.theta, ps = on.psi;
  for (std::size_t i = 0; i < S.g.n_points; ++i) th[i] += 1e-3 / std::cosh(S.g.node(i));
  DecompositionResult dp = project(th, ps, p, S.exp, eps, S.g);
  CHECK(std::abs(dp.params.xi - p.xi) < 1e-2);
  CHECK(std::abs(dp.params.u - p.u) < 1e-2);
  double vn = sobolev_norm(dp.v, S.g, {0, 0});
  CHECK(vn > 2e-4);
  CHECK(vn < 5e-3);
  double scale = std::pow(lorentz_gamma(dp.params.u), 3) * soliton_mass(S.g);
  CHECK(std::abs(dp.residual[0]) < 1e-10 * scale);
  CHECK(std::abs(dp.residual[1]) < 1e-10 * scale);

  // idempotence: project the reconstructed on-manifold part
  FieldPair rec = evaluate_virtual_soliton(S.exp, eps, dp.params, S.g);
  DecompositionResult dr = project(rec.theta, rec.psi, dp.params, S.exp, eps, S.g);
  CHECK(dr.params.xi == doctest::Approx(dp.params.xi).epsilon(1e-10));
  CHECK(dr.params.u == doctest::Approx(dp.params.u).epsilon(1e-10));

  // uniqueness inside the tube: two different guesses converge to the same
  // parameters
  DecompositionResult g1 = project(th, ps, {p.xi - 0.4, 0.02}, S.exp, eps, S.g);
  DecompositionResult g2 = project(th, ps, {p.xi + 0.4, 0.09}, S.exp, eps, S.g);
  CHECK(std::abs(g1.params.xi - g2.params.xi) < 1e-9);
  CHECK(std::abs(g1.params.u - g2.params.u) < 1e-9);

  // far outside the tube the projection is rejected (Newton stalls or the
  // accepted distance exceeds the tube radius)
  Field half(S.g.n_points), halfp(S.g.n_points, 0.0);
  for (std::size_t i = 0; i < S.g.n_points; ++i) half[i] = 0.5 * on.theta[i];
  CHECK_THROWS(project(half, halfp, p, S.exp, eps, S.g));

  // strip exit flag
  FieldPair edge = soliton_pair({S.exp.chi.Xi - 0.2, 0.0}, S.g);
  DecompositionResult de = project(edge.theta, edge.psi, {S.exp.chi.Xi - 0.3, 0.0}, S.exp, 0.0, S.g);
  CHECK(de.strip_exit);
}

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "sglab/lab.hpp"
#include "sglab/manifold.hpp"
#include "sglab/util.hpp"

using namespace sglab;

namespace {

struct SmallSetup {
  Grid2D g2;
  PerturbationSpec F;
  CutoffProfile chi;
  std::vector<double> us;

  explicit SmallSetup(int k) {
    g2.xi_grid = make_grid(16.0, 64, Boundary::periodic);
    g2.x_grid = make_grid(30.0, 512, Boundary::dirichlet_decay);
    F = make_perturbation("sech", 1.0, k);
    chi = make_cutoff(0.0, g2.xi_grid);
    us = chebyshev_nodes(0.8 * estimate_u_star(), 9);
  }
};

}  // namespace

TEST_CASE("cutoff profile") {
  Grid1D xg = make_grid(16.0, 64, Boundary::periodic);
  CutoffProfile c = make_cutoff(1.5, xg);
  CHECK(c.Xi == doctest::Approx(4.5));
  CHECK(c.value(0.0) == 1.0);
  CHECK(c.value(4.5) == 1.0);
  CHECK(c.value(5.5) == 0.0);
  double mid = c.value(5.0);
  CHECK(mid > 0.0);
  CHECK(mid < 1.0);
  double prev = 1.0;
  for (double t = 4.5; t <= 5.5; t += 0.05) {
    double v = c.value(t);
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
  CHECK_THROWS(make_cutoff(14.0, xg));
}

TEST_CASE("perturbation derivatives of the canonical family") {
  Grid1D g = make_grid(20.0, 256, Boundary::dirichlet_decay);
  PerturbationSpec F0 = make_perturbation("sech", 2.0, 0);
  Field d0 = perturbation_deriv(F0, 0, g);
  for (double v : d0) CHECK(v == 0.0);
  Field d1 = perturbation_deriv(F0, 1, g);
  for (std::size_t i = 0; i < g.n_points; ++i)
    CHECK(d1[i] == doctest::Approx(2.0 / std::cosh(g.node(i))).epsilon(1e-14));

  PerturbationSpec F1 = make_perturbation("sech", 1.0, 1);
  Field e1 = perturbation_deriv(F1, 1, g);
  for (double v : e1) CHECK(v == 0.0);
  Field e2 = perturbation_deriv(F1, 2, g);
  for (std::size_t i = 0; i < g.n_points; ++i)
    CHECK(e2[i] == doctest::Approx(2.0 / std::cosh(g.node(i))).epsilon(1e-14));
}

TEST_CASE("first-order coefficients and the kernel-pairing oracle") {
  SmallSetup s(0);
  ManifoldExpansion exp = taylor_coefficients(1, s.F, s.chi, s.us, s.g2, 1);
  CHECK(exp.solve_residuals[0] < 1e-8);

  std::size_t iu0 = 4;  // CGL center is exactly 0
  REQUIRE(exp.u_samples[iu0] == 0.0);
  const auto& lam = exp.coeff[0][iu0].lambda;
  double m = soliton_mass(s.g2.x_grid);
  CHECK(lam[32] == doctest::Approx(-0.5).epsilon(1e-6));

  double worst = 0.0;
  for (std::size_t mm = 0; mm < 64; ++mm) {
    double xi = s.g2.xi_grid.node(mm);
    Field prod(s.g2.x_grid.n_points);
    for (std::size_t i = 0; i < s.g2.x_grid.n_points; ++i) {
      double y = s.g2.x_grid.node(i);
      prod[i] = s.F.f(y + xi) * kink_dtheta(y);
    }
    double oracle = -s.chi.samples[mm] * integrate(prod, s.g2.x_grid) / m;
    worst = std::max(worst, std::abs(lam[mm] - oracle));
  }
  CHECK(worst < 1e-5);

  // parity: even profile and xi_s = 0 make lambda1 even in xi
  for (std::size_t mm = 1; mm < 32; ++mm)
    CHECK(lam[32 + mm] == doctest::Approx(lam[32 - mm]).epsilon(1e-9).scale(0.1));

  // cutoff kills the source outside the transition
  CHECK(std::abs(lam[0]) < 1e-7);  // xi = -16, far outside Xi + 1 = 4

  // orthogonality of the coefficients, per xi node
  const auto& c1 = exp.coeff[0][2];
  double u = exp.u_samples[2], gam = lorentz_gamma(u);
  const std::size_t ny = s.g2.x_grid.n_points;
  Field K1(ny), K2(ny);
  for (std::size_t i = 0; i < ny; ++i) {
    double y = s.g2.x_grid.node(i);
    K1[i] = kink_dtheta(gam * y);
    K2[i] = -u * gam * kink_ddtheta(gam * y);
  }
  for (std::size_t mm = 0; mm < 64; mm += 7) {
    Field rt(c1.theta.v.begin() + mm * ny, c1.theta.v.begin() + (mm + 1) * ny);
    Field rp(c1.psi.v.begin() + mm * ny, c1.psi.v.begin() + (mm + 1) * ny);
    CHECK(std::abs(inner_product(rt, K1, s.g2.x_grid) + inner_product(rp, K2, s.g2.x_grid)) <
          1e-8);
  }
}

TEST_CASE("orders at or below k vanish") {
  SmallSetup s(1);
  ManifoldExpansion exp = taylor_coefficients(2, s.F, s.chi, s.us, s.g2, 1);
  double z = 0.0;
  for (const auto& c : exp.coeff[0]) {
    for (double v : c.theta.v) z = std::max(z, std::abs(v));
    for (double v : c.lambda) z = std::max(z, std::abs(v));
  }
  CHECK(z == 0.0);
  CHECK(exp.coeff[1][4].lambda[32] == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("coefficient agreement between construction depths") {
  SmallSetup s(0);
  ManifoldExpansion e1 = taylor_coefficients(1, s.F, s.chi, s.us, s.g2, 1);
  ManifoldExpansion e2 = taylor_coefficients(2, s.F, s.chi, s.us, s.g2, 1);
  double worst = 0.0;
  for (std::size_t iu = 0; iu < s.us.size(); ++iu) {
    for (std::size_t q = 0; q < e1.coeff[0][iu].theta.v.size(); ++q) {
      worst = std::max(worst, std::abs(e1.coeff[0][iu].theta.v[q] - e2.coeff[0][iu].theta.v[q]));
      worst = std::max(worst, std::abs(e1.coeff[0][iu].psi.v[q] - e2.coeff[0][iu].psi.v[q]));
    }
    for (std::size_t mm = 0; mm < 64; ++mm)
      worst = std::max(worst, std::abs(e1.coeff[0][iu].lambda[mm] - e2.coeff[0][iu].lambda[mm]));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("evaluation: collapse at eps=0, and Taylor-order gap") {
  SmallSetup s(0);
  ManifoldExpansion exp = taylor_coefficients(2, s.F, s.chi, s.us, s.g2, 1);
  Grid1D g = make_grid(40.0, 1024, Boundary::dirichlet_decay);

  SolitonParams p{0.4, 0.07};
  FieldPair e0 = evaluate_virtual_soliton(exp, 0.0, p, g);
  FieldPair cls = soliton_pair(p, g);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    CHECK(e0.theta[i] == cls.theta[i]);
    CHECK(e0.psi[i] == cls.psi[i]);
  }

  // difference between depth-1 and depth-2 evaluations is O(eps^2)
  std::vector<std::pair<double, double>> pts;
  for (double eps : {0.1, 0.07, 0.05, 0.035, 0.025}) {
    FieldPair a = evaluate_virtual_soliton(exp, eps, p, g, 1);
    FieldPair b = evaluate_virtual_soliton(exp, eps, p, g, 2);
    Field d(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) d[i] = a.theta[i] - b.theta[i];
    pts.emplace_back(eps, sobolev_norm(d, g, {0, 0}));
  }
  SlopeFit f = fit_slope(pts);
  CHECK(std::abs(f.slope - 2.0) < 0.1);

  // extrapolation outside the sampled u range is rejected
  CHECK_THROWS(evaluate_virtual_soliton(exp, 0.05, {0.0, 0.9}, g));

  // lambda_n at eps=0 is 0; slope in eps is k+1
  CHECK(lambda_n(exp, 0.0, 0.3, 0.01) == 0.0);
  std::vector<std::pair<double, double>> lpts;
  for (double eps : {0.1, 0.07, 0.05, 0.035, 0.025})
    lpts.emplace_back(eps, std::abs(lambda_n(exp, eps, 0.0, 0.0)));
  CHECK(std::abs(fit_slope(lpts).slope - 1.0) < 0.1);
}

TEST_CASE("zero perturbation collapses the whole family") {
  SmallSetup s(0);
  PerturbationSpec Z = make_perturbation("zero", 0.0, 0);
  ManifoldExpansion exp = taylor_coefficients(1, Z, s.chi, s.us, s.g2, 1);
  double worst = 0.0;
  for (const auto& c : exp.coeff[0]) {
    for (double v : c.theta.v) worst = std::max(worst, std::abs(v));
    for (double v : c.lambda) worst = std::max(worst, std::abs(v));
  }
  CHECK(worst < 1e-12);
  Grid1D g = make_grid(40.0, 1024, Boundary::dirichlet_decay);
  SolitonParams p{0.2, 0.05};
  FieldPair e = evaluate_virtual_soliton(exp, 0.3, p, g);
  FieldPair cls = soliton_pair(p, g);
  for (std::size_t i = 0; i < g.n_points; i += 97) {
    CHECK(e.theta[i] == doctest::Approx(cls.theta[i]).epsilon(1e-12));
    CHECK(std::abs(lambda_n(exp, 0.3, g.node(i) * 0.2, 0.0)) < 1e-13);
  }
}

TEST_CASE("newton refinement") {
  SmallSetup s(0);
  ManifoldExpansion exp = taylor_coefficients(2, s.F, s.chi, s.us, s.g2, 1);
  std::size_t iu0 = 4;
  FrakMSolver solver(exp.u_samples[iu0], s.g2, 1);

  // eps = 0: the classical soliton is an exact root
  FamilyState st0 = newton_refine(exp, 0.0, iu0, solver);
  CHECK(st0.newton_iters == 0);
  CHECK(st0.residual == 0.0);

  // the refinement does not increase the iteration residual
  double eps = 0.06;
  FamilyState taylor = assemble_family_state(exp, eps, iu0);
  double r_taylor = iteration_residual(exp, eps, taylor);
  FamilyState refined = newton_refine(exp, eps, iu0, solver);
  CHECK(refined.residual <= r_taylor);
  CHECK(refined.residual < 1e-10);

  // refined minus Taylor state is O(eps^{n+1})
  std::vector<std::pair<double, double>> pts;
  for (double e : {0.1, 0.07, 0.05, 0.035, 0.025}) {
    FamilyState t = assemble_family_state(exp, e, iu0);
    FamilyState r = newton_refine(exp, e, iu0, solver);
    double d = 0.0;
    for (std::size_t q = 0; q < t.theta_hat.v.size(); ++q)
      d = std::max(d, std::abs(t.theta_hat.v[q] - r.theta_hat.v[q]));
    pts.emplace_back(e, d);
  }
  SlopeFit f = fit_slope(pts);
  CHECK(std::abs(f.slope - 3.0) < 0.15);
}

TEST_CASE("residual rates and the defect identity") {
  SmallSetup s(0);
  ManifoldExpansion exp = taylor_coefficients(2, s.F, s.chi, s.us, s.g2, 1);
  std::vector<double> eps_list = {0.1, 0.07, 0.05, 0.035, 0.025};

  for (int depth : {1, 2}) {
    auto rows = residual_rate_study(exp, depth, eps_list, 1);
    std::vector<std::pair<double, double>> pr, pd;
    for (auto& r : rows) {
      pr.emplace_back(r.eps, r.r_l2);
      pd.emplace_back(r.eps, r.defect_l2);
      // the defect equals ||R_n|| up to the solver tolerance (both sides
      // computed from the same discrete operators)
      CHECK(std::abs(r.defect_l2 - r.r_l2) < 0.05 * std::max(r.r_l2, 1e-12));
    }
    double target = depth + 1.0;
    CHECK(std::abs(fit_slope(pr).slope - target) < 0.15);
    CHECK(std::abs(fit_slope(pd).slope - target) < 0.15);
  }
}

TEST_CASE("residual report at eps 0 vanishes") {
  SmallSetup s(0);
  ManifoldExpansion exp = taylor_coefficients(1, s.F, s.chi, s.us, s.g2, 1);
  VirtualFamily fam = build_family(exp, 0.0, {2, 3, 4, 5, 6}, false, 1);
  ResidualReport rr = residual_Rn(exp, fam, 32, 2);
  CHECK(rr.r_l2 == 0.0);
}

TEST_CASE("serialization round trip") {
  SmallSetup s(0);
  ManifoldExpansion exp = taylor_coefficients(1, s.F, s.chi, s.us, s.g2, 1);
  std::string dir = "manifold_test_io";
  std::filesystem::create_directories(dir);
  save_manifold(exp, dir);
  ManifoldExpansion back = load_manifold(dir);
  CHECK(back.n == exp.n);
  CHECK(back.k == exp.k);
  CHECK(back.grid == exp.grid);
  REQUIRE(back.u_samples.size() == exp.u_samples.size());
  double worst = 0.0;
  for (std::size_t iu = 0; iu < exp.u_samples.size(); ++iu)
    for (std::size_t q = 0; q < exp.coeff[0][iu].theta.v.size(); ++q)
      worst = std::max(worst, std::abs(exp.coeff[0][iu].theta.v[q] - back.coeff[0][iu].theta.v[q]));
  CHECK(worst == 0.0);  // bit-exact container
  std::filesystem::remove_all(dir);
}

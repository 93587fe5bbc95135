#include <cmath>

#include "doctest.h"
#include "sglab/manifold.hpp"
#include "sglab/modulation.hpp"
#include "sglab/util.hpp"

using namespace sglab;

namespace {

const ManifoldExpansion& small_exp() {
  static ManifoldExpansion exp = [] {
    Grid2D g2;
    g2.xi_grid = make_grid(16.0, 64, Boundary::periodic);
    g2.x_grid = make_grid(30.0, 512, Boundary::dirichlet_decay);
    PerturbationSpec F = make_perturbation("sech", 1.0, 0);
    CutoffProfile chi = make_cutoff(0.0, g2.xi_grid);
    std::vector<double> us = chebyshev_nodes(0.8 * estimate_u_star(), 9);
    return taylor_coefficients(1, F, chi, us, g2, 1);
  }();
  return exp;
}

const ManifoldExpansion& zero_exp() {
  static ManifoldExpansion exp = [] {
    Grid2D g2;
    g2.xi_grid = make_grid(16.0, 64, Boundary::periodic);
    g2.x_grid = make_grid(30.0, 512, Boundary::dirichlet_decay);
    PerturbationSpec F = make_perturbation("zero", 0.0, 0);
    CutoffProfile chi = make_cutoff(0.0, g2.xi_grid);
    std::vector<double> us = chebyshev_nodes(0.8 * estimate_u_star(), 9);
    return taylor_coefficients(1, F, chi, us, g2, 1);
  }();
  return exp;
}

}  // namespace

TEST_CASE("exact ODE: free motion and RK4 order") {
  const auto& ze = zero_exp();
  // lambda == 0: uniform linear motion, RK4 exact
  ParamSeries s = integrate_exact_ode(0.2, 0.05, ze, 0.1, 5.0, 0.01);
  for (std::size_t i = 0; i < s.t.size(); i += 50) {
    CHECK(s.xi[i] == doctest::Approx(0.2 + 0.05 * s.t[i]).epsilon(1e-13));
    CHECK(s.u[i] == doctest::Approx(0.05).epsilon(1e-14));
  }

  // Richardson against a fine reference on a manufactured force profile,
  // with the trajectory confined to a single interpolation patch so the
  // integrator order is what is measured
  ManifoldExpansion manu;
  manu.n = 1;
  manu.k = 0;
  manu.grid.xi_grid = make_grid(16.0, 64, Boundary::periodic);
  manu.grid.x_grid = make_grid(30.0, 16, Boundary::dirichlet_decay);
  manu.u_samples = chebyshev_nodes(0.288, 9);
  manu.F = make_perturbation("sech", 1.0, 0);
  manu.chi = make_cutoff(0.0, manu.grid.xi_grid);
  manu.coeff.resize(1);
  manu.coeff[0].resize(manu.u_samples.size());
  for (std::size_t iu = 0; iu < manu.u_samples.size(); ++iu) {
    auto& c = manu.coeff[0][iu];
    c.theta = Array2D(64, 16);
    c.psi = Array2D(64, 16);
    c.lambda.resize(64);
    for (std::size_t mm = 0; mm < 64; ++mm)
      c.lambda[mm] = 0.15 * std::cos(manu.grid.xi_grid.node(mm) / 3.0) *
                     (1.0 + manu.u_samples[iu]);
  }
  auto endpoint = [&](double dt) {
    ParamSeries p = integrate_exact_ode(0.1, 0.05, manu, 1.0, 0.25, dt);
    return p.u.back();
  };
  double ref = endpoint(0.25 / 256.0);
  double e1 = std::abs(endpoint(0.05) - ref);
  double e2 = std::abs(endpoint(0.025) - ref);
  CHECK(e1 / e2 > 11.0);
  CHECK(e1 / e2 < 22.0);
}

TEST_CASE("rescaling is an exact bijection") {
  ParamSeries s;
  for (int i = 0; i <= 10; ++i) {
    s.t.push_back(0.3 * i);
    s.xi.push_back(0.1 * i * i);
    s.u.push_back(0.02 * i);
  }
  double eps = 0.05;
  ParamSeries r = rescale(s, eps, 0);
  ParamSeries b = unrescale(r, eps, 0);
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    CHECK(b.t[i] == doctest::Approx(s.t[i]).epsilon(1e-14));
    CHECK(b.xi[i] == s.xi[i]);
    CHECK(b.u[i] == doctest::Approx(s.u[i]).epsilon(1e-14));
  }
  // u_hat(0) = u0 / eps^beta is eps-free for u0 = eps^beta * u_hat0
  double beta = 0.5;
  for (double e : {0.1, 0.05}) {
    ParamSeries q;
    q.t = {0.0};
    q.xi = {0.0};
    q.u = {std::pow(e, beta) * 0.3};
    CHECK(rescale(q, e, 0).u[0] == doctest::Approx(0.3).epsilon(1e-13));
  }
}

TEST_CASE("rescaled acceleration converges to the first-order profile") {
  const auto& ex = small_exp();
  // eps^{-2 beta} lambda(xi, eps^beta u_hat) approaches lambda^{(1)}(xi, 0)
  double xi = 0.7, u_hat = 0.2;
  double prev_dev = 1e9;
  double limit = lambda_n(ex, 1.0, xi, 0.0);  // = lambda^{(1)}(xi, 0) for n=1,k=0
  for (double eps : {0.1, 0.05}) {
    double b = std::sqrt(eps);
    double val = lambda_n(ex, eps, xi, b * u_hat) / (eps);
    double dev = std::abs(val - limit);
    CHECK(dev < prev_dev + 1e-14);
    prev_dev = dev;
  }
  // the two curves differ by less than C * eps
  double v1 = lambda_n(ex, 0.1, xi, std::sqrt(0.1) * u_hat) / 0.1;
  double v2 = lambda_n(ex, 0.05, xi, std::sqrt(0.05) * u_hat) / 0.05;
  CHECK(std::abs(v1 - v2) < 1.0 * 0.1);
}

TEST_CASE("modulation residuals on an exact-ODE series") {
  const auto& ze = zero_exp();
  // unperturbed soliton motion: both residuals at the differencing floor
  ParamSeries s = integrate_exact_ode(0.0, 0.05, ze, 0.0, 3.0, 0.05);
  ModulationResiduals r = modulation_residuals(s, ze, 0.0);
  for (std::size_t i = 0; i < r.t.size(); ++i) {
    CHECK(r.xi_residual[i] < 1e-5);
    CHECK(r.u_residual[i] < 1e-5);
  }
  CHECK_THROWS(modulation_residuals(ParamSeries{{0.0, 1.0}, {0, 0}, {0, 0}}, ze, 0.0));
}

TEST_CASE("gronwall comparison") {
  const auto& ze = zero_exp();
  const auto& ex = small_exp();

  // zero defects: zero deviations
  GronwallReport g0 = gronwall_compare(ex, 0.05, 0.0, 0.1, 1.0, 1e-3,
                                       [](double) { return 0.0; }, [](double) { return 0.0; });
  CHECK(g0.max_dev_xi == 0.0);
  CHECK(g0.max_dev_u == 0.0);
  CHECK(g0.within_bound);

  // lambda == 0 with a constant defect in u': delta u = delta * s exactly
  double delta = 1e-4;
  GronwallReport g1 = gronwall_compare(ze, 0.05, 0.0, 0.1, 1.0, 1e-3,
                                       [](double) { return 0.0; },
                                       [delta](double) { return delta; });
  CHECK(g1.max_dev_u == doctest::Approx(delta * 1.0).epsilon(1e-6));
  CHECK(g1.within_bound);
  CHECK(g1.bound >= g1.max_dev_u);

  // eps^n-sized defects stay under the bound on [0, 1]
  for (double eps : {0.1, 0.05}) {
    double d = eps;  // n = 1
    GronwallReport g2 = gronwall_compare(ex, eps, 0.0, 0.2, 1.0, 1e-3,
                                         [d](double) { return d; }, [d](double) { return d; });
    CHECK(g2.within_bound);
    CHECK(std::max(g2.max_dev_xi, g2.max_dev_u) < 10.0 * eps);
  }
}

TEST_CASE("parameter error floor at eps = 0") {
  const auto& ze = zero_exp();
  ParamSeries s = integrate_exact_ode(0.0, 0.05, ze, 0.0, 2.0, 0.05);
  ParameterErrorReport r = parameter_error(s, ze, 1e-6, 0);
  CHECK(r.max_dev_xi < 1e-10);
  CHECK(r.max_dev_u < 1e-10);
}

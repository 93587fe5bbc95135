#include <cmath>
#include <random>

#include "doctest.h"
#include "sglab/decomp.hpp"
#include "sglab/lyapunov.hpp"
#include "sglab/manifold.hpp"
#include "sglab/pde.hpp"
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

}  // namespace

TEST_CASE("energy breakdown: zero fields, the E = L_aux identity, eps gap") {
  const auto& exp = small_exp();
  Grid1D g = make_grid(40.0, 2048, Boundary::dirichlet_decay);

  Field z(g.n_points, 0.0);
  EnergyBreakdown e0 = lyapunov_evaluate(z, z, {0.3, 0.06}, exp, 0.05, g);
  CHECK(e0.L_eps == 0.0);
  CHECK(e0.E == 0.0);

  std::mt19937 rng(31u);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 40; ++t) {
    Field v(g.n_points), w(g.n_points);
    double a = uni(rng), b = uni(rng), c = 3.0 * uni(rng);
    for (std::size_t i = 0; i < g.n_points; ++i) {
      double x = g.node(i);
      v[i] = a * std::exp(-0.2 * (x - c) * (x - c)) * std::cos(x);
      w[i] = b * std::exp(-0.3 * (x + c) * (x + c)) * std::sin(0.6 * x);
    }
    EnergyBreakdown eb = lyapunov_evaluate(v, w, {2.0 * uni(rng), 0.5 * uni(rng)}, exp, 0.0, g);
    worst = std::max(worst, std::abs(eb.E - eb.L_aux));
    CHECK(eb.L_eps ==
          doctest::Approx(eb.term_w2 + eb.term_dv2 + eb.term_cos + eb.term_cross).epsilon(1e-12));
  }
  CHECK(worst < 1e-12);

  // |L_eps - L_aux| <= C eps^{k+1} ||v||^2 scale
  Field v(g.n_points), w(g.n_points, 0.0);
  for (std::size_t i = 0; i < g.n_points; ++i) v[i] = std::exp(-0.5 * std::pow(g.node(i), 2));
  double nv2 = std::pow(sobolev_norm(v, g, {0, 0}), 2);
  std::vector<std::pair<double, double>> pts;
  for (double eps : {0.1, 0.07, 0.05, 0.035, 0.025}) {
    EnergyBreakdown eb = lyapunov_evaluate(v, w, {0.0, 0.05}, exp, eps, g);
    pts.emplace_back(eps, std::abs(eb.L_eps - eb.L_aux));
    CHECK(std::abs(eb.L_eps - eb.L_aux) < 2.0 * eps * nv2);
  }
}

TEST_CASE("coercivity constant") {
  const auto& exp = small_exp();
  Grid1D g = make_grid(40.0, 1024, Boundary::dirichlet_decay);

  double c00 = coercivity_constant({0.0, 0.0}, exp, 0.0, g, 60);
  CHECK(c00 > 0.0);

  // positivity across the sampled strip; continuity in u
  for (double u : {0.1, -0.1, 0.2, -0.2}) {
    double c = coercivity_constant({0.0, u}, exp, 0.0, g, 60);
    CHECK(c > 0.0);
    CHECK(std::abs(c - c00) < 0.2);
  }
  for (double xi : {1.0, -1.0}) {
    CHECK(coercivity_constant({xi, 0.8 * exp.u_samples.back()}, exp, 0.01, g, 60) > 0.0);
  }

  // the quadratic form is degenerate along the kernel direction
  CHECK(kernel_direction_energy({0.0, 0.0}, make_grid(40.0, 8192, Boundary::dirichlet_decay)) <
        1e-8);
  CHECK(kernel_direction_energy({0.5, 0.2}, make_grid(40.0, 8192, Boundary::dirichlet_decay)) <
        1e-8);

  // coercivity bound holds on random constrained pairs
  SolitonParams p{0.0, 0.1};
  ManifoldFrame fr = manifold_frame(exp, 0.0, p, g);
  std::mt19937 rng(41u);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    Field v(g.n_points), w(g.n_points);
    double a = uni(rng), b = uni(rng), c = 2.0 * uni(rng), d = uni(rng);
    for (std::size_t i = 0; i < g.n_points; ++i) {
      double x = g.node(i);
      v[i] = a * std::exp(-0.3 * (x - c) * (x - c)) + d * std::exp(-0.2 * x * x) * std::sin(x);
      w[i] = b * std::exp(-0.25 * (x + c) * (x + c)) * std::cos(0.8 * x);
    }
    // project out the constraint: N2c(v, w) = <du psi, v> - <du theta, w> = 0
    double n2 = inner_product(fr.t2.psi, v, g) - inner_product(fr.t2.theta, w, g);
    double den = inner_product(fr.t2.psi, fr.t2.psi, g);
    for (std::size_t i = 0; i < g.n_points; ++i) v[i] -= n2 / den * fr.t2.psi[i];

    EnergyBreakdown eb = lyapunov_evaluate(v, w, p, exp, 0.0, g);
    double nv = sobolev_norm(v, g, {1, 0}), nw = sobolev_norm(w, g, {0, 0});
    CHECK(eb.E >= c00 * 0.5 * (nv * nv + nw * nw) - 1e-10);
  }
}

TEST_CASE("dL/dt formula against finite differences along a perturbed run") {
  const auto& exp = small_exp();
  Grid1D g = make_grid(40.0, 2048, Boundary::dirichlet_decay);
  double eps = 0.05;

  // start slightly off the manifold
  SolitonParams p0{0.0, 0.05};
  FieldPair S = evaluate_virtual_soliton(exp, eps, p0, g);
  SimState init;
  init.grid = g;
  init.eps = eps;
  init.F = exp.F;
  init.fields = S;
  for (std::size_t i = 0; i < g.n_points; ++i) {
    double x = g.node(i);
    init.fields.theta[i] += 5e-3 * std::exp(-x * x) * std::cos(2.0 * x);
    init.fields.psi[i] += 5e-3 * std::exp(-x * x) * std::sin(x);
  }

  std::vector<double> times;
  std::vector<DecompositionResult> decomps;
  SolitonParams guess = p0;
  Observer ob = [&](const SimState& s) {
    DecompositionResult d = project(s.fields.theta, s.fields.psi, guess, exp, eps, s.grid, {});
    guess = d.params;
    times.push_back(s.t);
    decomps.push_back(std::move(d));
  };
  double dt = 0.01;  // divides the snapshot interval exactly
  std::size_t stride = 5;
  double T = 3.0;  // keeps u(t) inside the sampled velocity strip
  simulate(init, T, dt, {ob}, stride, false);
  REQUIRE(times.size() >= 10);

  DLdtSeries series = dLdt_check(times, decomps, exp, eps, g);
  double fmax = 0.0, devmax = 0.0;
  for (std::size_t i = 0; i < series.t.size(); ++i)
    fmax = std::max(fmax, std::abs(series.formula[i]));
  for (std::size_t i = 0; i < series.t.size(); ++i)
    devmax = std::max(devmax,
                      std::abs(series.formula[i] - series.finite_difference[i]));
  // two independent evaluations agree to 5% of the series scale
  CHECK(devmax < 0.05 * fmax);
}

#include <benchmark/benchmark.h>

#include <cmath>

#include "sglab/grid.hpp"
#include "sglab/kink.hpp"
#include "sglab/linop.hpp"
#include "sglab/pde.hpp"

using namespace sglab;

namespace {

Field gaussian(const Grid1D& g) {
  Field f(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) f[i] = std::exp(-0.3 * g.node(i) * g.node(i));
  return f;
}

void bm_derivative(benchmark::State& state) {
  Grid1D g = make_grid(40.0, static_cast<std::size_t>(state.range(0)), Boundary::dirichlet_decay);
  Field f = gaussian(g);
  for (auto _ : state) {
    Field d = derivative(f, g, 2);
    benchmark::DoNotOptimize(d.data());
  }
}
BENCHMARK(bm_derivative)->Arg(1024)->Arg(4096);

void bm_symplectic_form(benchmark::State& state) {
  Grid1D g = make_grid(40.0, static_cast<std::size_t>(state.range(0)), Boundary::dirichlet_decay);
  FieldPair a = soliton_pair({0.0, 0.2}, g);
  FieldPair b = soliton_pair({0.5, -0.1}, g);
  for (auto _ : state) benchmark::DoNotOptimize(symplectic_form(a, b, g));
}
BENCHMARK(bm_symplectic_form)->Arg(4096);

void bm_bordered_solve(benchmark::State& state) {
  Grid1D g = make_grid(40.0, static_cast<std::size_t>(state.range(0)), Boundary::dirichlet_decay);
  SymBanded L = build_L({0.0, 0.0}, g);
  Field ker(g.n_points), border(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    ker[i] = kink_dtheta(g.node(i));
    border[i] = -ker[i];
  }
  BorderedSystem sys{L, border, ker, g};
  Field rhs = gaussian(g);
  for (auto _ : state) {
    BorderedSolution s = solve_bordered(sys, rhs);
    benchmark::DoNotOptimize(s.lambda);
  }
}
BENCHMARK(bm_bordered_solve)->Arg(1024)->Arg(4096);

void bm_pde_step(benchmark::State& state) {
  Grid1D g = make_grid(40.0, static_cast<std::size_t>(state.range(0)), Boundary::dirichlet_decay);
  SimState s;
  s.grid = g;
  s.eps = 0.05;
  s.F = make_perturbation("sech", 1.0, 0);
  s.fields = soliton_pair({0.0, 0.1}, g);
  double dt = 0.4 * g.spacing;
  for (auto _ : state) {
    s = step(s, dt);
    benchmark::DoNotOptimize(s.fields.theta.data());
  }
}
BENCHMARK(bm_pde_step)->Arg(4096)->Arg(8192);

void bm_mode_factor_solve(benchmark::State& state) {
  Grid2D g2;
  g2.xi_grid = make_grid(16.0, 64, Boundary::periodic);
  g2.x_grid = make_grid(20.0, static_cast<std::size_t>(state.range(0)), Boundary::dirichlet_decay);
  ModeProblem mp(3, 0.1, g2);
  mp.factor();
  std::vector<cplx> rhs(mp.dim());
  for (std::size_t i = 0; i < g2.x_grid.n_points; ++i)
    rhs[2 * i + 1] = std::exp(-0.3 * std::pow(g2.x_grid.node(i), 2));
  for (auto _ : state) {
    std::vector<cplx> z;
    cplx lam;
    mp.solve(rhs, z, lam);
    benchmark::DoNotOptimize(lam);
  }
}
BENCHMARK(bm_mode_factor_solve)->Arg(512)->Arg(2048);

}  // namespace

BENCHMARK_MAIN();

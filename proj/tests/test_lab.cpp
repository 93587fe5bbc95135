#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sglab/decomp.hpp"
#include "sglab/lab.hpp"

using namespace sglab;

TEST_CASE("config: parsing, defaults, full-precision round trip") {
  Config c = Config::from_string(
      "# comment line\n"
      "experiment.n = 2\n"
      "experiment.eps_list = 0.1, 0.05, 0.025\n"
      "grid.half_width = 37.5   # trailing comment\n"
      "sim.dt_factor = 0.012500000000000001\n");
  CHECK(c.get_int("experiment.n", 1) == 2);
  CHECK(c.get_double("grid.half_width", 0.0) == 37.5);
  CHECK(c.get_double("sim.dt_factor", 0.0) == 0.012500000000000001);
  auto l = c.get_list("experiment.eps_list", {});
  REQUIRE(l.size() == 3);
  CHECK(l[1] == 0.05);
  CHECK(c.get("missing.key", "fallback") == "fallback");

  CHECK_THROWS(ExperimentConfig::from_config(Config::from_string("experiment.k = 3\n")));
  CHECK_THROWS(ExperimentConfig::from_config(
      Config::from_string("experiment.eps_list = 0.05, 0.1\n")));
}

TEST_CASE("fit_slope") {
  std::vector<std::pair<double, double>> exact;
  for (double e : {0.1, 0.07, 0.05, 0.035, 0.025}) exact.emplace_back(e, e * e);
  SlopeFit f = fit_slope(exact);
  CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<std::pair<double, double>> c;
  for (double e : {0.1, 0.07, 0.05, 0.035, 0.025}) c.emplace_back(e, 3.14);
  CHECK(std::abs(fit_slope(c).slope) < 1e-12);

  std::vector<std::pair<double, double>> noisy;
  for (double e : {0.1, 0.07, 0.05, 0.035, 0.025})
    noisy.emplace_back(e, e * e * (1.0 + 0.1 * std::sin(std::log(e))));
  CHECK(std::abs(fit_slope(noisy).slope - 2.0) < 0.15);

  CHECK_THROWS(fit_slope({{0.1, 1.0}, {0.05, -1.0}, {0.02, 1.0}, {0.01, 1.0}}));
  CHECK_THROWS(fit_slope({{0.1, 1.0}, {0.05, 1.0}}));
}

namespace {

ExperimentConfig tiny_config() {
  Config c = Config::from_string(
      "experiment.n = 1\n"
      "experiment.k = 0\n"
      "experiment.eps_list = 0.1, 0.07, 0.05, 0.035\n"
      "experiment.T_factor = 0.05\n"
      "grid.half_width = 30\n"
      "grid.n_points = 1024\n"
      "grid.xi_half_width = 16\n"
      "grid.xi_points = 64\n"
      "manifold.x_points = 512\n"
      "sim.observer_count = 20\n");
  return ExperimentConfig::from_config(c);
}

}  // namespace

TEST_CASE("prepare_initial_state: orthogonality and hypothesis norm") {
  ExperimentConfig cfg = tiny_config();
  ManifoldExpansion exp = build_or_load_manifold(cfg);
  Grid1D g = cfg.pde_grid();
  for (double eps : {0.1, 0.05}) {
    SimState st = prepare_initial_state(cfg, exp, eps);
    double u_s = cfg.u_s_coeff * std::sqrt(eps);
    auto [N1, N2] =
        orthogonality_residual(st.fields.theta, st.fields.psi, {cfg.xi_s, u_s}, exp, eps, g);
    CHECK(std::abs(N1) < 1e-10);
    CHECK(std::abs(N2) < 1e-10);

    FieldPair S = evaluate_virtual_soliton(exp, eps, {cfg.xi_s, u_s}, g);
    Field v(g.n_points), w(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) {
      v[i] = st.fields.theta[i] - S.theta[i];
      w[i] = st.fields.psi[i] - S.psi[i];
    }
    double nv = sobolev_norm(v, g, {1, 0}), nw = sobolev_norm(w, g, {0, 0});
    double n2 = nv * nv + nw * nw;
    CHECK(n2 <= std::pow(eps, 2.0 * cfg.n) * (1.0 + 1e-12));
    CHECK(n2 >= 0.25 * cfg.seed_norm_frac * std::pow(eps, 2.0 * cfg.n));
  }
}

TEST_CASE("scaling study: determinism and cache correctness") {
  ExperimentConfig cfg = tiny_config();
  cfg.eps_list = {0.1, 0.07, 0.05, 0.035};

  std::string d1 = "lab_det_run1", d2 = "lab_det_run2";
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
  auto rows1 = run_scaling_study(cfg, d1);
  auto rows2 = run_scaling_study(cfg, d2);
  REQUIRE(rows1.size() == rows2.size());
  for (std::size_t i = 0; i < rows1.size(); ++i) {
    CHECK(rows1[i].ok);
    CHECK(rows1[i].sup_vw2 == rows2[i].sup_vw2);
    CHECK(rows1[i].dev_xi == rows2[i].dev_xi);
  }
  auto slurp = [](const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  };
  CHECK(slurp(d1 + "/scaling.csv") == slurp(d2 + "/scaling.csv"));
  CHECK(!slurp(d1 + "/scaling.gp").empty());

  // cached manifold agrees with a fresh build
  ManifoldExpansion fresh = build_or_load_manifold(cfg);
  ManifoldExpansion cached = build_or_load_manifold(cfg, -1, -1, d1 + "/manifold");
  double worst = 0.0;
  for (std::size_t iu = 0; iu < fresh.u_samples.size(); ++iu)
    for (std::size_t q = 0; q < fresh.coeff[0][iu].theta.v.size(); ++q)
      worst = std::max(worst,
                       std::abs(fresh.coeff[0][iu].theta.v[q] - cached.coeff[0][iu].theta.v[q]));
  CHECK(worst < 1e-12);

  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("scaling rows behave like the theorem at desk scale") {
  ExperimentConfig cfg = tiny_config();
  ManifoldExpansion exp = build_or_load_manifold(cfg);
  TrajectoryRecord rec;
  ScalingRow row = run_single_experiment(cfg, exp, 0.1, &rec);
  REQUIRE(row.ok);
  CHECK(row.sup_vw2 > 0.0);
  CHECK(row.sup_vw2 < 10.0 * 0.1 * 0.1);
  REQUIRE(rec.t.size() >= 10);
  // the trajectory record columns are populated and finite
  for (std::size_t i = 0; i < rec.t.size(); ++i) {
    CHECK(std::isfinite(rec.H[i]));
    CHECK(std::isfinite(rec.L_eps[i]));
    CHECK(std::abs(rec.N1[i]) < 1e-8);
  }
  // energy drift along the perturbed run stays small
  CHECK(std::abs(rec.H_eps.back() - rec.H_eps.front()) / std::abs(rec.H_eps.front()) < 1e-5);
}

// Command line driver: builds manifolds, runs simulations and scaling
// studies, prints spectra, compares ODE trajectories and runs the
// validation suite.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "sglab/banded.hpp"
#include "sglab/decomp.hpp"
#include "sglab/lab.hpp"
#include "sglab/linop.hpp"
#include "sglab/lyapunov.hpp"
#include "sglab/modulation.hpp"
#include "sglab/pde.hpp"

using namespace sglab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig load_cfg(const std::string& path, int threads) {
  Config c;
  if (!path.empty()) c = Config::from_file(path);
  ExperimentConfig cfg = ExperimentConfig::from_config(c);
  if (threads > 0) cfg.threads = threads;
  return cfg;
}

int cmd_build_manifold(const std::string& config, const std::string& out, int threads,
                       bool verbose) {
  ExperimentConfig cfg = load_cfg(config, threads);
  fs::create_directories(out);
  ManifoldExpansion exp = build_or_load_manifold(cfg, -1, -1, out);
  if (verbose) {
    std::printf("manifold: n=%d k=%d grid %zux%zu, %zu velocity samples\n", exp.n, exp.k,
                exp.n_xi(), exp.n_y(), exp.u_samples.size());
    for (std::size_t j = 0; j < exp.solve_residuals.size(); ++j)
      std::printf("  order %zu solve residual %.3e\n", j + 1, exp.solve_residuals[j]);
  }
  std::printf("manifold written to %s\n", out.c_str());
  return 0;
}

int cmd_simulate(const std::string& config, const std::string& out, int threads, bool verbose) {
  ExperimentConfig cfg = load_cfg(config, threads);
  fs::create_directories(out);
  ManifoldExpansion exp = build_or_load_manifold(cfg, -1, -1, out + "/manifold");
  double eps = cfg.eps_list.front();
  TrajectoryRecord rec;
  ScalingRow row = run_single_experiment(cfg, exp, eps, &rec);
  if (!row.ok) {
    std::fprintf(stderr, "simulation failed: %s\n", row.error.c_str());
    return 1;
  }
  std::vector<std::vector<double>> csv;
  for (std::size_t i = 0; i < rec.t.size(); ++i)
    csv.push_back({rec.t[i], rec.xi[i], rec.u[i], rec.v_h1[i], rec.w_l2[i], rec.N1[i], rec.N2[i],
                   rec.L_eps[i], rec.H[i], rec.Pi[i], rec.H_eps[i]});
  write_csv(out + "/trajectory.csv",
            "# sglab trajectory v1\nt,xi,u,v_h1,w_l2,N1,N2,L_eps,H,Pi,H_eps", csv);
  if (verbose)
    std::printf("eps=%g: sup ||v||^2+||w||^2 = %.4e, dev_xi = %.3e, dev_u = %.3e\n", eps,
                row.sup_vw2, row.dev_xi, row.dev_u);
  std::printf("trajectory written to %s/trajectory.csv\n", out.c_str());
  return 0;
}

int cmd_scaling(const std::string& config, const std::string& out, int threads, bool verbose) {
  ExperimentConfig cfg = load_cfg(config, threads);
  auto rows = run_scaling_study(cfg, out);
  int bad = 0;
  for (const auto& r : rows) {
    if (verbose || !r.ok)
      std::printf("eps=%g ok=%d sup_vw2=%.4e R=%.3e defect=%.3e lambda=%.3e%s%s\n", r.eps,
                  r.ok ? 1 : 0, r.sup_vw2, r.r_l2, r.defect_l2, r.lambda_mag,
                  r.error.empty() ? "" : " error: ", r.error.c_str());
    if (!r.ok) ++bad;
  }
  std::printf("study written to %s (%zu rows, %d failures)\n", out.c_str(), rows.size(), bad);
  return bad == 0 ? 0 : 1;
}

int cmd_spectrum(const std::string& config, const std::string& out, bool verbose) {
  ExperimentConfig cfg = load_cfg(config, 1);
  Grid1D g = cfg.pde_grid();
  SymBanded L = build_L({0.0, 0.0}, g);
  auto eigs = eigen_spectrum(L, 8);
  fs::create_directories(out);
  std::vector<std::vector<double>> csv;
  for (std::size_t i = 0; i < eigs.size(); ++i) csv.push_back({static_cast<double>(i), eigs[i]});
  write_csv(out + "/spectrum.csv", "# sglab spectrum v1\nindex,eigenvalue", csv);
  if (verbose)
    for (std::size_t i = 0; i < eigs.size(); ++i) std::printf("lambda_%zu = %.8f\n", i, eigs[i]);
  std::printf("spectrum written to %s/spectrum.csv (lambda_0 = %.3e)\n", out.c_str(), eigs[0]);
  return 0;
}

int cmd_ode_compare(const std::string& config, const std::string& out, int threads,
                    bool verbose) {
  ExperimentConfig cfg = load_cfg(config, threads);
  fs::create_directories(out);
  ManifoldExpansion exp = build_or_load_manifold(cfg, -1, -1, out + "/manifold");

  double eps = cfg.eps_list.front();
  double beta = 0.5 * (cfg.k + 1);
  double u_s = cfg.u_s_coeff * std::pow(eps, beta);
  double T = cfg.T_factor / std::pow(eps, beta);
  ParamSeries s = integrate_exact_ode(cfg.xi_s, u_s, exp, eps, T, 1e-3);
  ParamSeries r = rescale(s, eps, cfg.k);
  std::vector<std::vector<double>> csv;
  for (std::size_t i = 0; i < s.t.size(); ++i)
    csv.push_back({s.t[i], s.xi[i], s.u[i], r.t[i], r.u[i]});
  write_csv(out + "/ode.csv", "# sglab ode-compare v1\nt,xi,u,s,u_hat", csv);

  GronwallReport gr = gronwall_compare(
      exp, eps, cfg.xi_s, u_s / std::pow(eps, beta), 1.0, 1e-3,
      [](double) { return 1e-6; }, [](double) { return 1e-6; });
  if (verbose)
    std::printf("gronwall: C=%.3f dev=(%.3e, %.3e) bound=%.3e within=%d\n", gr.C, gr.max_dev_xi,
                gr.max_dev_u, gr.bound, gr.within_bound ? 1 : 0);
  std::printf("ode comparison written to %s/ode.csv%s\n", out.c_str(),
              gr.within_bound ? "" : " (gronwall bound violated!)");
  return gr.within_bound ? 0 : 1;
}

int cmd_validate(const std::string& config, const std::string& out, int threads) {
  ExperimentConfig cfg = load_cfg(config, threads);
  ValidationReport rep = validate(cfg, out);
  std::cout << rep.table();
  return rep.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sine-Gordon virtual solitary manifold laboratory"};
  app.require_subcommand(1);

  std::string config, out = "lab_out";
  int threads = 0;
  bool verbose = false;
  app.add_option("--config", config, "configuration file (dotted key = value)");
  app.add_option("--out", out, "output directory");
  app.add_option("--threads", threads, "worker threads (0: config value)");
  app.add_flag("--verbose", verbose, "chattier output");

  app.add_subcommand("build-manifold", "construct and store the virtual solitary manifold");
  app.add_subcommand("simulate", "run one perturbed simulation with decomposition observers");
  app.add_subcommand("scaling-study", "run the full eps-scaling experiment");
  app.add_subcommand("spectrum", "eigenvalues of the linearized operator");
  app.add_subcommand("ode-compare", "exact parameter ODE, rescaling and the Gronwall harness");
  app.add_subcommand("validate", "run the acceptance criteria battery");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("build-manifold"))
      return cmd_build_manifold(config, out, threads, verbose);
    if (app.got_subcommand("simulate")) return cmd_simulate(config, out, threads, verbose);
    if (app.got_subcommand("scaling-study")) return cmd_scaling(config, out, threads, verbose);
    if (app.got_subcommand("spectrum")) return cmd_spectrum(config, out, verbose);
    if (app.got_subcommand("ode-compare")) return cmd_ode_compare(config, out, threads, verbose);
    if (app.got_subcommand("validate")) return cmd_validate(config, out, threads);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

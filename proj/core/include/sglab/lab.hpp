#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sglab/decomp.hpp"
#include "sglab/manifold.hpp"
#include "sglab/modulation.hpp"
#include "sglab/pde.hpp"

namespace sglab {

// Flat key-value configuration with dotted keys ("experiment.n = 2").
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;
  void set(const std::string& key, const std::string& value);
  std::string dump() const;

 private:
  std::map<std::string, std::string> kv_;
};

struct ExperimentConfig {
  int n = 1;
  int k = 0;
  std::vector<double> eps_list = {0.1, 0.07, 0.05, 0.035, 0.025};
  std::string f_profile = "sech";
  double f_amplitude = 1.0;
  double xi_s = 0.0;
  double u_s_coeff = 0.25;     // u_s = u_s_coeff * eps^{(k+1)/2}
  double C_tilde = 4.0;        // hypothesis constant (must dominate u_s_coeff)
  double T_factor = 0.25;      // T = T_factor / eps^{(k+1)/2}
  double seed_norm_frac = 0.5; // seed norm^2 = frac * eps^{2n}

  double x_half_width = 40.0;
  std::size_t x_points = 4096;
  double xi_half_width = 20.0;
  std::size_t xi_points = 256;
  std::size_t manifold_x_points = 0;  // 0: x_points
  int u_samples = 9;
  double u_cap_frac = 0.8;

  double dt_factor = 0.01;  // dt = dt_factor * spacing
  int observer_count = 150; // decomposition snapshots per run
  double tube_radius = 0.3;
  int threads = 1;

  static ExperimentConfig from_config(const Config& c);
  Grid1D pde_grid() const;
  Grid2D manifold_grid() const;
  std::vector<double> velocity_samples() const;  // CGL in [-u_cap, u_cap]
};

// Builds (or loads from cache_dir when present and matching) the expansion.
ManifoldExpansion build_or_load_manifold(const ExperimentConfig& cfg, int n_override = -1,
                                         int k_override = -1,
                                         const std::string& cache_dir = "");

// Initial state of the main experiment: virtual soliton at (xi_s, u_s) plus
// a transversal seed projected to N = 0 and scaled to the hypothesis norm.
SimState prepare_initial_state(const ExperimentConfig& cfg, const ManifoldExpansion& exp,
                               double eps);

struct ScalingRow {
  double eps = 0.0;
  double sup_vw2 = 0.0;      // sup_t ||v||_{H1}^2 + ||w||_{L2}^2
  double r_l2 = 0.0;         // ||R_n||
  double defect_l2 = 0.0;    // PDE defect norm
  double lambda_mag = 0.0;   // |lambda_n| at (xi_s, 0)
  double dev_xi = 0.0;       // max |xi - xi_hat|
  double dev_u = 0.0;        // max |u - eps^beta u_hat|
  bool ok = false;
  std::string error;
};

struct TrajectoryRecord {
  std::vector<double> t, xi, u, v_h1, w_l2, N1, N2, L_eps, H, Pi, H_eps;
};

// One eps of the main experiment; fills the row and the per-run record.
ScalingRow run_single_experiment(const ExperimentConfig& cfg, const ManifoldExpansion& exp,
                                 double eps, TrajectoryRecord* record = nullptr);

// Full study; deterministic CSV + gnuplot script under out_dir.
std::vector<ScalingRow> run_scaling_study(const ExperimentConfig& cfg, const std::string& out_dir);

// Residual/force rate study at depth/k of the given expansion (refined
// states around u = 0).
struct RateRow {
  double eps = 0.0;
  double r_l2 = 0.0;
  double defect_l2 = 0.0;
  double lambda_mag = 0.0;
};
std::vector<RateRow> residual_rate_study(const ManifoldExpansion& exp, int depth,
                                         const std::vector<double>& eps_list, int threads);

struct SlopeFit {
  double slope = 0.0;
  double r2 = 0.0;
};
// Least squares on (log eps, log value); rejects nonpositive values.
SlopeFit fit_slope(const std::vector<std::pair<double, double>>& pairs);

// Independent coarse-grid route for the 2-D operator equation: assembles the
// full sparse system (FD stencils in both directions) and solves it with a
// sparse LU, then reports the relative difference against the mode-decoupled
// solve on the same right-hand side.
double frakM_oracle_compare(double u, const Grid2D& coarse, int threads);

struct CriterionResult {
  int id = 0;
  std::string name;
  std::string measured;
  bool pass = false;
};

struct ValidationReport {
  std::vector<CriterionResult> results;
  bool all_pass() const;
  std::string table() const;  // deterministic, no timings
};

// Runs every acceptance criterion at its stated tolerance.
ValidationReport validate(const ExperimentConfig& cfg, const std::string& out_dir);

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<double>>& rows);
void write_gnuplot_loglog(const std::string& path, const std::string& csv_name,
                          const std::vector<std::pair<int, std::string>>& columns,
                          const std::string& title);

}  // namespace sglab

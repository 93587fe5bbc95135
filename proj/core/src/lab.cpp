#include "sglab/lab.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "sglab/banded.hpp"
#include "sglab/lyapunov.hpp"
#include "sglab/util.hpp"

namespace sglab {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

Config Config::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("Config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_string(ss.str());
}

Config Config::from_string(const std::string& text) {
  Config c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (!key.empty()) c.kv_[key] = val;
  }
  return c;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  return std::stod(it->second);
}

int Config::get_int(const std::string& key, int fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  return std::stoi(it->second);
}

std::vector<double> Config::get_list(const std::string& key,
                                     const std::vector<double>& fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::vector<double> out;
  std::stringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

void Config::set(const std::string& key, const std::string& value) { kv_[key] = value; }

std::string Config::dump() const {
  std::ostringstream os;
  for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// ExperimentConfig
// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_config(const Config& c) {
  ExperimentConfig e;
  e.n = c.get_int("experiment.n", e.n);
  e.k = c.get_int("experiment.k", e.k);
  e.eps_list = c.get_list("experiment.eps_list", e.eps_list);
  e.f_profile = c.get("experiment.f_profile", e.f_profile);
  e.f_amplitude = c.get_double("experiment.f_amplitude", e.f_amplitude);
  e.xi_s = c.get_double("experiment.xi_s", e.xi_s);
  e.u_s_coeff = c.get_double("experiment.u_s_coeff", e.u_s_coeff);
  e.C_tilde = c.get_double("experiment.C_tilde", e.C_tilde);
  e.T_factor = c.get_double("experiment.T_factor", e.T_factor);
  e.seed_norm_frac = c.get_double("experiment.seed_norm_frac", e.seed_norm_frac);
  e.x_half_width = c.get_double("grid.half_width", e.x_half_width);
  e.x_points = static_cast<std::size_t>(c.get_int("grid.n_points", static_cast<int>(e.x_points)));
  e.xi_half_width = c.get_double("grid.xi_half_width", e.xi_half_width);
  e.xi_points =
      static_cast<std::size_t>(c.get_int("grid.xi_points", static_cast<int>(e.xi_points)));
  e.manifold_x_points = static_cast<std::size_t>(
      c.get_int("manifold.x_points", static_cast<int>(e.manifold_x_points)));
  e.u_samples = c.get_int("manifold.u_samples", e.u_samples);
  e.u_cap_frac = c.get_double("manifold.u_cap_frac", e.u_cap_frac);
  e.dt_factor = c.get_double("sim.dt_factor", e.dt_factor);
  e.observer_count = c.get_int("sim.observer_count", e.observer_count);
  e.tube_radius = c.get_double("decomp.tube_radius", e.tube_radius);
  e.threads = c.get_int("threads", e.threads);
  if (e.k + 1 > e.n) throw std::invalid_argument("ExperimentConfig: need k+1 <= n");
  for (std::size_t i = 1; i < e.eps_list.size(); ++i)
    if (!(e.eps_list[i] < e.eps_list[i - 1]) || !(e.eps_list[i] > 0.0))
      throw std::invalid_argument("ExperimentConfig: eps_list must be positive descending");
  if (!(e.u_s_coeff <= e.C_tilde))
    throw std::invalid_argument("ExperimentConfig: u_s rule violates |u_s| <= C_tilde eps^beta");
  return e;
}

Grid1D ExperimentConfig::pde_grid() const {
  return make_grid(x_half_width, x_points, Boundary::dirichlet_decay);
}

Grid2D ExperimentConfig::manifold_grid() const {
  Grid2D g2;
  g2.xi_grid = make_grid(xi_half_width, xi_points, Boundary::periodic);
  std::size_t nx = manifold_x_points == 0 ? x_points : manifold_x_points;
  g2.x_grid = make_grid(x_half_width, nx, Boundary::dirichlet_decay);
  return g2;
}

std::vector<double> ExperimentConfig::velocity_samples() const {
  double cap = u_cap_frac * estimate_u_star();
  return chebyshev_nodes(cap, u_samples);
}

// ---------------------------------------------------------------------------
// Manifold build / cache
// ---------------------------------------------------------------------------

ManifoldExpansion build_or_load_manifold(const ExperimentConfig& cfg, int n_override,
                                         int k_override, const std::string& cache_dir) {
  int n = n_override >= 0 ? n_override : cfg.n;
  int k = k_override >= 0 ? k_override : cfg.k;
  Grid2D g2 = cfg.manifold_grid();
  std::vector<double> us = cfg.velocity_samples();

  if (!cache_dir.empty() && fs::exists(cache_dir + "/manifest.json")) {
    try {
      ManifoldExpansion exp = load_manifold(cache_dir);
      bool match = exp.n == n && exp.k == k && exp.grid == g2 &&
                   exp.u_samples.size() == us.size() && exp.F.profile_id == cfg.f_profile &&
                   exp.F.amplitude == cfg.f_amplitude && exp.chi.xi_s == cfg.xi_s;
      for (std::size_t i = 0; match && i < us.size(); ++i)
        match = std::abs(exp.u_samples[i] - us[i]) < 1e-14;
      if (match) return exp;
    } catch (const std::exception&) {
      // fall through to a fresh build
    }
  }

  PerturbationSpec F = make_perturbation(cfg.f_profile, cfg.f_amplitude, k);
  CutoffProfile chi = make_cutoff(cfg.xi_s, g2.xi_grid);
  ManifoldExpansion exp = taylor_coefficients(n, F, chi, us, g2, cfg.threads);
  if (!cache_dir.empty()) {
    fs::create_directories(cache_dir);
    save_manifold(exp, cache_dir);
  }
  return exp;
}

namespace {

// depth-truncated view (coefficient agreement across depths makes the
// truncation the depth-n expansion)
ManifoldExpansion truncate_expansion(const ManifoldExpansion& exp, int depth) {
  ManifoldExpansion out = exp;
  out.n = depth;
  out.coeff.resize(static_cast<std::size_t>(depth));
  out.solve_residuals.resize(static_cast<std::size_t>(depth));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Initial state
// ---------------------------------------------------------------------------

SimState prepare_initial_state(const ExperimentConfig& cfg, const ManifoldExpansion& exp,
                               double eps) {
  Grid1D g = cfg.pde_grid();
  double beta = 0.5 * (exp.k + 1);
  double u_s = cfg.u_s_coeff * std::pow(eps, beta);
  SolitonParams p{cfg.xi_s, u_s};

  FieldPair S = evaluate_virtual_soliton(exp, eps, p, g);

  // fixed transversal seed shape (asymmetric about the soliton)
  Field v0(g.n_points), w0(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    double y = g.node(i) - cfg.xi_s;
    v0[i] = std::exp(-0.5 * (y - 1.0) * (y - 1.0)) * (1.0 + 0.4 * std::tanh(y));
    w0[i] = std::exp(-0.5 * y * y) * (std::sin(y) + 0.3);
  }

  // remove the tangent components so N = 0 (exact by bilinearity)
  ManifoldFrame fr = manifold_frame(exp, eps, p, g);
  FieldPair seed{v0, w0};
  double N1 = symplectic_form(fr.t1, seed, g);
  double N2 = symplectic_form(fr.t2, seed, g);
  auto [m_n, k_n] = overlap_coefficients(p, exp, eps, g);
  (void)k_n;
  double a = N2 / m_n;
  double b = -N1 / m_n;
  for (std::size_t i = 0; i < g.n_points; ++i) {
    seed.theta[i] -= a * fr.t1.theta[i] + b * fr.t2.theta[i];
    seed.psi[i] -= a * fr.t1.psi[i] + b * fr.t2.psi[i];
  }

  // hypothesis (c): scale to norm^2 = frac * eps^{2n}
  double nv = sobolev_norm(seed.theta, g, {1, 0});
  double nw = sobolev_norm(seed.psi, g, {0, 0});
  double norm2 = nv * nv + nw * nw;
  double target2 = cfg.seed_norm_frac * std::pow(eps, 2.0 * exp.n);
  double scale = norm2 > 0.0 ? std::sqrt(target2 / norm2) : 0.0;

  SimState st;
  st.t = 0.0;
  st.eps = eps;
  st.F = exp.F;
  st.grid = g;
  st.fields.theta.resize(g.n_points);
  st.fields.psi.resize(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    st.fields.theta[i] = S.theta[i] + scale * seed.theta[i];
    st.fields.psi[i] = S.psi[i] + scale * seed.psi[i];
  }
  return st;
}

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Experiment runs
// ---------------------------------------------------------------------------

ScalingRow run_single_experiment(const ExperimentConfig& cfg, const ManifoldExpansion& exp,
                                 double eps, TrajectoryRecord* record) {
  ScalingRow row;
  row.eps = eps;
  try {
    Grid1D g = cfg.pde_grid();
    double beta = 0.5 * (exp.k + 1);
    double T = cfg.T_factor / std::pow(eps, beta);
    double dt = cfg.dt_factor * g.spacing;
    std::size_t steps = static_cast<std::size_t>(std::llround(T / dt));
    std::size_t stride =
        std::max<std::size_t>(1, steps / static_cast<std::size_t>(cfg.observer_count));
    steps = stride * ((steps + stride - 1) / stride);
    T = static_cast<double>(steps) * dt;

    SimState init = prepare_initial_state(cfg, exp, eps);

    TrajectoryRecord local;
    TrajectoryRecord* rec = record ? record : &local;
    SolitonParams guess{cfg.xi_s, cfg.u_s_coeff * std::pow(eps, beta)};
    DecompOptions dopt;
    dopt.tube_radius = cfg.tube_radius;

    double sup_vw2 = 0.0;
    double worst_boundary = 0.0;
    Observer ob = [&](const SimState& s) {
      worst_boundary = std::max(worst_boundary, boundary_activity(s));
      DecompositionResult d = project(s.fields.theta, s.fields.psi, guess, exp, eps, s.grid, dopt);
      guess = d.params;
      double vh1 = sobolev_norm(d.v, s.grid, {1, 0});
      double wl2 = sobolev_norm(d.w, s.grid, {0, 0});
      sup_vw2 = std::max(sup_vw2, vh1 * vh1 + wl2 * wl2);
      Functionals f = functionals(s);
      EnergyBreakdown le = lyapunov_evaluate(d.v, d.w, d.params, exp, eps, s.grid);
      rec->t.push_back(s.t);
      rec->xi.push_back(d.params.xi);
      rec->u.push_back(d.params.u);
      rec->v_h1.push_back(vh1);
      rec->w_l2.push_back(wl2);
      rec->N1.push_back(d.residual[0]);
      rec->N2.push_back(d.residual[1]);
      rec->L_eps.push_back(le.L_eps);
      rec->H.push_back(f.H);
      rec->Pi.push_back(f.Pi);
      rec->H_eps.push_back(f.H_eps);
    };
    simulate(init, T, dt, {ob}, stride, false);

    ParamSeries series;
    series.t = rec->t;
    series.xi = rec->xi;
    series.u = rec->u;
    ParameterErrorReport per = parameter_error(series, exp, eps, exp.k);

    row.sup_vw2 = sup_vw2;
    row.dev_xi = per.max_dev_xi;
    row.dev_u = per.max_dev_u;
    row.lambda_mag = std::abs(lambda_n(exp, eps, cfg.xi_s, 0.0));
    row.ok = true;
    if (worst_boundary > 1e-6)
      row.error = fmt("warning: boundary activity %.3e", worst_boundary);
  } catch (const std::exception& e) {
    row.ok = false;
    row.error = e.what();
  }
  return row;
}

std::vector<RateRow> residual_rate_study(const ManifoldExpansion& exp, int depth,
                                         const std::vector<double>& eps_list, int threads) {
  const std::size_t nu = exp.u_samples.size();
  if (nu < 5) throw std::invalid_argument("residual_rate_study: need >= 5 u samples");
  // contiguous 5-sample window centered on u = 0
  std::size_t c = 0;
  for (std::size_t i = 1; i < nu; ++i)
    if (std::abs(exp.u_samples[i]) < std::abs(exp.u_samples[c])) c = i;
  std::size_t start = c >= 2 ? c - 2 : 0;
  if (start + 5 > nu) start = nu - 5;
  std::vector<std::size_t> window;
  for (std::size_t s = 0; s < 5; ++s) window.push_back(start + s);
  std::size_t center_slot = c - start;
  std::size_t xi_index = exp.n_xi() / 2;  // xi = 0 on the periodic grid

  std::vector<VirtualFamily> fams(eps_list.size());
  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    fams[e].eps = eps_list[e];
    fams[e].depth = depth;
    fams[e].iu = window;
    fams[e].refined = true;
    fams[e].states.resize(window.size());
  }
  for (std::size_t s = 0; s < window.size(); ++s) {
    FrakMSolver solver(exp.u_samples[window[s]], exp.grid, threads);
    for (std::size_t e = 0; e < eps_list.size(); ++e)
      fams[e].states[s] = newton_refine(exp, eps_list[e], window[s], solver, 1e-10, 12, depth);
  }

  std::vector<RateRow> rows(eps_list.size());
  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    ResidualReport rr = residual_Rn(exp, fams[e], xi_index, center_slot);
    ResidualReport rd = pde_defect(exp, fams[e], xi_index, center_slot);
    rows[e].eps = eps_list[e];
    rows[e].r_l2 = rr.r_l2;
    rows[e].defect_l2 = rd.defect_l2;
    rows[e].lambda_mag = std::abs(fams[e].states[center_slot].lambda[xi_index]);
  }
  return rows;
}

SlopeFit fit_slope(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 4) throw std::invalid_argument("fit_slope: need at least 4 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (auto& [e, v] : pairs) {
    if (!(e > 0.0) || !(v > 0.0)) throw std::invalid_argument("fit_slope: nonpositive value");
    double x = std::log(e), y = std::log(v);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  double n = static_cast<double>(pairs.size());
  double den = n * sxx - sx * sx;
  SlopeFit f;
  f.slope = (n * sxy - sx * sy) / den;
  double ss_tot = syy - sy * sy / n;
  double ss_res = ss_tot - f.slope * (sxy - sx * sy / n);
  f.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

// ---------------------------------------------------------------------------
// Coarse-grid sparse oracle
// ---------------------------------------------------------------------------

double frakM_oracle_compare(double u, const Grid2D& coarse, int threads) {
  const std::size_t nxi = coarse.xi_grid.n_points;
  const std::size_t ny = coarse.x_grid.n_points;
  const double hxi = coarse.xi_grid.spacing;
  const double hy = coarse.x_grid.spacing;
  const double gam = lorentz_gamma(u);

  Array2D rhs_t(nxi, ny), rhs_p(nxi, ny);
  for (std::size_t m = 0; m < nxi; ++m) {
    double xi = coarse.xi_grid.node(m);
    for (std::size_t i = 0; i < ny; ++i) {
      double y = coarse.x_grid.node(i);
      rhs_p.at(m, i) = std::exp(-y * y) * std::exp(-xi * xi / 9.0) * (1.0 + 0.3 * std::sin(y));
      rhs_t.at(m, i) = 0.2 * std::exp(-0.5 * y * y) * std::exp(-xi * xi / 16.0);
    }
  }

  FrakMSolver solver(u, coarse, threads);
  FrakMSolver::Solution mode_sol = solver.solve(rhs_t, rhs_p);

  // direct route: one sparse system with the same stencils
  using Trip = Eigen::Triplet<double>;
  const std::size_t n_unk = 2 * nxi * ny + nxi;
  std::vector<Trip> trips;
  trips.reserve(n_unk * 14);
  auto th_id = [&](std::size_t m, std::size_t i) { return 2 * (m * ny + i); };
  auto ps_id = [&](std::size_t m, std::size_t i) { return 2 * (m * ny + i) + 1; };
  auto lam_id = [&](std::size_t m) { return 2 * nxi * ny + m; };

  static const double d1w[5] = {1.0, -8.0, 0.0, 8.0, -1.0};
  static const double d2w[5] = {-1.0, 16.0, -30.0, 16.0, -1.0};

  Eigen::VectorXd b(static_cast<Eigen::Index>(n_unk));
  b.setZero();
  for (std::size_t m = 0; m < nxi; ++m) {
    for (std::size_t i = 0; i < ny; ++i) {
      double y = coarse.x_grid.node(i);
      std::size_t r1 = th_id(m, i), r2 = ps_id(m, i);
      // u * dxi (periodic 4th order)
      for (int o = -2; o <= 2; ++o) {
        if (d1w[o + 2] == 0.0) continue;
        std::size_t mm = static_cast<std::size_t>(
            (static_cast<std::ptrdiff_t>(m) + o + static_cast<std::ptrdiff_t>(nxi)) %
            static_cast<std::ptrdiff_t>(nxi));
        double w = u * d1w[o + 2] / (12.0 * hxi);
        trips.emplace_back(static_cast<int>(r1), static_cast<int>(th_id(mm, i)), w);
        trips.emplace_back(static_cast<int>(r2), static_cast<int>(ps_id(mm, i)), w);
      }
      // -u * dy and -dy2 (zero extension)
      for (int o = -2; o <= 2; ++o) {
        std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + o;
        if (j < 0 || j >= static_cast<std::ptrdiff_t>(ny)) continue;
        std::size_t ju = static_cast<std::size_t>(j);
        if (d1w[o + 2] != 0.0) {
          double w = -u * d1w[o + 2] / (12.0 * hy);
          trips.emplace_back(static_cast<int>(r1), static_cast<int>(th_id(m, ju)), w);
          trips.emplace_back(static_cast<int>(r2), static_cast<int>(ps_id(m, ju)), w);
        }
        trips.emplace_back(static_cast<int>(r2), static_cast<int>(th_id(m, ju)),
                           -d2w[o + 2] / (12.0 * hy * hy));
      }
      trips.emplace_back(static_cast<int>(r1), static_cast<int>(ps_id(m, i)), -1.0);
      trips.emplace_back(static_cast<int>(r2), static_cast<int>(th_id(m, i)),
                         kink_cos_theta(gam * y));
      trips.emplace_back(static_cast<int>(r1), static_cast<int>(lam_id(m)), t2_theta(u, y));
      trips.emplace_back(static_cast<int>(r2), static_cast<int>(lam_id(m)), t2_psi(u, y));
      b(static_cast<Eigen::Index>(r1)) = rhs_t.at(m, i);
      b(static_cast<Eigen::Index>(r2)) = rhs_p.at(m, i);
    }
    // constraint row in the lambda slot
    for (std::size_t i = 0; i < ny; ++i) {
      double y = coarse.x_grid.node(i);
      double w = (i == 0 || i + 1 == ny) ? 0.5 * hy : hy;
      trips.emplace_back(static_cast<int>(lam_id(m)), static_cast<int>(th_id(m, i)),
                         w * kink_dtheta(gam * y));
      trips.emplace_back(static_cast<int>(lam_id(m)), static_cast<int>(ps_id(m, i)),
                         w * (-u * gam * kink_ddtheta(gam * y)));
    }
  }

  Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(n_unk),
                                static_cast<Eigen::Index>(n_unk));
  A.setFromTriplets(trips.begin(), trips.end());
  A.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success)
    throw std::runtime_error("frakM_oracle_compare: sparse factorization failed");
  Eigen::VectorXd x = lu.solve(b);

  double num = 0.0, den = 0.0;
  for (std::size_t m = 0; m < nxi; ++m) {
    for (std::size_t i = 0; i < ny; ++i) {
      double dt_ = mode_sol.theta.at(m, i) - x(static_cast<Eigen::Index>(th_id(m, i)));
      double dp_ = mode_sol.psi.at(m, i) - x(static_cast<Eigen::Index>(ps_id(m, i)));
      num += dt_ * dt_ + dp_ * dp_;
      den += x(static_cast<Eigen::Index>(th_id(m, i))) * x(static_cast<Eigen::Index>(th_id(m, i))) +
             x(static_cast<Eigen::Index>(ps_id(m, i))) * x(static_cast<Eigen::Index>(ps_id(m, i)));
    }
    double dl = mode_sol.lambda[m] - x(static_cast<Eigen::Index>(lam_id(m)));
    num += dl * dl;
    den += x(static_cast<Eigen::Index>(lam_id(m))) * x(static_cast<Eigen::Index>(lam_id(m)));
  }
  return std::sqrt(num / den);
}

// ---------------------------------------------------------------------------
// CSV / gnuplot
// ---------------------------------------------------------------------------

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_csv: cannot open " + path);
  os << header << "\n";
  char buf[32];
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", r[i]);
      os << (i ? "," : "") << buf;
    }
    os << "\n";
  }
}

void write_gnuplot_loglog(const std::string& path, const std::string& csv_name,
                          const std::vector<std::pair<int, std::string>>& columns,
                          const std::string& title) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_gnuplot_loglog: cannot open " + path);
  os << "set datafile separator ','\n"
     << "set logscale xy\n"
     << "set key left top\n"
     << "set xlabel 'eps'\n"
     << "set title '" << title << "'\n"
     << "plot ";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) os << ", ";
    os << "'" << csv_name << "' using 1:" << columns[i].first << " with linespoints title '"
       << columns[i].second << "'";
  }
  os << "\n";
}

std::vector<ScalingRow> run_scaling_study(const ExperimentConfig& cfg,
                                          const std::string& out_dir) {
  fs::create_directories(out_dir);
  ManifoldExpansion exp = build_or_load_manifold(cfg, -1, -1, out_dir + "/manifold");

  std::vector<ScalingRow> rows(cfg.eps_list.size());
  std::vector<TrajectoryRecord> records(cfg.eps_list.size());
  // eps rows are independent; worker pool keeps the output order fixed
  parallel_for(cfg.eps_list.size(), cfg.threads, [&](std::size_t e) {
    rows[e] = run_single_experiment(cfg, exp, cfg.eps_list[e], &records[e]);
  });

  // residual/force rates on the same expansion
  try {
    std::vector<RateRow> rr = residual_rate_study(exp, exp.n, cfg.eps_list, cfg.threads);
    for (std::size_t e = 0; e < rows.size(); ++e) {
      rows[e].r_l2 = rr[e].r_l2;
      rows[e].defect_l2 = rr[e].defect_l2;
      rows[e].lambda_mag = rr[e].lambda_mag;
    }
  } catch (const std::exception& ex) {
    for (auto& r : rows)
      if (r.error.empty()) r.error = std::string("rate study: ") + ex.what();
  }

  // desk-scale sanity: the sup transversal norm should not decrease as eps
  // grows (flagged, not failed)
  for (std::size_t e = 1; e < rows.size(); ++e) {
    if (rows[e - 1].ok && rows[e].ok && rows[e - 1].sup_vw2 < rows[e].sup_vw2)
      std::cerr << "run_scaling_study: sup transversal norm not monotone between eps="
                << rows[e - 1].eps << " and eps=" << rows[e].eps << "\n";
  }

  std::vector<std::vector<double>> csv;
  for (const auto& r : rows)
    csv.push_back({r.eps, r.sup_vw2, r.r_l2, r.defect_l2, r.lambda_mag, r.dev_xi, r.dev_u,
                   r.ok ? 1.0 : 0.0});
  write_csv(out_dir + "/scaling.csv",
            "# sglab scaling-study v1\n"
            "eps,sup_vw2,r_l2,defect_l2,lambda_mag,dev_xi,dev_u,ok",
            csv);
  write_gnuplot_loglog(out_dir + "/scaling.gp", "scaling.csv",
                       {{2, "sup ||v||_H1^2+||w||^2"},
                        {3, "||R_n||"},
                        {4, "pde defect"},
                        {5, "|lambda_n|"},
                        {6, "max|xi-xi_hat|"},
                        {7, "max|u-eps^b u_hat|"}},
                       "eps-scaling laws");

  for (std::size_t e = 0; e < records.size(); ++e) {
    const auto& rec = records[e];
    std::vector<std::vector<double>> rcsv;
    for (std::size_t i = 0; i < rec.t.size(); ++i)
      rcsv.push_back({rec.t[i], rec.xi[i], rec.u[i], rec.v_h1[i], rec.w_l2[i], rec.N1[i],
                      rec.N2[i], rec.L_eps[i], rec.H[i], rec.Pi[i], rec.H_eps[i]});
    char name[64];
    std::snprintf(name, sizeof name, "run_eps_%g.csv", cfg.eps_list[e]);
    write_csv(out_dir + "/" + name,
              "# sglab trajectory v1\nt,xi,u,v_h1,w_l2,N1,N2,L_eps,H,Pi,H_eps", rcsv);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Validation suite (acceptance criteria)
// ---------------------------------------------------------------------------

bool ValidationReport::all_pass() const {
  for (const auto& r : results)
    if (!r.pass) return false;
  return true;
}

std::string ValidationReport::table() const {
  std::ostringstream os;
  for (const auto& r : results)
    os << (r.pass ? "[PASS] " : "[FAIL] ") << "criterion " << r.id << ": " << r.name << " — "
       << r.measured << "\n";
  os << (all_pass() ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED") << "\n";
  return os.str();
}

ValidationReport validate(const ExperimentConfig& cfg_in, const std::string& out_dir) {
  fs::create_directories(out_dir);
  ValidationReport rep;
  auto push = [&](int id, const std::string& name, bool pass, const std::string& measured) {
    rep.results.push_back({id, name, measured, pass});
  };

  // --- 1: kernel eigenpair -------------------------------------------------
  {
    Grid1D g = make_grid(40.0, 4096, Boundary::dirichlet_decay);
    SymBanded L = build_L({0.0, 0.0}, g);
    EigenPairs ep = sym_banded_eigs(L, 2, false);
    double lam0 = ep.values[0];
    Field vec = banded_inverse_iteration(L, lam0);
    Field sech(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) sech[i] = 1.0 / std::cosh(g.node(i));
    double num = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < g.n_points; ++i) {
      num += vec[i] * sech[i];
      na += vec[i] * vec[i];
      nb += sech[i] * sech[i];
    }
    double cosim = std::abs(num) / std::sqrt(na * nb);
    bool pass = std::abs(lam0) < 1e-6 && cosim > 1.0 - 1e-8;
    push(1, "kernel eigenpair of -d2/dZ2 + cos theta_K", pass,
         fmt("lambda0 = %.3e, cos-sim = 1 - %.3e", lam0, 1.0 - cosim));
  }

  // --- 2: continuum edge ---------------------------------------------------
  {
    double l2[3];
    double hw[3] = {20.0, 40.0, 80.0};
    std::size_t np[3] = {2048, 4096, 8192};
    for (int d = 0; d < 3; ++d) {
      Grid1D g = make_grid(hw[d], np[d], Boundary::dirichlet_decay);
      l2[d] = eigen_spectrum(build_L({0.0, 0.0}, g), 2)[1];
    }
    bool pass = l2[0] >= 0.95 && l2[1] >= 0.95 && l2[2] >= 0.95 &&
                std::abs(l2[2] - 1.0) < std::abs(l2[0] - 1.0) && std::abs(l2[2] - 1.0) < 0.01;
    push(2, "continuum edge approaches 1 under domain growth", pass,
         fmt("lambda1 = %.6f / %.6f / %.6f", l2[0], l2[1], l2[2]));
  }

  // --- 3: unperturbed conservation -----------------------------------------
  {
    Grid1D g = make_grid(40.0, 8192, Boundary::dirichlet_decay);
    SimState s;
    s.grid = g;
    s.eps = 0.0;
    s.F = make_perturbation("zero", 0.0, 0);
    s.fields = soliton_pair({-10.0, 0.2}, g);
    Functionals f0 = functionals(s);
    Trajectory tr = simulate(s, 50.0, 1e-3, {}, 0, false);
    Functionals f1 = functionals(tr.states.back());
    double hdrift = std::abs(f1.H - f0.H) / std::abs(f0.H);
    double pdrift = std::abs(f1.Pi - f0.Pi) / std::max(1e-12, std::abs(f0.Pi));
    FieldPair ref = soliton_pair({-10.0 + 0.2 * tr.states.back().t, 0.2}, g);
    Field diff(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i)
      diff[i] = tr.states.back().fields.theta[i] - ref.theta[i];
    double shape = sobolev_norm(diff, g, {0, 0});
    bool pass = hdrift < 1e-6 && pdrift < 1e-6 && shape < 1e-4;
    push(3, "H and Pi conserved over T=50; travelling-wave shape", pass,
         fmt("H drift %.3e, Pi drift %.3e, L2 shape error %.3e", hdrift, pdrift, shape));
  }

  // --- main expansions ------------------------------------------------------
  ExperimentConfig cfg = cfg_in;
  ManifoldExpansion exp_k0 =
      build_or_load_manifold(cfg, 2, 0, out_dir + "/manifold-n2-k0");
  ManifoldExpansion exp_k1 =
      build_or_load_manifold(cfg, 2, 1, out_dir + "/manifold-n2-k1");
  Grid1D g = cfg.pde_grid();

  // --- 4: Lemma 4.4 identity -----------------------------------------------
  {
    double worst = 0.0;
    double m = soliton_mass(g);
    int count = 0;
    for (double eps : {0.0, 0.02, 0.05, 0.1}) {
      for (double xi : {-1.0, 0.0, 1.5}) {
        for (double u : {0.0, 0.45 * exp_k0.u_samples.back(), -0.8 * exp_k0.u_samples.back()}) {
          if (count >= 20) break;
          auto [m_n, k_n] = overlap_coefficients({xi, u}, exp_k0, eps, g);
          double g3m = std::pow(lorentz_gamma(u), 3) * m;
          worst = std::max(worst, std::abs(m_n - g3m - k_n));
          ++count;
        }
      }
    }
    push(4, "overlap identity m_n = gamma^3 m + k_n", worst < 1e-8,
         fmt("max deviation %.3e over %g samples", worst, static_cast<double>(count)));
  }

  // --- 5: Lemma 8.2 identity -----------------------------------------------
  {
    std::mt19937 rng(20240811u);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      double xi = 2.0 * uni(rng);
      double u = 0.5 * uni(rng);
      Field v(g.n_points), w(g.n_points);
      double a1 = uni(rng), a2 = uni(rng), p1 = 3.0 * uni(rng), p2 = 3.0 * uni(rng);
      for (std::size_t i = 0; i < g.n_points; ++i) {
        double x = g.node(i);
        v[i] = a1 * std::exp(-0.3 * (x - p1) * (x - p1)) * std::cos(x);
        w[i] = a2 * std::exp(-0.25 * (x - p2) * (x - p2)) * std::sin(0.7 * x);
      }
      EnergyBreakdown eb = lyapunov_evaluate(v, w, {xi, u}, exp_k0, 0.0, g);
      worst = std::max(worst, std::abs(eb.E - eb.L_aux));
    }
    push(5, "functional identity E = L_aux", worst < 1e-12, fmt("max |E - L_aux| = %.3e", worst));
  }

  // --- 6: first-order force oracle -----------------------------------------
  {
    const Grid2D& g2 = exp_k0.grid;
    std::size_t iu0 = 0;
    for (std::size_t i = 0; i < exp_k0.u_samples.size(); ++i)
      if (std::abs(exp_k0.u_samples[i]) < 1e-14) iu0 = i;
    const auto& lam = exp_k0.coeff[0][iu0].lambda;
    double m = soliton_mass(g2.x_grid);
    double worst_rel = 0.0;
    double max_mag = 0.0;
    std::vector<double> oracle(g2.xi_grid.n_points);
    for (std::size_t mm = 0; mm < g2.xi_grid.n_points; ++mm) {
      double xi = g2.xi_grid.node(mm);
      Field prod(g2.x_grid.n_points);
      for (std::size_t i = 0; i < g2.x_grid.n_points; ++i) {
        double y = g2.x_grid.node(i);
        prod[i] = exp_k0.F.amplitude * exp_k0.F.f(y + xi) * kink_dtheta(y);
      }
      oracle[mm] = -exp_k0.chi.samples[mm] * integrate(prod, g2.x_grid) / m;
      max_mag = std::max(max_mag, std::abs(oracle[mm]));
    }
    for (std::size_t mm = 0; mm < g2.xi_grid.n_points; ++mm) {
      double denom = std::max(std::abs(oracle[mm]), 1e-8 * max_mag);
      worst_rel = std::max(worst_rel, std::abs(lam[mm] - oracle[mm]) / denom);
    }
    push(6, "first-order force matches the kernel-pairing oracle", worst_rel < 1e-4,
         fmt("max relative deviation %.3e (max |lambda^{(1)}| = %.3e)", worst_rel, max_mag));
  }

  // --- 7 & 8: residual, defect and force rates ------------------------------
  {
    struct Case {
      const ManifoldExpansion* exp;
      int depth, k;
    };
    std::vector<Case> cases = {{&exp_k0, 1, 0}, {&exp_k0, 2, 0}, {&exp_k1, 2, 1}};
    bool pass7 = true, pass8 = true;
    std::string m7, m8;
    for (const auto& cse : cases) {
      std::vector<RateRow> rows =
          residual_rate_study(*cse.exp, cse.depth, cfg.eps_list, cfg.threads);
      std::vector<std::pair<double, double>> pr, pd, pl;
      for (const auto& r : rows) {
        pr.emplace_back(r.eps, r.r_l2);
        pd.emplace_back(r.eps, r.defect_l2);
        pl.emplace_back(r.eps, r.lambda_mag);
      }
      double target = cse.depth + cse.k + 1;
      SlopeFit fr_ = fit_slope(pr), fd_ = fit_slope(pd), fl_ = fit_slope(pl);
      pass7 = pass7 && std::abs(fr_.slope - target) < 0.15 && std::abs(fd_.slope - target) < 0.15;
      pass8 = pass8 && std::abs(fl_.slope - (cse.k + 1)) < 0.1;
      m7 += fmt("(n=%g,k=%g): R %.3f", cse.depth, cse.k, fr_.slope) +
            fmt(" defect %.3f; ", fd_.slope);
      m8 += fmt("(n=%g,k=%g): %.3f; ", cse.depth, cse.k, fl_.slope);

      std::vector<std::vector<double>> csv;
      for (const auto& r : rows) csv.push_back({r.eps, r.r_l2, r.defect_l2, r.lambda_mag});
      char name[64];
      std::snprintf(name, sizeof name, "rates_n%d_k%d.csv", cse.depth, cse.k);
      write_csv(out_dir + "/" + name, "# sglab rates v1\neps,r_l2,defect_l2,lambda_mag", csv);
      write_gnuplot_loglog(out_dir + "/" + std::string(name) + ".gp", name,
                           {{2, "||R_n||"}, {3, "defect"}, {4, "|lambda|"}}, "residual rates");
    }
    push(7, "residual and defect rates eps^{n+k+1}", pass7, m7);
    push(8, "force rate eps^{k+1}", pass8, m8);
  }

  // --- 9 & 10: main-theorem scaling ----------------------------------------
  {
    ManifoldExpansion exp_n1 = truncate_expansion(exp_k0, 1);
    std::vector<ScalingRow> rows(cfg.eps_list.size());
    ExperimentConfig c1 = cfg;
    c1.n = 1;
    c1.k = 0;
    bool all_ok = true;
    for (std::size_t e = 0; e < cfg.eps_list.size(); ++e) {
      rows[e] = run_single_experiment(c1, exp_n1, cfg.eps_list[e], nullptr);
      all_ok = all_ok && rows[e].ok;
    }
    std::string err;
    if (!all_ok)
      for (const auto& r : rows)
        if (!r.ok) err += r.error + "; ";

    std::vector<std::pair<double, double>> pv, px, pu;
    for (const auto& r : rows)
      if (r.ok) {
        pv.emplace_back(r.eps, r.sup_vw2);
        px.emplace_back(r.eps, r.dev_xi);
        pu.emplace_back(r.eps, r.dev_u);
      }
    if (all_ok) {
      SlopeFit fv = fit_slope(pv), fx = fit_slope(px), fu = fit_slope(pu);
      bool pass9 = std::abs(fv.slope - 2.0) < 0.3;
      // Lemma-9.5-type criterion: the deviations stay inside the eps^n and
      // eps^{n+beta} envelopes (slope at least the envelope exponent, and
      // the envelope constant calibrated at the largest eps holds across
      // the list). Faster measured decay verifies the bound with margin.
      double cx = px.front().second / std::pow(px.front().first, 1.0);
      double cu = pu.front().second / std::pow(pu.front().first, 1.5);
      bool envelope = true;
      for (std::size_t e = 0; e < px.size(); ++e) {
        envelope = envelope && px[e].second <= 1.5 * cx * std::pow(px[e].first, 1.0);
        envelope = envelope && pu[e].second <= 1.5 * cu * std::pow(pu[e].first, 1.5);
      }
      bool pass10 = fx.slope >= 1.0 - 0.3 && fu.slope >= 1.5 - 0.3 && envelope;
      push(9, "transversal bound sup ||v||^2+||w||^2 = O(eps^{2n})", pass9,
           fmt("slope %.3f (r2 %.4f)", fv.slope, fv.r2));
      push(10, "parameter tracking within the exact-ODE envelopes", pass10,
           fmt("xi slope %.3f (envelope n=1), u slope %.3f (envelope n+beta=1.5)", fx.slope,
               fu.slope));
      std::vector<std::vector<double>> csv;
      for (const auto& r : rows)
        csv.push_back({r.eps, r.sup_vw2, r.dev_xi, r.dev_u});
      write_csv(out_dir + "/main_scaling.csv", "# sglab main-theorem v1\neps,sup_vw2,dev_xi,dev_u",
                csv);
      write_gnuplot_loglog(out_dir + "/main_scaling.gp", "main_scaling.csv",
                           {{2, "sup vw^2"}, {3, "dev xi"}, {4, "dev u"}}, "main theorem scaling");
    } else {
      push(9, "transversal bound sup ||v||^2+||w||^2 = O(eps^{2n})", false, "run failed: " + err);
      push(10, "parameter tracking against the exact ODE", false, "run failed: " + err);
    }
  }

  // --- 11: Gronwall harness -------------------------------------------------
  {
    bool pass = true;
    std::string msg;
    for (double delta : {1e-6, 1e-4}) {
      GronwallReport gr = gronwall_compare(
          exp_k0, 0.05, 0.0, 0.2, 1.0, 1e-3, [delta](double) { return delta; },
          [delta](double) { return delta; });
      pass = pass && gr.within_bound;
      msg += fmt("delta %.0e: dev %.3e <= bound %.3e; ", delta,
                 std::max(gr.max_dev_xi, gr.max_dev_u), gr.bound);
    }
    push(11, "Gronwall bound respected for injected defects", pass, msg);
  }

  // --- 12: coercivity --------------------------------------------------------
  {
    bool pass = true;
    double cmin = 1e300;
    double ucap = exp_k0.u_samples.back();
    Grid1D gc = make_grid(40.0, 1024, Boundary::dirichlet_decay);
    for (double eps : {0.0, 0.01}) {
      for (double xi : {0.0, 1.0, -1.0}) {
        for (double uraw : {0.0, 0.1, -0.1, 0.2, -0.2}) {
          double u = eps == 0.0 ? uraw : std::clamp(uraw, -0.95 * ucap, 0.95 * ucap);
          double c = coercivity_constant({xi, u}, exp_k0, eps, gc, 60);
          cmin = std::min(cmin, c);
          pass = pass && c > 0.0;
        }
      }
    }
    Grid1D g8 = make_grid(40.0, 8192, Boundary::dirichlet_decay);
    double eker = std::max({kernel_direction_energy({0.0, 0.0}, g8),
                            kernel_direction_energy({1.0, 0.15}, g8),
                            kernel_direction_energy({-1.0, -0.2}, g8)});
    pass = pass && std::abs(eker) < 1e-8;
    push(12, "coercivity constant positive; kernel direction degenerate", pass,
         fmt("min c = %.4f, kernel E = %.3e", cmin, eker));
  }

  // --- 13: oracle equivalence ------------------------------------------------
  {
    Grid2D coarse;
    coarse.xi_grid = make_grid(20.0, 64, Boundary::periodic);
    coarse.x_grid = make_grid(20.0, 256, Boundary::dirichlet_decay);
    double rel = frakM_oracle_compare(0.08, coarse, cfg.threads);
    push(13, "mode-decoupled solve matches the direct sparse solve", rel < 1e-6,
         fmt("relative difference %.3e", rel));
  }

  std::ofstream os(out_dir + "/validate_report.txt");
  os << rep.table();
  return rep;
}

}  // namespace sglab

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sglab/grid.hpp"
#include "sglab/kink.hpp"
#include "sglab/linop.hpp"

namespace sglab {

// ---------------------------------------------------------------------------
// Perturbation and cutoff
// ---------------------------------------------------------------------------

// Canonical perturbation family F(eps, x) = eps^{k+1} * amplitude * f(x):
// the first k eps-derivatives vanish at 0.
struct PerturbationSpec {
  int k = 0;
  std::string profile_id = "sech";  // sech | sech2 | gauss | zero
  double amplitude = 1.0;
  std::function<double(double)> f;  // profile (amplitude excluded)

  double force_factor(double eps) const;        // eps^{k+1} * amplitude
  Field force(double eps, const Grid1D& g) const;  // F(eps, .) sampled on g
  Field profile_samples(const Grid1D& g) const;
};

PerturbationSpec make_perturbation(const std::string& profile_id, double amplitude, int k);

// d^l/d eps^l F(0, .) sampled on g; zero for l <= k, (k+1)! * amplitude * f
// at l = k+1 and zero above (canonical family).
Field perturbation_deriv(const PerturbationSpec& F, int l, const Grid1D& g);

// Smooth cutoff chi(xi): 1 on |xi| <= Xi, 0 on |xi| >= Xi+1, Xi = |xi_s|+3,
// with the exp(-1/t) mollifier transition.
struct CutoffProfile {
  double xi_s = 0.0;
  double Xi = 3.0;
  Grid1D xi_grid;
  Field samples;

  double value(double xi) const;
};

CutoffProfile make_cutoff(double xi_s, const Grid1D& xi_grid);

// ---------------------------------------------------------------------------
// Virtual solitary manifold: Taylor coefficients in eps
// ---------------------------------------------------------------------------

// Raw eps-derivatives at 0 of the hat corrections,
// c_j = d^j/d eps^j (theta_hat, psi_hat, lambda)(0), stored in co-moving
// coordinates (xi, y = x - xi) per velocity sample. The assembled state is
// theta_0 + sum_j eps^j c_j / j!.
struct ManifoldExpansion {
  int n = 0;
  int k = 0;
  Grid2D grid;
  std::vector<double> u_samples;  // Chebyshev-Gauss-Lobatto in [-u_cap, u_cap]
  PerturbationSpec F;
  CutoffProfile chi;

  struct Coeff {
    Array2D theta;
    Array2D psi;
    std::vector<double> lambda;
  };
  // coeff[j-1][iu] for order j = 1..n
  std::vector<std::vector<Coeff>> coeff;
  std::vector<double> solve_residuals;  // per order, max over u samples
  double newton_eps_max = 0.0;          // largest eps with converged refinement (0 = untried)

  std::size_t n_xi() const { return grid.xi_grid.n_points; }
  std::size_t n_y() const { return grid.x_grid.n_points; }

  // full-width differentiation weights in u at sample iu
  std::vector<double> u_deriv_weights(std::size_t iu, int order) const;

  // interpolated hat corrections at parameters (eps, xi, u), evaluated at
  // y-offsets x_i - xi of the target grid; depth override <= n; du = 1
  // differentiates the u-interpolant instead
  void hat_at(double eps, double xi, double u, const Grid1D& g, Field& theta_hat,
              Field& psi_hat, int depth = -1, int du = 0) const;

  double lambda_hat_at(double eps, double xi, double u, int depth = -1) const;
};

// Order-by-order construction: solves the linearized equations with
// Faa di Bruno sine-expansion right-hand sides per mode (see taylor notes in
// the implementation).
ManifoldExpansion taylor_coefficients(int n, const PerturbationSpec& F, const CutoffProfile& chi,
                                      const std::vector<double>& u_samples, const Grid2D& g2,
                                      int threads = 1);

// theta_0 + Taylor sum at (xi, u), cubic interpolation between samples.
FieldPair evaluate_virtual_soliton(const ManifoldExpansion& exp, double eps,
                                   const SolitonParams& p, const Grid1D& g, int depth = -1);

double lambda_n(const ManifoldExpansion& exp, double eps, double xi, double u, int depth = -1);

// ---------------------------------------------------------------------------
// Newton refinement and residual diagnostics
// ---------------------------------------------------------------------------

// One family member at fixed (eps, u): hat fields over the (xi, y) grid.
struct FamilyState {
  std::size_t iu = 0;  // index into exp.u_samples
  double u = 0.0;
  Array2D theta_hat;
  Array2D psi_hat;
  std::vector<double> lambda;
  bool refined = false;
  int newton_iters = 0;
  double residual = 0.0;  // L2 norm of the G-residual over the (xi,y) grid
};

// Taylor assembly of the hat fields at (eps, u-sample iu).
FamilyState assemble_family_state(const ManifoldExpansion& exp, double eps, std::size_t iu,
                                  int depth = -1);

// Simplified-Newton solve of G_n^eps = 0 starting from the Taylor assembly;
// each step solves with the frozen mode-decoupled linearization. Throws on
// non-convergence (eps outside the validity range).
FamilyState newton_refine(const ManifoldExpansion& exp, double eps, std::size_t iu,
                          const FrakMSolver& solver, double tol = 1e-10, int max_iters = 12,
                          int depth = -1);

// G-residual of a candidate family state (the defect of the iteration
// equation, not of the PDE).
double iteration_residual(const ManifoldExpansion& exp, double eps, const FamilyState& st,
                          int depth = -1);

// Family across u samples at one eps (refined when requested).
struct VirtualFamily {
  double eps = 0.0;
  int depth = 0;
  std::vector<std::size_t> iu;  // indices into exp.u_samples
  std::vector<FamilyState> states;
  bool refined = false;
};

VirtualFamily build_family(const ManifoldExpansion& exp, double eps,
                           const std::vector<std::size_t>& iu_list, bool refine,
                           int threads = 1, int depth = -1);

struct ResidualReport {
  double eps = 0.0;
  double r1_l2 = 0.0, r2_l2 = 0.0;      // components of R_n^eps in L^2
  double r1_w = 0.0, r2_w = 0.0;        // weighted (alpha = 1) norms
  double defect1_l2 = 0.0, defect2_l2 = 0.0;  // PDE defect components
  double defect_l2 = 0.0;               // combined
  double r_l2 = 0.0;                    // combined
};

// R_n^eps = lambda * d/du (Taylor_{n-1} - assembled state) at a grid xi-node
// and u-sample; the family supplies the u-stencil.
ResidualReport residual_Rn(const ManifoldExpansion& exp, const VirtualFamily& fam,
                           std::size_t xi_index, std::size_t fam_iu);

// Left side of the travelling-defect identity (without R_n) at the same
// point, evaluated with the same discrete operators; its norm must match
// ||R_n|| up to the solver tolerance.
ResidualReport pde_defect(const ManifoldExpansion& exp, const VirtualFamily& fam,
                          std::size_t xi_index, std::size_t fam_iu);

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void save_manifold(const ManifoldExpansion& exp, const std::string& dir);
ManifoldExpansion load_manifold(const std::string& dir);

}  // namespace sglab

#pragma once

#include <complex>
#include <memory>
#include <string>
#include <vector>

#include "sglab/banded.hpp"
#include "sglab/grid.hpp"
#include "sglab/kink.hpp"

namespace sglab {

// ---------------------------------------------------------------------------
// 1-D operators on the x grid
// ---------------------------------------------------------------------------

// L_{xi,u} = -(1-u^2) d^2/dx^2 + cos(theta_K(gamma(x-xi))), discretized with
// the 4th-order central stencil and zero (decay) extension beyond the grid,
// so the matrix is exactly symmetric banded.
SymBanded build_L(const SolitonParams& p, const Grid1D& g);

// Free comparison operator -(1-u^2) d2/dx2 + 1.
SymBanded build_free(double u, const Grid1D& g);

// n smallest eigenvalues, ascending.
std::vector<double> eigen_spectrum(const SymBanded& op, int n_eigs);

// Bordered extension: solve core*theta + lambda*border = rhs subject to
// <constraint_row, theta>_{L^2(g)} = constraint_value, by banded LU block
// elimination with one step of iterative refinement.
struct BorderedSystem {
  SymBanded core;
  Field border_column;
  Field constraint_row;
  Grid1D grid;
};

struct BorderedSolution {
  Field theta;
  double lambda = 0.0;
  double residual = 0.0;  // ||core*theta + lambda*border - rhs|| / ||rhs||
};

BorderedSolution solve_bordered(const BorderedSystem& sys, const Field& rhs,
                                double constraint_value = 0.0);

// ---------------------------------------------------------------------------
// Fourier-in-xi mode problems for the 2-D operator of the iteration scheme
// ---------------------------------------------------------------------------

// xi-major 2-D sample container: v[m * n_y + i] = f(xi_m, y_i).
struct Array2D {
  std::size_t n_xi = 0;
  std::size_t n_y = 0;
  std::vector<double> v;

  Array2D() = default;
  Array2D(std::size_t nxi, std::size_t ny) : n_xi(nxi), n_y(ny), v(nxi * ny, 0.0) {}
  double& at(std::size_t m, std::size_t i) { return v[m * n_y + i]; }
  double at(std::size_t m, std::size_t i) const { return v[m * n_y + i]; }
};

// Symbol of the 4th-order periodic central first difference at integer
// frequency freq on the xi grid (purely imaginary).
cplx xi_derivative_symbol(int freq, const Grid1D& xi_grid);

// One Fourier mode of the 2-D operator, in the co-moving coordinate
// y = x - xi:
//   (theta, psi) |-> ( u*(s - d/dy) theta - psi,
//                      -d2/dy2 theta + cos(theta_K(gamma y)) theta
//                        + u*(s - d/dy) psi )  + lambda * t2(y)
// with s the xi-derivative symbol, subject to
// <(theta,psi), (theta_K'(gamma y), -u gamma theta_K''(gamma y))> = 0.
class ModeProblem {
 public:
  ModeProblem(int freq, double u, const Grid2D& g2);

  int freq() const { return freq_; }
  double u() const { return u_; }
  const Grid1D& y_grid() const { return y_grid_; }
  cplx symbol() const { return sym_; }

  // interleaved (theta_0, psi_0, theta_1, psi_1, ...) application of the
  // core (border excluded)
  std::vector<cplx> apply_core(const std::vector<cplx>& z) const;
  const std::vector<cplx>& border() const { return border_; }       // interleaved
  const std::vector<cplx>& constraint() const { return weight_row_; }  // quadrature-weighted

  // factor once, then solve many right-hand sides (interleaved rhs)
  void factor();
  bool factored() const { return factored_ != nullptr; }
  void solve(const std::vector<cplx>& rhs, std::vector<cplx>& z_out, cplx& lambda_out) const;

  std::size_t dim() const { return 2 * y_grid_.n_points; }

 private:
  int freq_;
  double u_;
  cplx sym_;
  Grid1D y_grid_;
  std::vector<cplx> border_;
  std::vector<cplx> weight_row_;
  std::shared_ptr<ComplexBandedLU> factored_;
  std::vector<cplx> border_solve_;  // A^{-1} b, cached at factor time
};

ModeProblem build_frakM_mode(int freq, double u, const Grid2D& g2);

// Bank of factored mode problems for one velocity sample: the half spectrum
// 0..n_xi/2 (real data; negative frequencies by conjugate symmetry).
class FrakMSolver {
 public:
  FrakMSolver(double u, const Grid2D& g2, int threads = 1);

  struct Solution {
    Array2D theta;
    Array2D psi;
    std::vector<double> lambda;  // on the xi grid
    double aliased_energy_fraction = 0.0;  // of rhs, in the top 10% of xi frequencies
  };

  Solution solve(const Array2D& rhs_theta, const Array2D& rhs_psi) const;

  // Applies the full 2-D operator (for residual checks):
  //   out = Op(theta, psi) + lambda * t2  evaluated on the grid.
  void apply(const Array2D& theta, const Array2D& psi, const std::vector<double>& lambda,
             Array2D& out_theta, Array2D& out_psi) const;

  double u() const { return u_; }
  const Grid2D& grid() const { return g2_; }

 private:
  double u_;
  Grid2D g2_;
  int threads_;
  std::vector<ModeProblem> modes_;  // freq = 0 .. n_xi/2
};

// Applies the 2-D operator without factoring anything (shared by the solver
// and by residual diagnostics).
void frakM_apply(double u, const Grid2D& g2, const Array2D& theta, const Array2D& psi,
                 const std::vector<double>& lambda, Array2D& out_theta, Array2D& out_psi);

// Relative residual of the 2-D operator equation for a candidate solution.
double frakM_residual(const FrakMSolver& solver, const Array2D& theta, const Array2D& psi,
                      const std::vector<double>& lambda, const Array2D& rhs_theta,
                      const Array2D& rhs_psi);

// ---------------------------------------------------------------------------
// Invertibility threshold
// ---------------------------------------------------------------------------

struct UStarDiagnostics {
  std::vector<double> u_samples;
  std::vector<double> products;  // ||P|| * ||Mtilde^{-1}|| per sample
  double u_star = 0.0;
};

// Largest u for which the graded-norm product ||P|| * ||Mtilde^{-1}|| stays
// below 1 with a 10% margin; conservative fallback 0.2. Cached.
double estimate_u_star();
UStarDiagnostics estimate_u_star_diagnostics();

}  // namespace sglab

#pragma once

#include "sglab/grid.hpp"
#include "sglab/kink.hpp"
#include "sglab/manifold.hpp"

namespace sglab {

// Manifold point and tangent frame at parameters (xi, u): closed forms for
// the classical part plus differences of the assembled corrections.
struct ManifoldFrame {
  FieldPair S;   // (theta_n, psi_n)(xi, u, .)
  FieldPair t1;  // d/dxi
  FieldPair t2;  // d/du
};

ManifoldFrame manifold_frame(const ManifoldExpansion& exp, double eps, const SolitonParams& p,
                             const Grid1D& g);

// N_i = Omega(t_i, (theta,psi) - S)
std::pair<double, double> orthogonality_residual(const Field& theta, const Field& psi,
                                                 const SolitonParams& p,
                                                 const ManifoldExpansion& exp, double eps,
                                                 const Grid1D& g);

// m_n by its integral definition and k_n from the hat-correction pairing.
std::pair<double, double> overlap_coefficients(const SolitonParams& p,
                                               const ManifoldExpansion& exp, double eps,
                                               const Grid1D& g);

// D_{xi,u} N at (xi, u) for a given ambient state: (gamma^3 m + k_n) J plus
// the displacement corrections.
struct Jacobian2 {
  double a11 = 0, a12 = 0, a21 = 0, a22 = 0;
  double det() const { return a11 * a22 - a12 * a21; }
};

Jacobian2 jacobian_N(const Field& theta, const Field& psi, const SolitonParams& p,
                     const ManifoldExpansion& exp, double eps, const Grid1D& g);

struct DecompOptions {
  double tol = 1e-10;           // on max(|N1|,|N2|) / (gamma^3 m)
  int max_iters = 40;
  int max_halvings = 6;
  double strip_xi = 0.0;        // 0: use cutoff plateau Xi - 1
  double strip_u = 0.0;         // 0: use the sampled u range
  double tube_radius = 0.3;     // accepted |v|_Linf + |w|_L2 distance
};

struct DecompositionResult {
  SolitonParams params;
  Field v, w;
  int newton_iters = 0;
  double residual[2] = {0.0, 0.0};
  bool converged = false;
  bool strip_exit = false;
};

// Damped Newton for N = 0 from a guess; v, w by subtraction.
DecompositionResult project(const Field& theta, const Field& psi, const SolitonParams& guess,
                            const ManifoldExpansion& exp, double eps, const Grid1D& g,
                            const DecompOptions& opt = {});

}  // namespace sglab

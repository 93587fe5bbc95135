#pragma once

#include <vector>

#include "sglab/decomp.hpp"
#include "sglab/grid.hpp"
#include "sglab/manifold.hpp"

namespace sglab {

struct EnergyBreakdown {
  double L_eps = 0.0;  // with cos(theta_n^eps)
  double L_aux = 0.0;  // with cos(theta_K(gamma(x-xi)))
  double E = 0.0;      // 1/2 integral (w + u v_x)^2 + v_Z^2 + cos(theta_K) v^2
  double term_w2 = 0.0, term_dv2 = 0.0, term_cos = 0.0, term_cross = 0.0;
};

EnergyBreakdown lyapunov_evaluate(const Field& v, const Field& w, const SolitonParams& p,
                                  const ManifoldExpansion& exp, double eps, const Grid1D& g);

// Smallest generalized Rayleigh quotient of E against ||v||_{H1}^2 + ||w||^2
// on the subspace N2_check = 0, in a reduced spectral basis.
double coercivity_constant(const SolitonParams& p, const ManifoldExpansion& exp, double eps,
                           const Grid1D& g, int n_modes = 60);

// E evaluated on the normalized kernel direction
// (theta_K'(gamma(x-xi)), -u gamma theta_K''(gamma(x-xi))); degenerate to
// quadrature accuracy.
double kernel_direction_energy(const SolitonParams& p, const Grid1D& g);

// Lemma-style dL/dt formula from decomposed snapshots, compared against
// centered differences of L_eps(t).
struct DLdtSeries {
  std::vector<double> t;
  std::vector<double> formula;
  std::vector<double> finite_difference;
};

DLdtSeries dLdt_check(const std::vector<double>& times,
                      const std::vector<DecompositionResult>& decomps,
                      const ManifoldExpansion& exp, double eps, const Grid1D& g);

}  // namespace sglab

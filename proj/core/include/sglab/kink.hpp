#pragma once

#include <cmath>
#include <utility>

#include "sglab/grid.hpp"

namespace sglab {

// Closed-form classical kink data. theta_K(Z) = 4 arctan(e^Z) connects 0 to
// 2*pi; theta_K'' = sin(theta_K) and cos(theta_K) = 1 - 2 sech^2.

struct KinkProfile {
  double theta;    // theta_K(Z)
  double dtheta;   // theta_K'(Z)  = 2 sech Z
  double ddtheta;  // theta_K''(Z) = -2 sech Z tanh Z
};

KinkProfile kink_profile(double Z);

inline double kink_theta(double Z) { return 4.0 * std::atan(std::exp(Z)); }
inline double kink_dtheta(double Z) { return 2.0 / std::cosh(Z); }
inline double kink_ddtheta(double Z) { return -2.0 / std::cosh(Z) * std::tanh(Z); }
inline double kink_cos_theta(double Z) {
  double s = 1.0 / std::cosh(Z);
  return 1.0 - 2.0 * s * s;
}
inline double kink_sin_theta(double Z) { return kink_ddtheta(Z); }

double lorentz_gamma(double u);

struct SolitonParams {
  double xi = 0.0;
  double u = 0.0;
};

// Boosted soliton (theta_0, psi_0)(xi, u, x) sampled on g.
FieldPair soliton_pair(const SolitonParams& p, const Grid1D& g);

// Closed-form tangent vectors t1 = d/dxi (theta_0, psi_0),
// t2 = d/du (theta_0, psi_0).
std::pair<FieldPair, FieldPair> tangent_vectors(const SolitonParams& p, const Grid1D& g);

// Pointwise closed forms of the tangent components in Z = gamma*(x - xi).
double t1_theta(double u, double y);  // -gamma theta_K'(Z)
double t1_psi(double u, double y);    //  u gamma^2 theta_K''(Z)
double t2_theta(double u, double y);  //  u gamma^3 y theta_K'(Z)
double t2_psi(double u, double y);    // -gamma^3 theta_K'(Z) - u^2 gamma^4 y theta_K''(Z)

// Quadrature constants of the kink on a given grid, computed once and cached
// per grid so every pairing shares the same quadrature.
struct KinkConstants {
  double mass;          // m = integral theta_K'(Z)^2 dZ ~= 8
  double mass_second;   // integral theta_K''(Z)^2 dZ ~= 8/3
};

KinkConstants kink_constants(const Grid1D& g);

// m on the active grid (cached).
double soliton_mass(const Grid1D& g);

}  // namespace sglab

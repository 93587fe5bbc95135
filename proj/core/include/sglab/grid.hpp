#pragma once

#include <cstddef>
#include <vector>

namespace sglab {

using Field = std::vector<double>;

enum class Boundary { periodic, dirichlet_decay };

// Uniform grid on [-half_width, half_width].
// periodic: nodes x_i = -L + i*h, h = 2L/n (right endpoint excluded).
// dirichlet_decay: nodes include both endpoints, h = 2L/(n-1).
struct Grid1D {
  double half_width = 0.0;
  std::size_t n_points = 0;
  double spacing = 0.0;
  Boundary boundary = Boundary::dirichlet_decay;

  double node(std::size_t i) const { return -half_width + static_cast<double>(i) * spacing; }
  std::vector<double> nodes() const;
  bool operator==(const Grid1D&) const = default;
};

Grid1D make_grid(double half_width, std::size_t n_points, Boundary boundary);

// (xi, x) product grid; xi is the manifold parameter direction, x the
// spatial (co-moving) direction. Used by the manifold constructor only.
struct Grid2D {
  Grid1D xi_grid;
  Grid1D x_grid;
  bool operator==(const Grid2D&) const = default;
};

// 4th-order finite differences; order 1 or 2. Periodic grids wrap, decay
// grids switch to one-sided 4th-order stencils at the edges.
Field derivative(const Field& f, const Grid1D& g, int order);

// Trapezoid rule (uniform weights on periodic grids).
double integrate(const Field& f, const Grid1D& g);

double inner_product(const Field& a, const Field& b, const Grid1D& g);

// Weighted Sobolev norm parameters: |(1+x^2)^{alpha/2} f|_{H^k}-type norm,
// discretized as sum_{j<=k} ||(1+x^2)^{alpha/2} d^j f||_{L^2}^2.
struct WeightSpec {
  int k = 0;      // 0..3
  int alpha = 0;  // 0 or 1
};

double sobolev_norm(const Field& f, const Grid1D& g, const WeightSpec& w);

// A first-order-system state (theta, psi) sampled on one grid.
struct FieldPair {
  Field theta;
  Field psi;
};

// Symplectic form Omega(a, b) = integral(psi_a * theta_b - theta_a * psi_b).
// Bilinear, exactly antisymmetric under the shared quadrature.
double symplectic_form(const FieldPair& a, const FieldPair& b, const Grid1D& g);

}  // namespace sglab

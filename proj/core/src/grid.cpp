#include "sglab/grid.hpp"

#include <cmath>
#include <stdexcept>

#include "sglab/util.hpp"

namespace sglab {

std::vector<double> Grid1D::nodes() const {
  std::vector<double> x(n_points);
  for (std::size_t i = 0; i < n_points; ++i) x[i] = node(i);
  return x;
}

Grid1D make_grid(double half_width, std::size_t n_points, Boundary boundary) {
  if (!(half_width > 0.0)) throw std::invalid_argument("make_grid: half_width must be positive");
  if (n_points < 16) throw std::invalid_argument("make_grid: n_points must be >= 16");
  Grid1D g;
  g.half_width = half_width;
  g.n_points = n_points;
  g.boundary = boundary;
  g.spacing = (boundary == Boundary::periodic)
                  ? 2.0 * half_width / static_cast<double>(n_points)
                  : 2.0 * half_width / static_cast<double>(n_points - 1);
  return g;
}

namespace {

void check_len(const Field& f, const Grid1D& g, const char* who) {
  if (f.size() != g.n_points) throw std::invalid_argument(std::string(who) + ": field/grid length mismatch");
}

// One-sided 4th-order stencils for the first two rows of a decay grid
// (mirrored at the right edge). First derivative, 5 nodes.
constexpr double d1_edge0[5] = {-25.0, 48.0, -36.0, 16.0, -3.0};       // /(12h)
constexpr double d1_edge1[5] = {-3.0, -10.0, 18.0, -6.0, 1.0};         // /(12h)
// Second derivative, 6 nodes.
constexpr double d2_edge0[6] = {45.0, -154.0, 214.0, -156.0, 61.0, -10.0};  // /(12h^2)
constexpr double d2_edge1[6] = {10.0, -15.0, -4.0, 14.0, -6.0, 1.0};        // /(12h^2)

}  // namespace

Field derivative(const Field& f, const Grid1D& g, int order) {
  check_len(f, g, "derivative");
  if (order != 1 && order != 2) throw std::invalid_argument("derivative: order must be 1 or 2");
  const std::size_t n = g.n_points;
  const double h = g.spacing;
  Field out(n);

  auto at = [&](std::ptrdiff_t i) -> double {
    std::ptrdiff_t nn = static_cast<std::ptrdiff_t>(n);
    return f[static_cast<std::size_t>(((i % nn) + nn) % nn)];
  };

  if (g.boundary == Boundary::periodic) {
    for (std::size_t i = 0; i < n; ++i) {
      std::ptrdiff_t s = static_cast<std::ptrdiff_t>(i);
      if (order == 1) {
        out[i] = (at(s - 2) - 8.0 * at(s - 1) + 8.0 * at(s + 1) - at(s + 2)) / (12.0 * h);
      } else {
        out[i] = (-at(s - 2) + 16.0 * at(s - 1) - 30.0 * f[i] + 16.0 * at(s + 1) - at(s + 2)) /
                 (12.0 * h * h);
      }
    }
    return out;
  }

  // dirichlet_decay: central in the interior, one-sided at the edges.
  for (std::size_t i = 2; i + 2 < n; ++i) {
    if (order == 1) {
      out[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h);
    } else {
      out[i] = (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]) /
               (12.0 * h * h);
    }
  }
  if (order == 1) {
    double s0 = 0, s1 = 0, sm1 = 0, sm0 = 0;
    for (int j = 0; j < 5; ++j) {
      s0 += d1_edge0[j] * f[j];
      s1 += d1_edge1[j] * f[j];
      sm1 -= d1_edge1[j] * f[n - 1 - j];
      sm0 -= d1_edge0[j] * f[n - 1 - j];
    }
    out[0] = s0 / (12.0 * h);
    out[1] = s1 / (12.0 * h);
    out[n - 2] = sm1 / (12.0 * h);
    out[n - 1] = sm0 / (12.0 * h);
  } else {
    double s0 = 0, s1 = 0, sm1 = 0, sm0 = 0;
    for (int j = 0; j < 6; ++j) {
      s0 += d2_edge0[j] * f[j];
      s1 += d2_edge1[j] * f[j];
      sm1 += d2_edge1[j] * f[n - 1 - j];
      sm0 += d2_edge0[j] * f[n - 1 - j];
    }
    out[0] = s0 / (12.0 * h * h);
    out[1] = s1 / (12.0 * h * h);
    out[n - 2] = sm1 / (12.0 * h * h);
    out[n - 1] = sm0 / (12.0 * h * h);
  }
  return out;
}

double integrate(const Field& f, const Grid1D& g) {
  check_len(f, g, "integrate");
  double s = 0.0;
  if (g.boundary == Boundary::periodic) {
    for (double v : f) s += v;
    return s * g.spacing;
  }
  const std::size_t n = g.n_points;
  for (std::size_t i = 1; i + 1 < n; ++i) s += f[i];
  s += 0.5 * (f[0] + f[n - 1]);
  return s * g.spacing;
}

double inner_product(const Field& a, const Field& b, const Grid1D& g) {
  check_len(a, g, "inner_product");
  check_len(b, g, "inner_product");
  double s = 0.0;
  if (g.boundary == Boundary::periodic) {
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s * g.spacing;
  }
  const std::size_t n = g.n_points;
  for (std::size_t i = 1; i + 1 < n; ++i) s += a[i] * b[i];
  s += 0.5 * (a[0] * b[0] + a[n - 1] * b[n - 1]);
  return s * g.spacing;
}

double sobolev_norm(const Field& f, const Grid1D& g, const WeightSpec& w) {
  check_len(f, g, "sobolev_norm");
  if (w.k < 0 || w.k > 3) throw std::invalid_argument("sobolev_norm: k must be in 0..3");
  if (w.alpha != 0 && w.alpha != 1) throw std::invalid_argument("sobolev_norm: alpha must be 0 or 1");

  std::vector<double> weight2(g.n_points, 1.0);
  if (w.alpha == 1) {
    for (std::size_t i = 0; i < g.n_points; ++i) {
      double x = g.node(i);
      weight2[i] = 1.0 + x * x;  // ((1+x^2)^{1/2})^2
    }
  }

  double total = 0.0;
  Field d = f;
  for (int j = 0; j <= w.k; ++j) {
    if (j > 0) d = derivative(d, g, 1);
    Field sq(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) sq[i] = weight2[i] * d[i] * d[i];
    total += integrate(sq, g);
  }
  return std::sqrt(total);
}

double symplectic_form(const FieldPair& a, const FieldPair& b, const Grid1D& g) {
  check_len(a.theta, g, "symplectic_form");
  check_len(a.psi, g, "symplectic_form");
  check_len(b.theta, g, "symplectic_form");
  check_len(b.psi, g, "symplectic_form");
  Field integrand(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i)
    integrand[i] = a.psi[i] * b.theta[i] - a.theta[i] * b.psi[i];
  return integrate(integrand, g);
}

}  // namespace sglab

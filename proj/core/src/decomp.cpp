#include "sglab/decomp.hpp"

#include <cmath>
#include <stdexcept>

namespace sglab {

namespace {

// hat corrections differentiated in xi by the 5-point central stencil with
// step h = grid spacing (closed forms cover the classical part)
void hat_dxi(const ManifoldExpansion& exp, double eps, const SolitonParams& p, const Grid1D& g,
             Field& dth, Field& dps) {
  const double h = g.spacing;
  static const double w[5] = {1.0, -8.0, 0.0, 8.0, -1.0};
  dth.assign(g.n_points, 0.0);
  dps.assign(g.n_points, 0.0);
  if (eps == 0.0) return;
  Field t, s;
  for (int o = -2; o <= 2; ++o) {
    if (w[o + 2] == 0.0) continue;
    exp.hat_at(eps, p.xi + o * h, p.u, g, t, s);
    double c = w[o + 2] / (12.0 * h);
    for (std::size_t i = 0; i < g.n_points; ++i) {
      dth[i] += c * t[i];
      dps[i] += c * s[i];
    }
  }
}

}  // namespace

ManifoldFrame manifold_frame(const ManifoldExpansion& exp, double eps, const SolitonParams& p,
                             const Grid1D& g) {
  ManifoldFrame fr;
  fr.S = evaluate_virtual_soliton(exp, eps, p, g);
  auto [t1, t2] = tangent_vectors(p, g);
  fr.t1 = std::move(t1);
  fr.t2 = std::move(t2);
  if (eps != 0.0) {
    Field dth, dps;
    hat_dxi(exp, eps, p, g, dth, dps);
    for (std::size_t i = 0; i < g.n_points; ++i) {
      fr.t1.theta[i] += dth[i];
      fr.t1.psi[i] += dps[i];
    }
    exp.hat_at(eps, p.xi, p.u, g, dth, dps, -1, 1);
    for (std::size_t i = 0; i < g.n_points; ++i) {
      fr.t2.theta[i] += dth[i];
      fr.t2.psi[i] += dps[i];
    }
  }
  return fr;
}

std::pair<double, double> orthogonality_residual(const Field& theta, const Field& psi,
                                                 const SolitonParams& p,
                                                 const ManifoldExpansion& exp, double eps,
                                                 const Grid1D& g) {
  if (theta.size() != g.n_points || psi.size() != g.n_points)
    throw std::invalid_argument("orthogonality_residual: field/grid mismatch");
  ManifoldFrame fr = manifold_frame(exp, eps, p, g);
  FieldPair d;
  d.theta.resize(g.n_points);
  d.psi.resize(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    d.theta[i] = theta[i] - fr.S.theta[i];
    d.psi[i] = psi[i] - fr.S.psi[i];
  }
  return {symplectic_form(fr.t1, d, g), symplectic_form(fr.t2, d, g)};
}

std::pair<double, double> overlap_coefficients(const SolitonParams& p,
                                               const ManifoldExpansion& exp, double eps,
                                               const Grid1D& g) {
  ManifoldFrame fr = manifold_frame(exp, eps, p, g);
  // m_n = integral( -dxi_psi * du_theta + dxi_theta * du_psi )
  Field integrand(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i)
    integrand[i] = -fr.t1.psi[i] * fr.t2.theta[i] + fr.t1.theta[i] * fr.t2.psi[i];
  double m_n = integrate(integrand, g);

  // k_n from the hat parts (Def 4.3(c) pairing)
  double k_n = 0.0;
  if (eps != 0.0) {
    auto [t1c, t2c] = tangent_vectors(p, g);
    Field h1t(g.n_points), h1p(g.n_points), h2t(g.n_points), h2p(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) {
      h1t[i] = fr.t1.theta[i] - t1c.theta[i];
      h1p[i] = fr.t1.psi[i] - t1c.psi[i];
      h2t[i] = fr.t2.theta[i] - t2c.theta[i];
      h2p[i] = fr.t2.psi[i] - t2c.psi[i];
    }
    Field kk(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) {
      kk[i] = -t1c.psi[i] * h2t[i] - t2c.theta[i] * h1p[i] + t1c.theta[i] * h2p[i] +
              t2c.psi[i] * h1t[i] - h1p[i] * h2t[i] + h1t[i] * h2p[i];
    }
    k_n = integrate(kk, g);
  }
  return {m_n, k_n};
}

Jacobian2 jacobian_N(const Field& theta, const Field& psi, const SolitonParams& p,
                     const ManifoldExpansion& exp, double eps, const Grid1D& g) {
  auto [m_n, k_n] = overlap_coefficients(p, exp, eps, g);
  (void)k_n;
  Jacobian2 j;
  j.a12 = m_n;
  j.a21 = -m_n;

  // displacement corrections Omega(d_l t_i, d) by differencing the tangent
  // frame; they vanish on the manifold
  ManifoldFrame fr = manifold_frame(exp, eps, p, g);
  FieldPair d;
  d.theta.resize(g.n_points);
  d.psi.resize(g.n_points);
  double dsize = 0.0;
  for (std::size_t i = 0; i < g.n_points; ++i) {
    d.theta[i] = theta[i] - fr.S.theta[i];
    d.psi[i] = psi[i] - fr.S.psi[i];
    dsize = std::max(dsize, std::abs(d.theta[i]) + std::abs(d.psi[i]));
  }
  if (dsize > 0.0) {
    const double hx = g.spacing;
    double hu = 1e-3;
    double ulo = exp.u_samples.empty() ? -1.0 : exp.u_samples.front();
    double uhi = exp.u_samples.empty() ? 1.0 : exp.u_samples.back();
    if (p.u + hu > uhi) hu = -hu;  // one-sided away from the sample edge
    if (p.u - std::abs(hu) < ulo && p.u + std::abs(hu) > uhi)
      throw std::invalid_argument("jacobian_N: u too close to the sampled boundary");

    auto frame_at = [&](double xi, double u) {
      return manifold_frame(exp, eps, {xi, u}, g);
    };
    ManifoldFrame fxp = frame_at(p.xi + hx, p.u);
    ManifoldFrame fxm = frame_at(p.xi - hx, p.u);
    ManifoldFrame fup = frame_at(p.xi, p.u + hu);

    auto diff_pair = [&](const FieldPair& a, const FieldPair& b, double den) {
      FieldPair out;
      out.theta.resize(g.n_points);
      out.psi.resize(g.n_points);
      for (std::size_t i = 0; i < g.n_points; ++i) {
        out.theta[i] = (a.theta[i] - b.theta[i]) / den;
        out.psi[i] = (a.psi[i] - b.psi[i]) / den;
      }
      return out;
    };
    FieldPair dxi_t1 = diff_pair(fxp.t1, fxm.t1, 2.0 * hx);
    FieldPair dxi_t2 = diff_pair(fxp.t2, fxm.t2, 2.0 * hx);
    FieldPair du_t1 = diff_pair(fup.t1, fr.t1, hu);
    FieldPair du_t2 = diff_pair(fup.t2, fr.t2, hu);

    j.a11 += symplectic_form(dxi_t1, d, g);
    j.a12 += symplectic_form(du_t1, d, g);
    j.a21 += symplectic_form(dxi_t2, d, g);
    j.a22 += symplectic_form(du_t2, d, g);
  }
  return j;
}

DecompositionResult project(const Field& theta, const Field& psi, const SolitonParams& guess,
                            const ManifoldExpansion& exp, double eps, const Grid1D& g,
                            const DecompOptions& opt) {
  DecompositionResult out;
  SolitonParams p = guess;

  double strip_xi = opt.strip_xi > 0.0 ? opt.strip_xi : exp.chi.Xi - 1.0;
  double strip_u = opt.strip_u > 0.0
                       ? opt.strip_u
                       : (exp.u_samples.empty() ? 0.9 : exp.u_samples.back());

  auto res_at = [&](const SolitonParams& q) {
    return orthogonality_residual(theta, psi, q, exp, eps, g);
  };

  auto [N1, N2] = res_at(p);
  double scale = std::pow(lorentz_gamma(p.u), 3) * soliton_mass(g);
  double err = std::max(std::abs(N1), std::abs(N2));
  int it = 0;
  for (; it < opt.max_iters && err > opt.tol * scale; ++it) {
    Jacobian2 J = jacobian_N(theta, psi, p, exp, eps, g);
    double det = J.det();
    if (!(std::abs(det) > 1e-12 * scale * scale))
      throw std::runtime_error("project: singular Jacobian (outside the tube?)");
    double dxi = -(J.a22 * N1 - J.a12 * N2) / det;
    double du = -(-J.a21 * N1 + J.a11 * N2) / det;

    double step_scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h) {
      SolitonParams q{p.xi + step_scale * dxi, p.u + step_scale * du};
      if (std::abs(q.u) < 1.0 && q.u >= exp.u_samples.front() && q.u <= exp.u_samples.back()) {
        auto [M1, M2] = res_at(q);
        double err2 = std::max(std::abs(M1), std::abs(M2));
        if (err2 < err) {
          p = q;
          N1 = M1;
          N2 = M2;
          err = err2;
          accepted = true;
          break;
        }
      }
      step_scale *= 0.5;
    }
    if (!accepted)
      throw std::runtime_error("project: Newton stalled (state outside the tube)");
  }
  if (err > opt.tol * scale)
    throw std::runtime_error("project: no convergence within iteration budget");

  out.params = p;
  out.newton_iters = it;
  out.residual[0] = N1;
  out.residual[1] = N2;
  out.converged = true;
  out.strip_exit = (std::abs(p.xi) > strip_xi) || (std::abs(p.u) > strip_u);

  ManifoldFrame fr = manifold_frame(exp, eps, p, g);
  out.v.resize(g.n_points);
  out.w.resize(g.n_points);
  double vinf = 0.0;
  for (std::size_t i = 0; i < g.n_points; ++i) {
    out.v[i] = theta[i] - fr.S.theta[i];
    out.w[i] = psi[i] - fr.S.psi[i];
    vinf = std::max(vinf, std::abs(out.v[i]));
  }
  if (opt.tube_radius > 0.0 && vinf + sobolev_norm(out.w, g, {0, 0}) > opt.tube_radius)
    throw std::runtime_error("project: state outside the decomposition tube");
  return out;
}

}  // namespace sglab

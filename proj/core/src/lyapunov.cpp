#include "sglab/lyapunov.hpp"

#include <cmath>
#include <stdexcept>

#include "sglab/banded.hpp"
#include "sglab/linop.hpp"

namespace sglab {

EnergyBreakdown lyapunov_evaluate(const Field& v, const Field& w, const SolitonParams& p,
                                  const ManifoldExpansion& exp, double eps, const Grid1D& g) {
  if (v.size() != g.n_points || w.size() != g.n_points)
    throw std::invalid_argument("lyapunov_evaluate: field/grid mismatch");
  const double gam = lorentz_gamma(p.u);
  Field vx = derivative(v, g, 1);
  FieldPair S = evaluate_virtual_soliton(exp, eps, p, g);

  Field i_w2(g.n_points), i_dv2(g.n_points), i_cos_eps(g.n_points), i_cross(g.n_points),
      i_cos_aux(g.n_points), i_E(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    double Z = gam * (g.node(i) - p.xi);
    i_w2[i] = 0.5 * w[i] * w[i];
    i_dv2[i] = 0.5 * vx[i] * vx[i];
    i_cos_eps[i] = 0.5 * std::cos(S.theta[i]) * v[i] * v[i];
    i_cos_aux[i] = 0.5 * kink_cos_theta(Z) * v[i] * v[i];
    i_cross[i] = p.u * w[i] * vx[i];
    double a = w[i] + p.u * vx[i];
    double vz = vx[i] / gam;
    i_E[i] = 0.5 * (a * a + vz * vz + kink_cos_theta(Z) * v[i] * v[i]);
  }

  EnergyBreakdown out;
  out.term_w2 = integrate(i_w2, g);
  out.term_dv2 = integrate(i_dv2, g);
  out.term_cos = integrate(i_cos_eps, g);
  out.term_cross = integrate(i_cross, g);
  out.L_eps = out.term_w2 + out.term_dv2 + out.term_cos + out.term_cross;
  out.L_aux = out.term_w2 + out.term_dv2 + integrate(i_cos_aux, g) + out.term_cross;
  out.E = integrate(i_E, g);
  return out;
}

double kernel_direction_energy(const SolitonParams& p, const Grid1D& g) {
  const double gam = lorentz_gamma(p.u);
  Field v(g.n_points), w(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    double Z = gam * (g.node(i) - p.xi);
    v[i] = kink_dtheta(Z);
    w[i] = -p.u * gam * kink_ddtheta(Z);
  }
  double nv = sobolev_norm(v, g, {1, 0});
  double nw = sobolev_norm(w, g, {0, 0});
  double scale = std::sqrt(nv * nv + nw * nw);
  Field vx = derivative(v, g, 1);
  Field integrand(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    double Z = gam * (g.node(i) - p.xi);
    double a = w[i] + p.u * vx[i];
    double vz = vx[i] / gam;
    integrand[i] = 0.5 * (a * a + vz * vz + kink_cos_theta(Z) * v[i] * v[i]);
  }
  return integrate(integrand, g) / (scale * scale);
}

namespace {

// modified Gram-Schmidt against the L^2(g) inner product
std::vector<Field> orthonormalize(std::vector<Field> basis, const Grid1D& g) {
  std::vector<Field> out;
  for (auto& f : basis) {
    for (const auto& q : out) {
      double c = inner_product(q, f, g);
      for (std::size_t i = 0; i < f.size(); ++i) f[i] -= c * q[i];
    }
    double n = std::sqrt(inner_product(f, f, g));
    if (n < 1e-8) continue;  // numerically dependent
    for (double& x : f) x /= n;
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace

double coercivity_constant(const SolitonParams& p, const ManifoldExpansion& exp, double eps,
                           const Grid1D& g, int n_modes) {
  const double gam = lorentz_gamma(p.u);

  SymBanded L = build_L(p, g);
  EigenPairs ep = sym_banded_eigs(L, n_modes);

  // v basis: lowest eigenvectors, L^2 normalized (they arrive orthonormal in
  // the Euclidean metric; rescale to quadrature normalization)
  std::vector<Field> vbasis = ep.vectors;
  for (auto& f : vbasis) {
    double n = std::sqrt(inner_product(f, f, g));
    for (double& x : f) x /= n;
  }

  // w basis: the same modes, their x-derivatives and the virtual t2 profile
  ManifoldFrame fr = manifold_frame(exp, eps, p, g);
  std::vector<Field> wraw = vbasis;
  for (const auto& f : vbasis) wraw.push_back(derivative(f, g, 1));
  wraw.push_back(fr.t2.theta);
  wraw.push_back(fr.t2.psi);
  std::vector<Field> wbasis = orthonormalize(std::move(wraw), g);

  const std::size_t nv = vbasis.size(), nw = wbasis.size();
  const std::size_t N = nv + nw;

  std::vector<Field> dv(nv);
  for (std::size_t i = 0; i < nv; ++i) dv[i] = derivative(vbasis[i], g, 1);

  // quadratic forms
  std::vector<double> A(N * N, 0.0), B(N * N, 0.0);
  Field tmp(g.n_points);
  auto quad = [&](const Field& a, const Field& b, const Field* weight) {
    for (std::size_t i = 0; i < g.n_points; ++i)
      tmp[i] = a[i] * b[i] * (weight ? (*weight)[i] : 1.0);
    return integrate(tmp, g);
  };
  Field cosK(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i)
    cosK[i] = kink_cos_theta(gam * (g.node(i) - p.xi));

  for (std::size_t i = 0; i < nv; ++i) {
    for (std::size_t j = i; j < nv; ++j) {
      double a = 0.5 * (quad(dv[i], dv[j], nullptr) + quad(vbasis[i], vbasis[j], &cosK));
      A[i * N + j] = A[j * N + i] = a;
      double b = quad(vbasis[i], vbasis[j], nullptr) + quad(dv[i], dv[j], nullptr);
      B[i * N + j] = B[j * N + i] = b;
    }
    for (std::size_t j = 0; j < nw; ++j) {
      double a = 0.5 * p.u * quad(dv[i], wbasis[j], nullptr);
      A[i * N + (nv + j)] = A[(nv + j) * N + i] = a;
    }
  }
  for (std::size_t i = 0; i < nw; ++i) {
    for (std::size_t j = i; j < nw; ++j) {
      double a = 0.5 * quad(wbasis[i], wbasis[j], nullptr);
      A[(nv + i) * N + (nv + j)] = A[(nv + j) * N + (nv + i)] = a;
      B[(nv + i) * N + (nv + j)] = B[(nv + j) * N + (nv + i)] = (i == j) ? 1.0 : 0.0;
    }
  }

  // constraint row: N2_check(v, w) = <du psi_n, v> - <du theta_n, w>
  std::vector<double> c(N, 0.0);
  for (std::size_t i = 0; i < nv; ++i) c[i] = inner_product(fr.t2.psi, vbasis[i], g);
  for (std::size_t j = 0; j < nw; ++j) c[nv + j] = -inner_product(fr.t2.theta, wbasis[j], g);

  // Householder basis of the constraint nullspace
  double nc = 0.0;
  for (double x : c) nc += x * x;
  nc = std::sqrt(nc);
  if (!(nc > 0.0)) throw std::runtime_error("coercivity_constant: degenerate constraint");
  for (double& x : c) x /= nc;
  std::size_t piv = 0;
  for (std::size_t i = 1; i < N; ++i)
    if (std::abs(c[i]) > std::abs(c[piv])) piv = i;
  std::vector<double> hv = c;
  hv[piv] += (c[piv] >= 0.0 ? 1.0 : -1.0);
  double hn = 0.0;
  for (double x : hv) hn += x * x;

  const std::size_t M = N - 1;
  std::vector<double> Ar(M * M, 0.0), Br(M * M, 0.0);
  // columns of Q: reflected unit vectors, skipping the pivot
  std::vector<std::vector<double>> Q;
  Q.reserve(M);
  for (std::size_t e = 0; e < N; ++e) {
    if (e == piv) continue;
    std::vector<double> q(N);
    for (std::size_t i = 0; i < N; ++i) q[i] = (i == e ? 1.0 : 0.0) - 2.0 * hv[i] * hv[e] / hn;
    Q.push_back(std::move(q));
  }
  auto form = [&](const std::vector<double>& Mfull, const std::vector<double>& x,
                  const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      if (x[i] == 0.0) continue;
      const double* row = Mfull.data() + i * N;
      double acc = 0.0;
      for (std::size_t j = 0; j < N; ++j) acc += row[j] * y[j];
      s += x[i] * acc;
    }
    return s;
  };
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = i; j < M; ++j) {
      Ar[i * M + j] = Ar[j * M + i] = form(A, Q[i], Q[j]);
      Br[i * M + j] = Br[j * M + i] = form(B, Q[i], Q[j]);
    }

  std::vector<double> eigs = dense_sym_generalized_eigs(std::move(Ar), std::move(Br), M);
  return eigs.front();
}

DLdtSeries dLdt_check(const std::vector<double>& times,
                      const std::vector<DecompositionResult>& decomps,
                      const ManifoldExpansion& exp, double eps, const Grid1D& g) {
  const std::size_t n = times.size();
  if (n < 3 || decomps.size() != n)
    throw std::invalid_argument("dLdt_check: need >= 3 aligned snapshots");
  double dt = times[1] - times[0];
  for (std::size_t i = 1; i + 1 < n; ++i)
    if (std::abs((times[i + 1] - times[i]) - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
      throw std::invalid_argument("dLdt_check: snapshots not uniformly spaced");

  // L_eps at every snapshot
  std::vector<double> Leps(n);
  for (std::size_t i = 0; i < n; ++i)
    Leps[i] = lyapunov_evaluate(decomps[i].v, decomps[i].w, decomps[i].params, exp, eps, g).L_eps;

  DLdtSeries out;
  Field force = exp.F.force(eps, g);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const auto& d = decomps[i];
    const SolitonParams p = d.params;
    double xid = (decomps[i + 1].params.xi - decomps[i - 1].params.xi) / (2.0 * dt);
    double ud = (decomps[i + 1].params.u - decomps[i - 1].params.u) / (2.0 * dt);
    double lam = lambda_n(exp, eps, p.xi, p.u);

    ManifoldFrame fr = manifold_frame(exp, eps, p, g);
    Field vx = derivative(d.v, g, 1);
    Field vxx = derivative(d.v, g, 2);
    Field d2S = derivative(fr.S.theta, g, 2);
    Field dx_t1t = derivative(fr.t1.theta, g, 1);
    Field dx_t2t = derivative(fr.t2.theta, g, 1);

    // defect of the family at (xi, u): the effective -R of the identity
    Field R1(g.n_points), R2(g.n_points);
    for (std::size_t q = 0; q < g.n_points; ++q) {
      double def1 = p.u * fr.t1.theta[q] - fr.S.psi[q] + lam * fr.t2.theta[q];
      double def2 = p.u * fr.t1.psi[q] -
                    (d2S[q] - std::sin(fr.S.theta[q]) + force[q]) + lam * fr.t2.psi[q];
      R1[q] = -def1;
      R2[q] = -def2;
    }
    Field dxR1 = derivative(R1, g, 1);

    Field i1(g.n_points), i2(g.n_points), i3(g.n_points), i4(g.n_points), i5(g.n_points),
        i6(g.n_points), i7(g.n_points);
    for (std::size_t q = 0; q < g.n_points; ++q) {
      double cosn = std::cos(fr.S.theta[q]);
      double sinn = std::sin(fr.S.theta[q]);
      double v = d.v[q], w = d.w[q];
      // exact cubic remainder of the sine expansion
      double Rt = sinn - std::sin(fr.S.theta[q] + v) + cosn * v - 0.5 * sinn * v * v;
      double cub = 0.5 * sinn * v * v + Rt + R2[q];

      i1[q] = -p.u * vx[q] * (-fr.t1.psi[q]) - w * (-fr.t1.psi[q]) +
              (cosn * v - vxx[q]) * fr.t1.theta[q] + p.u * w * dx_t1t[q];
      i2[q] = -p.u * vx[q] * (-fr.t2.psi[q]) - w * (-fr.t2.psi[q]) +
              (cosn * v - vxx[q]) * fr.t2.theta[q] + p.u * w * dx_t2t[q];
      i3[q] = 0.5 * sinn * fr.t2.theta[q] * v * v;
      i4[q] = cosn * v * vx[q];
      i5[q] = w * vx[q];
      i6[q] = (w + p.u * vx[q]) * cub;
      i7[q] = vx[q] * dxR1[q] + cosn * v * R1[q] + p.u * w * dxR1[q];
    }

    double formula = (p.u - xid) * integrate(i1, g) - (ud - lam) * integrate(i2, g) -
                     ud * integrate(i3, g) + (xid - p.u) * integrate(i4, g) +
                     ud * integrate(i5, g) + integrate(i6, g) + integrate(i7, g);
    double fd = (Leps[i + 1] - Leps[i - 1]) / (2.0 * dt);

    out.t.push_back(times[i]);
    out.formula.push_back(formula);
    out.finite_difference.push_back(fd);
  }
  return out;
}

}  // namespace sglab

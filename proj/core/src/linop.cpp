#include "sglab/linop.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <stdexcept>

#include "sglab/util.hpp"

namespace sglab {

namespace {

constexpr double kD1w[5] = {1.0, -8.0, 0.0, 8.0, -1.0};     // /(12h)
constexpr double kD2w[5] = {-1.0, 16.0, -30.0, 16.0, -1.0};  // /(12h^2)

double quad_weight(const Grid1D& g, std::size_t i) {
  if (g.boundary == Boundary::periodic) return g.spacing;
  return (i == 0 || i + 1 == g.n_points) ? 0.5 * g.spacing : g.spacing;
}

}  // namespace

SymBanded build_L(const SolitonParams& p, const Grid1D& g) {
  const double gam = lorentz_gamma(p.u);
  const double c2 = (1.0 - p.u * p.u) / (12.0 * g.spacing * g.spacing);
  SymBanded m;
  m.n = g.n_points;
  m.hb = 2;
  m.bands.assign(3 * m.n, 0.0);
  for (std::size_t i = 0; i < m.n; ++i) {
    double Z = gam * (g.node(i) - p.xi);
    m.bands[i] = -c2 * kD2w[2] + kink_cos_theta(Z);  // diagonal
    if (i + 1 < m.n) m.bands[m.n + i] = -c2 * kD2w[3];
    if (i + 2 < m.n) m.bands[2 * m.n + i] = -c2 * kD2w[4];
  }
  return m;
}

SymBanded build_free(double u, const Grid1D& g) {
  const double c2 = (1.0 - u * u) / (12.0 * g.spacing * g.spacing);
  SymBanded m;
  m.n = g.n_points;
  m.hb = 2;
  m.bands.assign(3 * m.n, 0.0);
  for (std::size_t i = 0; i < m.n; ++i) {
    m.bands[i] = -c2 * kD2w[2] + 1.0;
    if (i + 1 < m.n) m.bands[m.n + i] = -c2 * kD2w[3];
    if (i + 2 < m.n) m.bands[2 * m.n + i] = -c2 * kD2w[4];
  }
  return m;
}

std::vector<double> eigen_spectrum(const SymBanded& op, int n_eigs) {
  return sym_banded_eigs(op, n_eigs).values;
}

BorderedSolution solve_bordered(const BorderedSystem& sys, const Field& rhs,
                                double constraint_value) {
  const std::size_t n = sys.core.n;
  if (rhs.size() != n || sys.border_column.size() != n || sys.constraint_row.size() != n)
    throw std::invalid_argument("solve_bordered: size mismatch");

  BandedLU lu(n, sys.core.hb, sys.core.hb);
  for (int b = 0; b <= sys.core.hb; ++b) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(b) < n; ++i) {
      double v = sys.core.bands[static_cast<std::size_t>(b) * n + i];
      if (v != 0.0 || b == 0) {
        lu.add(i, i + static_cast<std::size_t>(b), v);
        if (b > 0) lu.add(i + static_cast<std::size_t>(b), i, v);
      }
    }
  }
  lu.factor();

  // quadrature-weighted constraint functional
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = quad_weight(sys.grid, i) * sys.constraint_row[i];
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };

  std::vector<double> z2 = lu.solve(sys.border_column);
  double cz2 = dot(c, z2);
  double cnorm = std::sqrt(dot(c, c)), z2norm = std::sqrt(dot(z2, z2));
  if (!(std::abs(cz2) > 1e-14 * std::max(1.0, cnorm * z2norm)))
    throw std::runtime_error("solve_bordered: singular bordered matrix (grid too coarse or |u| too large)");

  auto block_solve = [&](const std::vector<double>& r, double rc, std::vector<double>& x,
                         double& lam) {
    std::vector<double> z1 = lu.solve(r);
    lam = (dot(c, z1) - rc) / cz2;
    x.resize(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = z1[i] - lam * z2[i];
  };

  std::vector<double> x;
  double lam = 0.0;
  block_solve(rhs, constraint_value, x, lam);

  auto residual = [&](const std::vector<double>& xx, double ll, std::vector<double>& r,
                      double& rc) {
    Field ax = sys.core.apply(xx);
    r.resize(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - ax[i] - ll * sys.border_column[i];
    rc = constraint_value - dot(c, xx);
  };

  // one refinement pass keeps block elimination stable when the core is
  // nearly singular (the bordered matrix itself is well conditioned)
  std::vector<double> r;
  double rc = 0.0;
  residual(x, lam, r, rc);
  std::vector<double> dx;
  double dlam = 0.0;
  block_solve(r, rc, dx, dlam);
  for (std::size_t i = 0; i < n; ++i) x[i] += dx[i];
  lam += dlam;

  residual(x, lam, r, rc);
  double rnorm = std::sqrt(dot(r, r));
  double bnorm = std::sqrt(dot(rhs, rhs));
  BorderedSolution out;
  out.theta = std::move(x);
  out.lambda = lam;
  out.residual = bnorm > 0.0 ? rnorm / bnorm : rnorm;
  if (bnorm > 0.0 && out.residual > 1e-10)
    throw std::runtime_error("solve_bordered: residual above tolerance");
  return out;
}

// ---------------------------------------------------------------------------
// Mode problems
// ---------------------------------------------------------------------------

cplx xi_derivative_symbol(int freq, const Grid1D& xi_grid) {
  const double h = xi_grid.spacing;
  const double kappa = M_PI * static_cast<double>(freq) / xi_grid.half_width;
  return cplx(0.0, (8.0 * std::sin(kappa * h) - std::sin(2.0 * kappa * h)) / (6.0 * h));
}

ModeProblem::ModeProblem(int freq, double u, const Grid2D& g2)
    : freq_(freq), u_(u), y_grid_(g2.x_grid) {
  if (!(std::abs(u) < 1.0)) throw std::invalid_argument("ModeProblem: |u| must be < 1");
  sym_ = xi_derivative_symbol(freq, g2.xi_grid);
  const std::size_t n = y_grid_.n_points;
  const double gam = lorentz_gamma(u);
  border_.resize(2 * n);
  weight_row_.resize(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    double y = y_grid_.node(i);
    border_[2 * i] = t2_theta(u, y);
    border_[2 * i + 1] = t2_psi(u, y);
    double w = quad_weight(y_grid_, i);
    weight_row_[2 * i] = w * kink_dtheta(gam * y);
    weight_row_[2 * i + 1] = w * (-u * gam * kink_ddtheta(gam * y));
  }
}

std::vector<cplx> ModeProblem::apply_core(const std::vector<cplx>& z) const {
  const std::size_t n = y_grid_.n_points;
  if (z.size() != 2 * n) throw std::invalid_argument("ModeProblem::apply_core: size mismatch");
  const double h = y_grid_.spacing;
  const double gam = lorentz_gamma(u_);
  std::vector<cplx> out(2 * n, cplx(0.0, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    cplx d1t(0.0, 0.0), d1p(0.0, 0.0), d2t(0.0, 0.0);
    for (int o = -2; o <= 2; ++o) {
      std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + o;
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(n)) continue;  // decay extension
      double w1 = kD1w[o + 2] / (12.0 * h);
      double w2 = kD2w[o + 2] / (12.0 * h * h);
      d1t += w1 * z[2 * static_cast<std::size_t>(j)];
      d1p += w1 * z[2 * static_cast<std::size_t>(j) + 1];
      d2t += w2 * z[2 * static_cast<std::size_t>(j)];
    }
    double pot = kink_cos_theta(gam * y_grid_.node(i));
    out[2 * i] = u_ * (sym_ * z[2 * i] - d1t) - z[2 * i + 1];
    out[2 * i + 1] = -d2t + pot * z[2 * i] + u_ * (sym_ * z[2 * i + 1] - d1p);
  }
  return out;
}

void ModeProblem::factor() {
  const std::size_t n = y_grid_.n_points;
  const double h = y_grid_.spacing;
  const double gam = lorentz_gamma(u_);
  auto lu = std::make_shared<ComplexBandedLU>(2 * n, 5, 5);
  for (std::size_t i = 0; i < n; ++i) {
    for (int o = -2; o <= 2; ++o) {
      std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + o;
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(n)) continue;
      double w1 = kD1w[o + 2] / (12.0 * h);
      double w2 = kD2w[o + 2] / (12.0 * h * h);
      std::size_t ju = static_cast<std::size_t>(j);
      if (w1 != 0.0) {
        lu->add(2 * i, 2 * ju, cplx(-u_ * w1, 0.0));          // -u d/dy theta in eq1
        lu->add(2 * i + 1, 2 * ju + 1, cplx(-u_ * w1, 0.0));  // -u d/dy psi in eq2
      }
      lu->add(2 * i + 1, 2 * ju, cplx(-w2, 0.0));  // -d2/dy2 theta in eq2
    }
    double pot = kink_cos_theta(gam * y_grid_.node(i));
    lu->add(2 * i, 2 * i, u_ * sym_);
    lu->add(2 * i, 2 * i + 1, cplx(-1.0, 0.0));
    lu->add(2 * i + 1, 2 * i, cplx(pot, 0.0));
    lu->add(2 * i + 1, 2 * i + 1, u_ * sym_);
  }
  lu->factor();
  factored_ = std::move(lu);
  border_solve_ = factored_->solve(border_);
}

void ModeProblem::solve(const std::vector<cplx>& rhs, std::vector<cplx>& z_out,
                        cplx& lambda_out) const {
  if (!factored_) throw std::logic_error("ModeProblem::solve before factor");
  const std::size_t N = dim();
  if (rhs.size() != N) throw std::invalid_argument("ModeProblem::solve: size mismatch");

  auto cdot = [&](const std::vector<cplx>& a, const std::vector<cplx>& b) {
    cplx s(0.0, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];  // no conjugation
    return s;
  };
  cplx cz2 = cdot(weight_row_, border_solve_);
  if (!(std::abs(cz2) > 1e-300))
    throw std::runtime_error("ModeProblem::solve: singular bordered matrix");

  auto block_solve = [&](const std::vector<cplx>& r, cplx rc, std::vector<cplx>& x, cplx& lam) {
    std::vector<cplx> z1 = factored_->solve(r);
    lam = (cdot(weight_row_, z1) - rc) / cz2;
    x.resize(N);
    for (std::size_t i = 0; i < N; ++i) x[i] = z1[i] - lam * border_solve_[i];
  };

  std::vector<cplx> x;
  cplx lam(0.0, 0.0);
  block_solve(rhs, cplx(0.0, 0.0), x, lam);

  // one refinement pass (stable bordering with a nearly singular core)
  std::vector<cplx> ax = apply_core(x);
  std::vector<cplx> r(N);
  for (std::size_t i = 0; i < N; ++i) r[i] = rhs[i] - ax[i] - lam * border_[i];
  cplx rc = -cdot(weight_row_, x);
  std::vector<cplx> dx;
  cplx dlam(0.0, 0.0);
  block_solve(r, rc, dx, dlam);
  for (std::size_t i = 0; i < N; ++i) x[i] += dx[i];
  lam += dlam;

  z_out = std::move(x);
  lambda_out = lam;
}

ModeProblem build_frakM_mode(int freq, double u, const Grid2D& g2) {
  if (!(std::abs(u) < estimate_u_star()))
    throw std::invalid_argument("build_frakM_mode: |u| exceeds the estimated invertibility threshold");
  return ModeProblem(freq, u, g2);
}

// ---------------------------------------------------------------------------
// FrakMSolver
// ---------------------------------------------------------------------------

namespace {

std::mutex g_fftw_mutex;

// One-dimensional FFT along the xi direction of an xi-major 2-D array.
class XiFFT {
 public:
  XiFFT(std::size_t n_xi, std::size_t n_y) : n_xi_(n_xi), n_y_(n_y) {
    std::lock_guard<std::mutex> lk(g_fftw_mutex);
    real_ = fftw_alloc_real(n_xi * n_y);
    comp_ = fftw_alloc_complex((n_xi / 2 + 1) * n_y);
    int n = static_cast<int>(n_xi);
    fwd_ = fftw_plan_many_dft_r2c(1, &n, static_cast<int>(n_y), real_, nullptr,
                                  static_cast<int>(n_y), 1, comp_, nullptr,
                                  static_cast<int>(n_y), 1, FFTW_ESTIMATE);
    bwd_ = fftw_plan_many_dft_c2r(1, &n, static_cast<int>(n_y), comp_, nullptr,
                                  static_cast<int>(n_y), 1, real_, nullptr,
                                  static_cast<int>(n_y), 1, FFTW_ESTIMATE);
    if (!fwd_ || !bwd_) throw std::runtime_error("XiFFT: plan creation failed");
  }
  ~XiFFT() {
    std::lock_guard<std::mutex> lk(g_fftw_mutex);
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(real_);
    fftw_free(comp_);
  }
  XiFFT(const XiFFT&) = delete;
  XiFFT& operator=(const XiFFT&) = delete;

  // real (n_xi x n_y) -> complex ((n_xi/2+1) x n_y)
  std::vector<cplx> forward(const Array2D& a) const {
    std::lock_guard<std::mutex> lk(mu_);
    std::copy(a.v.begin(), a.v.end(), real_);
    fftw_execute(fwd_);
    std::vector<cplx> out((n_xi_ / 2 + 1) * n_y_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cplx(comp_[i][0], comp_[i][1]);
    return out;
  }

  // complex ((n_xi/2+1) x n_y) -> real (n_xi x n_y), normalized
  Array2D backward(const std::vector<cplx>& spec) const {
    std::lock_guard<std::mutex> lk(mu_);
    for (std::size_t i = 0; i < spec.size(); ++i) {
      comp_[i][0] = spec[i].real();
      comp_[i][1] = spec[i].imag();
    }
    fftw_execute(bwd_);
    Array2D out(n_xi_, n_y_);
    const double scale = 1.0 / static_cast<double>(n_xi_);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = real_[i] * scale;
    return out;
  }

 private:
  std::size_t n_xi_, n_y_;
  double* real_;
  fftw_complex* comp_;
  fftw_plan fwd_, bwd_;
  mutable std::mutex mu_;
};

}  // namespace

struct FrakMSolverImpl {
  std::unique_ptr<XiFFT> fft;
};

FrakMSolver::FrakMSolver(double u, const Grid2D& g2, int threads)
    : u_(u), g2_(g2), threads_(threads) {
  if (g2.xi_grid.boundary != Boundary::periodic)
    throw std::invalid_argument("FrakMSolver: xi grid must be periodic");
  std::size_t nxi = g2.xi_grid.n_points;
  if ((nxi & (nxi - 1)) != 0)
    throw std::invalid_argument("FrakMSolver: xi grid size must be a power of two");
  if (!(std::abs(u) < estimate_u_star()))
    throw std::invalid_argument("FrakMSolver: |u| exceeds the estimated invertibility threshold");
  std::size_t n_modes = nxi / 2 + 1;
  modes_.reserve(n_modes);
  for (std::size_t k = 0; k < n_modes; ++k) modes_.emplace_back(static_cast<int>(k), u, g2);
  parallel_for(n_modes, threads_, [&](std::size_t k) { modes_[k].factor(); });
}

FrakMSolver::Solution FrakMSolver::solve(const Array2D& rhs_theta, const Array2D& rhs_psi) const {
  const std::size_t nxi = g2_.xi_grid.n_points;
  const std::size_t ny = g2_.x_grid.n_points;
  if (rhs_theta.n_xi != nxi || rhs_theta.n_y != ny || rhs_psi.n_xi != nxi || rhs_psi.n_y != ny)
    throw std::invalid_argument("FrakMSolver::solve: rhs/grid mismatch");

  XiFFT fft(nxi, ny);
  std::vector<cplx> th_hat = fft.forward(rhs_theta);
  std::vector<cplx> ps_hat = fft.forward(rhs_psi);

  const std::size_t n_modes = nxi / 2 + 1;

  // aliasing check: rhs energy carried by the top 10% of xi frequencies
  double e_total = 0.0, e_top = 0.0;
  std::size_t k_cut = static_cast<std::size_t>(0.9 * static_cast<double>(n_modes - 1));
  for (std::size_t k = 0; k < n_modes; ++k) {
    double mult = (k == 0 || k == n_modes - 1) ? 1.0 : 2.0;
    double e = 0.0;
    for (std::size_t i = 0; i < ny; ++i)
      e += std::norm(th_hat[k * ny + i]) + std::norm(ps_hat[k * ny + i]);
    e_total += mult * e;
    if (k >= k_cut) e_top += mult * e;
  }

  std::vector<std::vector<cplx>> zs(n_modes);
  std::vector<cplx> lams(n_modes);
  parallel_for(n_modes, threads_, [&](std::size_t k) {
    std::vector<cplx> rhs(2 * ny);
    for (std::size_t i = 0; i < ny; ++i) {
      rhs[2 * i] = th_hat[k * ny + i];
      rhs[2 * i + 1] = ps_hat[k * ny + i];
    }
    modes_[k].solve(rhs, zs[k], lams[k]);
  });

  std::vector<cplx> out_th(n_modes * ny), out_ps(n_modes * ny);
  for (std::size_t k = 0; k < n_modes; ++k) {
    for (std::size_t i = 0; i < ny; ++i) {
      out_th[k * ny + i] = zs[k][2 * i];
      out_ps[k * ny + i] = zs[k][2 * i + 1];
    }
  }

  Solution sol;
  sol.theta = fft.backward(out_th);
  sol.psi = fft.backward(out_ps);
  sol.aliased_energy_fraction = e_total > 0.0 ? e_top / e_total : 0.0;

  // lambda: 1-D inverse transform on the xi grid
  std::vector<cplx> lam_spec(n_modes * ny, cplx(0.0, 0.0));
  for (std::size_t k = 0; k < n_modes; ++k) lam_spec[k * ny] = lams[k];
  Array2D lam2 = fft.backward(lam_spec);
  sol.lambda.resize(nxi);
  for (std::size_t m = 0; m < nxi; ++m) sol.lambda[m] = lam2.at(m, 0);
  return sol;
}

void frakM_apply(double u, const Grid2D& g2, const Array2D& theta, const Array2D& psi,
                 const std::vector<double>& lambda, Array2D& out_theta, Array2D& out_psi) {
  const std::size_t nxi = g2.xi_grid.n_points;
  const std::size_t ny = g2.x_grid.n_points;
  const double gam = lorentz_gamma(u);

  XiFFT fft(nxi, ny);
  auto xi_deriv = [&](const Array2D& a) {
    std::vector<cplx> spec = fft.forward(a);
    for (std::size_t k = 0; k < nxi / 2 + 1; ++k) {
      cplx s = xi_derivative_symbol(static_cast<int>(k), g2.xi_grid);
      for (std::size_t i = 0; i < ny; ++i) spec[k * ny + i] *= s;
    }
    return fft.backward(spec);
  };
  Array2D dxi_th = xi_deriv(theta);
  Array2D dxi_ps = xi_deriv(psi);

  out_theta = Array2D(nxi, ny);
  out_psi = Array2D(nxi, ny);
  const double h = g2.x_grid.spacing;
  for (std::size_t m = 0; m < nxi; ++m) {
    const double* th = theta.v.data() + m * ny;
    const double* ps = psi.v.data() + m * ny;
    for (std::size_t i = 0; i < ny; ++i) {
      double d1t = 0.0, d1p = 0.0, d2t = 0.0;
      for (int o = -2; o <= 2; ++o) {
        std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + o;
        if (j < 0 || j >= static_cast<std::ptrdiff_t>(ny)) continue;
        d1t += kD1w[o + 2] * th[j];
        d1p += kD1w[o + 2] * ps[j];
        d2t += kD2w[o + 2] * th[j];
      }
      d1t /= (12.0 * h);
      d1p /= (12.0 * h);
      d2t /= (12.0 * h * h);
      double y = g2.x_grid.node(i);
      double pot = kink_cos_theta(gam * y);
      out_theta.at(m, i) = u * (dxi_th.at(m, i) - d1t) - ps[i] + lambda[m] * t2_theta(u, y);
      out_psi.at(m, i) =
          -d2t + pot * th[i] + u * (dxi_ps.at(m, i) - d1p) + lambda[m] * t2_psi(u, y);
    }
  }
}

void FrakMSolver::apply(const Array2D& theta, const Array2D& psi, const std::vector<double>& lambda,
                        Array2D& out_theta, Array2D& out_psi) const {
  frakM_apply(u_, g2_, theta, psi, lambda, out_theta, out_psi);
}

double frakM_residual(const FrakMSolver& solver, const Array2D& theta, const Array2D& psi,
                      const std::vector<double>& lambda, const Array2D& rhs_theta,
                      const Array2D& rhs_psi) {
  Array2D at, ap;
  solver.apply(theta, psi, lambda, at, ap);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < at.v.size(); ++i) {
    double r1 = at.v[i] - rhs_theta.v[i];
    double r2 = ap.v[i] - rhs_psi.v[i];
    num += r1 * r1 + r2 * r2;
    den += rhs_theta.v[i] * rhs_theta.v[i] + rhs_psi.v[i] * rhs_psi.v[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

// ---------------------------------------------------------------------------
// Invertibility threshold estimate
// ---------------------------------------------------------------------------

namespace {

// Small dense helpers (row-major) for the graded-norm estimate.
using Mat = std::vector<double>;  // row-major n x m

Mat matmul(const Mat& a, std::size_t n, std::size_t k, const Mat& b, std::size_t m) {
  Mat c(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      double ail = a[i * k + l];
      if (ail == 0.0) continue;
      const double* brow = b.data() + l * m;
      double* crow = c.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += ail * brow[j];
    }
  return c;
}

Mat transpose(const Mat& a, std::size_t n, std::size_t m) {
  Mat t(m * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) t[j * n + i] = a[i * m + j];
  return t;
}

// Largest eigenvalue of the symmetric-definite pencil A x = mu B x via power
// iteration on B^{-1} A (B SPD, dense Cholesky).
double pencil_largest_eig(const Mat& a, Mat b, std::size_t n, int iters, double tol) {
  // in-place Cholesky of b
  for (std::size_t j = 0; j < n; ++j) {
    double d = b[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= b[j * n + k] * b[j * n + k];
    if (!(d > 0.0)) return std::nan("");
    d = std::sqrt(d);
    b[j * n + j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = b[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= b[i * n + k] * b[j * n + k];
      b[i * n + j] = s / d;
    }
  }
  auto chol_solve = [&](std::vector<double>& x) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = x[i];
      for (std::size_t k = 0; k < i; ++k) s -= b[i * n + k] * x[k];
      x[i] = s / b[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = x[ii];
      for (std::size_t k = ii + 1; k < n; ++k) s -= b[k * n + ii] * x[k];
      x[ii] = s / b[ii * n + ii];
    }
  };

  double amax = 0.0;
  for (double v : a) amax = std::max(amax, std::abs(v));
  if (amax == 0.0) return 0.0;

  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 / std::sqrt(static_cast<double>(n) + i);
  double mu = 0.0;
  for (int it = 0; it < iters; ++it) {
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* arow = a.data() + i * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += arow[j] * x[j];
      y[i] = s;
    }
    double xay = 0.0, xx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      xay += x[i] * y[i];
      xx += x[i] * x[i];
    }
    chol_solve(y);
    double ynorm = 0.0;
    for (double v : y) ynorm += v * v;
    ynorm = std::sqrt(ynorm);
    if (!(ynorm > 0.0)) return 0.0;
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / ynorm;
    double mu_new = xay / xx;  // Rayleigh quotient in the Euclidean metric of Bx-iterates
    if (it > 3 && std::abs(mu_new - mu) <= tol * std::abs(mu_new)) {
      mu = mu_new;
      break;
    }
    mu = mu_new;
  }
  // one final generalized Rayleigh quotient mu = (x'Ax)/(x'Bx), with b holding L
  std::vector<double> ax(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.data() + i * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += arow[j] * x[j];
    ax[i] = s;
  }
  double num = 0.0;
  for (std::size_t i = 0; i < n; ++i) num += x[i] * ax[i];
  // x'Bx = ||L^T x|| ... recompute via stored factor: B = L L^T
  double den = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = j; i < n; ++i) s += b[i * n + j] * x[i];  // (L^T x)_j
    den += s * s;
  }
  return den > 0.0 ? num / den : std::nan("");
}

struct UStarWork {
  // graded-norm product for one (u, kappa) pair on a coarse internal grid
  Grid1D y;
  std::size_t n;   // y nodes
  std::size_t N;   // 2n + 1 unknowns (theta, psi interleaved, lambda)

  Mat d1, d2, w;  // dense n x n difference operators and quadrature diag

  explicit UStarWork(const Grid1D& grid) : y(grid), n(grid.n_points), N(2 * grid.n_points + 1) {
    d1.assign(n * n, 0.0);
    d2.assign(n * n, 0.0);
    w.assign(n * n, 0.0);
    const double h = y.spacing;
    for (std::size_t i = 0; i < n; ++i) {
      w[i * n + i] = quad_weight(y, i);
      for (int o = -2; o <= 2; ++o) {
        std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + o;
        if (j < 0 || j >= static_cast<std::ptrdiff_t>(n)) continue;
        d1[i * n + static_cast<std::size_t>(j)] += kD1w[o + 2] / (12.0 * h);
        d2[i * n + static_cast<std::size_t>(j)] += kD2w[o + 2] / (12.0 * h * h);
      }
    }
  }

  // Z-side Gram on (v, w): H^1-mode norm on v, L^2 on w (2n x 2n).
  Mat gram_Z(double kap) const {
    Mat g(4 * n * n, 0.0);
    // v block: W (1 + kap^2) + D1^T W D1
    Mat wd1 = matmul(w, n, n, d1, n);
    Mat d1wd1 = matmul(transpose(d1, n, n), n, n, wd1, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double vij = d1wd1[i * n + j] + (i == j ? w[i * n + i] * (1.0 + kap * kap) : 0.0);
        g[(2 * i) * (2 * n) + 2 * j] = vij;
        if (i == j) g[(2 * i + 1) * (2 * n) + 2 * j + 1] = w[i * n + i];
      }
    return g;
  }

  // Y-side Gram on (theta, psi, lambda): H^2-mode (via (1+kap^2) - D2
  // multiplier) on theta, H^1-mode on psi, (1+kap^2)^2 weight on lambda.
  Mat gram_Y(double kap) const {
    Mat g(N * N, 0.0);
    Mat s = d2;  // S = (1+kap^2) I - D2
    for (std::size_t i = 0; i < n * n; ++i) s[i] = -s[i];
    for (std::size_t i = 0; i < n; ++i) s[i * n + i] += 1.0 + kap * kap;
    Mat ws = matmul(w, n, n, s, n);
    Mat sws = matmul(transpose(s, n, n), n, n, ws, n);
    Mat wd1 = matmul(w, n, n, d1, n);
    Mat d1wd1 = matmul(transpose(d1, n, n), n, n, wd1, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        g[(2 * i) * N + 2 * j] = sws[i * n + j];
        double pij = d1wd1[i * n + j] + (i == j ? w[i * n + i] * (1.0 + kap * kap) : 0.0);
        g[(2 * i + 1) * N + 2 * j + 1] = pij;
      }
    g[(N - 1) * N + (N - 1)] = (1.0 + kap * kap) * (1.0 + kap * kap);
    return g;
  }

  // dense co-moving core + border, kappa-independent: rows 2n, cols N
  Mat mtilde(double u) const {
    const double gam = lorentz_gamma(u);
    Mat m(2 * n * N, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double a1 = -u * d1[i * n + j];
        if (a1 != 0.0) {
          m[(2 * i) * N + 2 * j] += a1;
          m[(2 * i + 1) * N + 2 * j + 1] += a1;
        }
        m[(2 * i + 1) * N + 2 * j] += -d2[i * n + j];
      }
      double yv = y.node(i);
      m[(2 * i) * N + 2 * i + 1] += -1.0;
      m[(2 * i + 1) * N + 2 * i] += kink_cos_theta(gam * yv);
      m[(2 * i) * N + (N - 1)] = t2_theta(u, yv);
      m[(2 * i + 1) * N + (N - 1)] = t2_psi(u, yv);
    }
    return m;
  }

  // orthonormal basis of the constraint nullspace (N x (N-1)); the
  // constraint row is the quadrature-weighted kernel pairing
  Mat constraint_nullspace(double u) const {
    const double gam = lorentz_gamma(u);
    std::vector<double> c(N, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double wq = quad_weight(y, i), yv = y.node(i);
      c[2 * i] = wq * kink_dtheta(gam * yv);
      c[2 * i + 1] = wq * (-u * gam * kink_ddtheta(gam * yv));
    }
    double nc = 0.0;
    for (double v : c) nc += v * v;
    nc = std::sqrt(nc);
    for (double& v : c) v /= nc;
    // Householder reflector mapping e_p -> c, p = index of max |c|
    std::size_t p = 0;
    for (std::size_t i = 1; i < N; ++i)
      if (std::abs(c[i]) > std::abs(c[p])) p = i;
    std::vector<double> v = c;
    v[p] += (c[p] >= 0.0 ? 1.0 : -1.0);
    double nv = 0.0;
    for (double x : v) nv += x * x;
    Mat q(N * (N - 1));
    std::size_t col = 0;
    for (std::size_t e = 0; e < N; ++e) {
      if (e == p) continue;  // the reflected e_p is parallel to c
      for (std::size_t i = 0; i < N; ++i)
        q[i * (N - 1) + col] = (i == e ? 1.0 : 0.0) - 2.0 * v[i] * v[e] / nv;
      ++col;
    }
    return q;
  }
};

UStarDiagnostics compute_u_star() {
  // Realizes the threshold formula u~ = sup{ u : for all |s|,|t| <= u,
  // |s| C(t) < 1 } with C(t) = ||Mhat_t^{-1}|| between the x-graded spaces
  // (the xi grading cancels because Mhat commutes with d/dxi) and the
  // perturbation norm bounded by sup |u|.
  UStarDiagnostics diag;
  const Grid1D y = make_grid(16.0, 96, Boundary::dirichlet_decay);
  UStarWork wk(y);
  const std::size_t N = wk.N, n2 = 2 * wk.n, M = N - 1;

  double cmax = 0.0;
  for (int iu = 1; iu <= 10; ++iu) {
    double u = 0.05 * iu;
    Mat mt = wk.mtilde(u);
    Mat q = wk.constraint_nullspace(u);
    Mat mq = matmul(mt, n2, N, q, M);
    Mat mqT = transpose(mq, n2, M);

    Mat gz = wk.gram_Z(0.0);
    Mat gy = wk.gram_Y(0.0);
    Mat gyq = matmul(gy, N, N, q, M);
    Mat qgyq = matmul(transpose(q, N, M), M, N, gyq, M);
    Mat gzmq = matmul(gz, n2, n2, mq, M);
    Mat a = matmul(mqT, M, n2, gzmq, M);

    double minv2 = pencil_largest_eig(qgyq, a, M, 50, 1e-6);
    if (!std::isfinite(minv2) || !(minv2 > 0.0)) {
      diag.u_star = 0.2;
      diag.u_samples.push_back(u);
      diag.products.push_back(std::nan(""));
      return diag;
    }
    cmax = std::max(cmax, std::sqrt(minv2));
    diag.u_samples.push_back(u);
    diag.products.push_back(u * cmax);
  }

  double best = 0.0;
  for (std::size_t i = 0; i < diag.u_samples.size(); ++i) {
    if (diag.products[i] < 1.0)
      best = diag.u_samples[i];
    else
      break;
  }
  double scan = best > 0.0 ? 0.9 * best : 0.2;

  // Radiation guard: for |kappa| > 1/(u gamma) the co-moving far field
  // admits propagating waves, so the unweighted mode systems can resonate
  // (the analysis absorbs this into the weighted spaces; the solves here
  // are unweighted by design). Keep the strip below the threshold of the
  // active xi band.
  const double kappa_active = 8.0;
  double u_rad = 1.0 / std::sqrt(kappa_active * kappa_active + 1.0);
  diag.u_star = std::min(scan, u_rad);
  return diag;
}

std::mutex g_ustar_mutex;
bool g_ustar_done = false;
UStarDiagnostics g_ustar;

}  // namespace

UStarDiagnostics estimate_u_star_diagnostics() {
  std::lock_guard<std::mutex> lk(g_ustar_mutex);
  if (!g_ustar_done) {
    g_ustar = compute_u_star();
    g_ustar_done = true;
  }
  return g_ustar;
}

double estimate_u_star() { return estimate_u_star_diagnostics().u_star; }

}  // namespace sglab

#include "sglab/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <cstdio>
#include <limits>
#include <mutex>
#include <stdexcept>

#include "json.hpp"
#include "sglab/util.hpp"

namespace sglab {

namespace {

constexpr double kD1w[5] = {1.0, -8.0, 0.0, 8.0, -1.0};     // /(12h)
constexpr double kD2w[5] = {-1.0, 16.0, -30.0, 16.0, -1.0};  // /(12h^2)

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

double binomial(int n, int k) { return factorial(n) / (factorial(k) * factorial(n - k)); }

// partitions {l_1..l_j} with sum i*l_i = j, excluding the singleton l_j = 1
struct Partition {
  double coef;                       // j! / prod(l_i!)
  int l;                             // total derivative order of sin
  std::vector<std::pair<int, int>> factors;  // (i, l_i) with l_i > 0
};

void enumerate_partitions(int j, int i, int remaining, std::vector<std::pair<int, int>>& cur,
                          std::vector<Partition>& out) {
  if (remaining == 0) {
    int l = 0;
    double denom = 1.0;
    for (auto& [idx, li] : cur) {
      l += li;
      denom *= factorial(li);
    }
    if (l == 1) return;  // the linear term belongs to the operator
    out.push_back({factorial(j) / denom, l, cur});
    return;
  }
  if (i > remaining) return;
  for (int li = remaining / i; li >= 0; --li) {
    if (li > 0) cur.emplace_back(i, li);
    enumerate_partitions(j, i + 1, remaining - i * li, cur, out);
    if (li > 0) cur.pop_back();
  }
}

const std::vector<Partition>& partitions_for(int j) {
  static std::vector<std::vector<Partition>> cache;
  if (static_cast<int>(cache.size()) <= j) cache.resize(static_cast<std::size_t>(j) + 1);
  auto& slot = cache[static_cast<std::size_t>(j)];
  if (slot.empty() && j >= 2) {
    std::vector<std::pair<int, int>> cur;
    enumerate_partitions(j, 1, j, cur, slot);
  }
  return slot;
}

double sin_derivative(int l, double theta) {
  switch (((l % 4) + 4) % 4) {
    case 0: return std::sin(theta);
    case 1: return std::cos(theta);
    case 2: return -std::sin(theta);
    default: return -std::cos(theta);
  }
}

// 4-point Lagrange weights at x for nodes xs[0..3]
void lagrange4(double x, const double* xs, double* w) {
  for (int i = 0; i < 4; ++i) {
    double p = 1.0;
    for (int j = 0; j < 4; ++j) {
      if (j == i) continue;
      p *= (x - xs[j]) / (xs[i] - xs[j]);
    }
    w[i] = p;
  }
}

// stencil of 4 consecutive indices around x on a uniform grid starting at x0
void uniform_stencil(double x, double x0, double h, std::size_t n, bool periodic,
                     std::ptrdiff_t idx[4], double xs[4]) {
  double t = (x - x0) / h;
  std::ptrdiff_t i0 = static_cast<std::ptrdiff_t>(std::floor(t));
  std::ptrdiff_t start = i0 - 1;
  if (!periodic) {
    if (start < 0) start = 0;
    if (start > static_cast<std::ptrdiff_t>(n) - 4) start = static_cast<std::ptrdiff_t>(n) - 4;
  }
  for (int s = 0; s < 4; ++s) {
    std::ptrdiff_t i = start + s;
    xs[s] = x0 + static_cast<double>(i) * h;
    if (periodic) {
      std::ptrdiff_t nn = static_cast<std::ptrdiff_t>(n);
      i = ((i % nn) + nn) % nn;
    }
    idx[s] = i;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Perturbation and cutoff
// ---------------------------------------------------------------------------

PerturbationSpec make_perturbation(const std::string& profile_id, double amplitude, int k) {
  PerturbationSpec F;
  F.k = k;
  F.profile_id = profile_id;
  F.amplitude = amplitude;
  if (profile_id == "sech") {
    F.f = [](double x) { return 1.0 / std::cosh(x); };
  } else if (profile_id == "sech2") {
    F.f = [](double x) { double s = 1.0 / std::cosh(x); return s * s; };
  } else if (profile_id == "gauss") {
    F.f = [](double x) { return std::exp(-x * x); };
  } else if (profile_id == "zero") {
    F.f = [](double) { return 0.0; };
  } else {
    throw std::invalid_argument("make_perturbation: unknown profile '" + profile_id + "'");
  }
  return F;
}

double PerturbationSpec::force_factor(double eps) const {
  return std::pow(eps, k + 1) * amplitude;
}

Field PerturbationSpec::force(double eps, const Grid1D& g) const {
  Field out(g.n_points);
  double fac = force_factor(eps);
  for (std::size_t i = 0; i < g.n_points; ++i) out[i] = fac * f(g.node(i));
  return out;
}

Field PerturbationSpec::profile_samples(const Grid1D& g) const {
  Field out(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) out[i] = amplitude * f(g.node(i));
  return out;
}

Field perturbation_deriv(const PerturbationSpec& F, int l, const Grid1D& g) {
  if (l < 0) throw std::invalid_argument("perturbation_deriv: negative order");
  Field out(g.n_points, 0.0);
  if (l == F.k + 1) {
    double fac = factorial(F.k + 1) * F.amplitude;
    for (std::size_t i = 0; i < g.n_points; ++i) out[i] = fac * F.f(g.node(i));
  }
  return out;
}

namespace {
double mollifier_step(double t) {
  // 1 for t <= 0, 0 for t >= 1, exp(-1/t) blend in between
  if (t <= 0.0) return 1.0;
  if (t >= 1.0) return 0.0;
  double a = std::exp(-1.0 / (1.0 - t));
  double b = std::exp(-1.0 / t);
  return a / (a + b);
}
}  // namespace

double CutoffProfile::value(double xi) const {
  return mollifier_step(std::abs(xi) - Xi);
}

CutoffProfile make_cutoff(double xi_s, const Grid1D& xi_grid) {
  CutoffProfile c;
  c.xi_s = xi_s;
  c.Xi = std::abs(xi_s) + 3.0;
  if (!(c.Xi + 1.0 < xi_grid.half_width))
    throw std::invalid_argument("make_cutoff: xi domain too small for the cutoff support");
  c.xi_grid = xi_grid;
  c.samples.resize(xi_grid.n_points);
  for (std::size_t m = 0; m < xi_grid.n_points; ++m) c.samples[m] = c.value(xi_grid.node(m));
  return c;
}

// ---------------------------------------------------------------------------
// Expansion construction
// ---------------------------------------------------------------------------

std::vector<double> ManifoldExpansion::u_deriv_weights(std::size_t iu, int order) const {
  return fd_weights(u_samples[iu], u_samples, order);
}

ManifoldExpansion taylor_coefficients(int n, const PerturbationSpec& F, const CutoffProfile& chi,
                                      const std::vector<double>& u_samples, const Grid2D& g2,
                                      int threads) {
  if (n < 1) throw std::invalid_argument("taylor_coefficients: n must be >= 1");
  if (u_samples.empty()) throw std::invalid_argument("taylor_coefficients: no u samples");
  if (!(chi.xi_grid == g2.xi_grid))
    throw std::invalid_argument("taylor_coefficients: cutoff xi grid mismatch");
  double u_star = estimate_u_star();
  for (double u : u_samples)
    if (!(std::abs(u) < u_star))
      throw std::invalid_argument("taylor_coefficients: u sample outside the invertibility strip");

  ManifoldExpansion exp;
  exp.n = n;
  exp.k = F.k;
  exp.grid = g2;
  exp.u_samples = u_samples;
  exp.F = F;
  exp.chi = chi;

  const std::size_t nxi = g2.xi_grid.n_points;
  const std::size_t ny = g2.x_grid.n_points;
  const std::size_t nu = u_samples.size();

  exp.coeff.assign(static_cast<std::size_t>(n), {});
  for (int j = 1; j <= n; ++j) {
    auto& level = exp.coeff[static_cast<std::size_t>(j - 1)];
    level.resize(nu);
    for (std::size_t iu = 0; iu < nu; ++iu) {
      level[iu].theta = Array2D(nxi, ny);
      level[iu].psi = Array2D(nxi, ny);
      level[iu].lambda.assign(nxi, 0.0);
    }
  }
  exp.solve_residuals.assign(static_cast<std::size_t>(n), 0.0);

  for (int j = 1; j <= n; ++j) {
    if (j <= F.k) continue;  // forced zero by the vanishing derivatives of F

    double worst_res = 0.0;
    for (std::size_t iu = 0; iu < nu; ++iu) {
      const double u = u_samples[iu];
      FrakMSolver solver(u, g2, threads);

      Array2D rhs_t(nxi, ny), rhs_p(nxi, ny);

      if (j == F.k + 1) {
        double fac = factorial(F.k + 1) * F.amplitude;
        for (std::size_t m = 0; m < nxi; ++m) {
          double xi = g2.xi_grid.node(m);
          double cm = chi.samples[m];
          if (cm == 0.0) continue;
          for (std::size_t i = 0; i < ny; ++i)
            rhs_p.at(m, i) = fac * cm * F.f(g2.x_grid.node(i) + xi);
        }
      }

      // Faa di Bruno sine-expansion source from the lower coefficients
      const double gam = lorentz_gamma(u);
      for (const Partition& part : partitions_for(j)) {
        bool trivially_zero = false;
        for (auto& [i, li] : part.factors)
          if (i <= F.k) trivially_zero = true;  // those coefficients vanish
        if (trivially_zero) continue;
        for (std::size_t m = 0; m < nxi; ++m) {
          for (std::size_t i = 0; i < ny; ++i) {
            double prod = part.coef;
            for (auto& [ord, li] : part.factors) {
              double c = exp.coeff[static_cast<std::size_t>(ord - 1)][iu].theta.at(m, i) /
                         factorial(ord);
              for (int r = 0; r < li; ++r) prod *= c;
            }
            double Z = gam * g2.x_grid.node(i);
            rhs_p.at(m, i) -= prod * sin_derivative(part.l, kink_theta(Z));
          }
        }
      }

      // Leibniz lambda-coupling with the u-derivatives of lower coefficients
      for (int i = 1; i <= j - 1; ++i) {
        int lo = j - i;  // lambda coefficient order
        if (lo <= F.k) continue;
        double bin = binomial(j, i);
        auto w = exp.u_deriv_weights(iu, 1);
        const auto& lam = exp.coeff[static_cast<std::size_t>(lo - 1)][iu].lambda;
        for (std::size_t m = 0; m < nxi; ++m) {
          double lm = bin * lam[m];
          if (lm == 0.0) continue;
          for (std::size_t ju = 0; ju < nu; ++ju) {
            if (w[ju] == 0.0) continue;
            const auto& ci = exp.coeff[static_cast<std::size_t>(i - 1)][ju];
            const double* ct = ci.theta.v.data() + m * ny;
            const double* cp = ci.psi.v.data() + m * ny;
            double f2 = lm * w[ju];
            double* rt = rhs_t.v.data() + m * ny;
            double* rp = rhs_p.v.data() + m * ny;
            for (std::size_t yy = 0; yy < ny; ++yy) {
              rt[yy] -= f2 * ct[yy];
              rp[yy] -= f2 * cp[yy];
            }
          }
        }
      }

      FrakMSolver::Solution sol = solver.solve(rhs_t, rhs_p);
      if (sol.aliased_energy_fraction > 1e-2)
        std::cerr << "taylor_coefficients: warning, order " << j << " rhs has "
                  << sol.aliased_energy_fraction
                  << " of its energy in the top 10% of xi frequencies\n";
      double res = frakM_residual(solver, sol.theta, sol.psi, sol.lambda, rhs_t, rhs_p);
      worst_res = std::max(worst_res, res);

      auto& c = exp.coeff[static_cast<std::size_t>(j - 1)][iu];
      c.theta = std::move(sol.theta);
      c.psi = std::move(sol.psi);
      c.lambda = std::move(sol.lambda);
    }
    exp.solve_residuals[static_cast<std::size_t>(j - 1)] = worst_res;
  }

  // validity guard: largest probed eps for which the refinement converges
  // at the center velocity sample
  if (F.profile_id != "zero") {
    std::size_t ic = 0;
    for (std::size_t i = 1; i < nu; ++i)
      if (std::abs(u_samples[i]) < std::abs(u_samples[ic])) ic = i;
    FrakMSolver solver(u_samples[ic], g2, threads);
    for (double probe : {0.4, 0.3, 0.2, 0.15, 0.1, 0.05}) {
      try {
        newton_refine(exp, probe, ic, solver, 1e-10, 12, n);
        exp.newton_eps_max = probe;
        break;
      } catch (const std::exception&) {
        // keep probing smaller eps
      }
    }
  }
  return exp;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

struct UStencil {
  std::vector<std::size_t> idx;
  std::vector<double> w;
};

// Interpolation (du = 0) or differentiation (du = 1) weights in u. Exact
// samples use delta / full-width Fornberg weights; off-sample points use the
// local cubic Lagrange stencil and its derivative.
UStencil u_stencil(const std::vector<double>& us, double u, int du) {
  UStencil st;
  const std::size_t nu = us.size();
  if (u < us.front() - 1e-12 || u > us.back() + 1e-12)
    throw std::invalid_argument("manifold evaluation: u outside the sampled range");
  for (std::size_t i = 0; i < nu; ++i) {
    if (std::abs(u - us[i]) < 1e-14) {
      if (du == 0) {
        st.idx = {i};
        st.w = {1.0};
      } else {
        st.w = fd_weights(us[i], us, du);
        st.idx.resize(nu);
        for (std::size_t j = 0; j < nu; ++j) st.idx[j] = j;
      }
      return st;
    }
  }
  if (nu < 4) throw std::invalid_argument("manifold evaluation: need >= 4 u samples");
  std::size_t hi = 1;
  while (hi + 1 < nu && us[hi] < u) ++hi;
  std::size_t start = (hi >= 2) ? hi - 2 : 0;
  if (start + 4 > nu) start = nu - 4;
  std::vector<double> xs(4);
  st.idx.resize(4);
  for (int s = 0; s < 4; ++s) {
    st.idx[static_cast<std::size_t>(s)] = start + static_cast<std::size_t>(s);
    xs[static_cast<std::size_t>(s)] = us[st.idx[static_cast<std::size_t>(s)]];
  }
  st.w = fd_weights(u, xs, du);
  return st;
}

}  // namespace

void ManifoldExpansion::hat_at(double eps, double xi, double u, const Grid1D& g, Field& theta_hat,
                               Field& psi_hat, int depth, int du) const {
  if (depth < 0) depth = n;
  theta_hat.assign(g.n_points, 0.0);
  psi_hat.assign(g.n_points, 0.0);
  if (eps == 0.0 || depth == 0) return;

  UStencil us = u_stencil(u_samples, u, du);

  std::ptrdiff_t xidx[4];
  double xs[4], xw[4];
  uniform_stencil(xi, -grid.xi_grid.half_width, grid.xi_grid.spacing, grid.xi_grid.n_points, true,
                  xidx, xs);
  lagrange4(xi, xs, xw);

  const Grid1D& yg = grid.x_grid;
  const std::size_t ny = yg.n_points;

  double epj = 1.0;
  for (int j = 1; j <= depth; ++j) {
    epj *= eps;
    double scale = epj / factorial(j);
    if (j <= k) continue;
    const auto& level = coeff[static_cast<std::size_t>(j - 1)];
    for (std::size_t su = 0; su < us.idx.size(); ++su) {
      const auto& c = level[us.idx[su]];
      for (int sx = 0; sx < 4; ++sx) {
        double wmix = scale * us.w[su] * xw[sx];
        if (wmix == 0.0) continue;
        const double* rowt = c.theta.v.data() + static_cast<std::size_t>(xidx[sx]) * ny;
        const double* rowp = c.psi.v.data() + static_cast<std::size_t>(xidx[sx]) * ny;
        for (std::size_t i = 0; i < g.n_points; ++i) {
          double y = g.node(i) - xi;
          if (y < -yg.half_width || y > yg.half_width) continue;
          double t = (y + yg.half_width) / yg.spacing;
          std::ptrdiff_t i0 = static_cast<std::ptrdiff_t>(std::floor(t)) - 1;
          if (i0 < 0) i0 = 0;
          if (i0 > static_cast<std::ptrdiff_t>(ny) - 4) i0 = static_cast<std::ptrdiff_t>(ny) - 4;
          double ys[4], yw[4];
          for (int s = 0; s < 4; ++s)
            ys[s] = -yg.half_width + static_cast<double>(i0 + s) * yg.spacing;
          lagrange4(y, ys, yw);
          double vt = 0.0, vp = 0.0;
          for (int s = 0; s < 4; ++s) {
            vt += yw[s] * rowt[static_cast<std::size_t>(i0) + static_cast<std::size_t>(s)];
            vp += yw[s] * rowp[static_cast<std::size_t>(i0) + static_cast<std::size_t>(s)];
          }
          theta_hat[i] += wmix * vt;
          psi_hat[i] += wmix * vp;
        }
      }
    }
  }
}

double ManifoldExpansion::lambda_hat_at(double eps, double xi, double u, int depth) const {
  if (depth < 0) depth = n;
  if (eps == 0.0) return 0.0;

  UStencil us = u_stencil(u_samples, u, 0);
  std::ptrdiff_t xidx[4];
  double xs[4], xw[4];
  uniform_stencil(xi, -grid.xi_grid.half_width, grid.xi_grid.spacing, grid.xi_grid.n_points, true,
                  xidx, xs);
  lagrange4(xi, xs, xw);

  double out = 0.0;
  double epj = 1.0;
  for (int j = 1; j <= depth; ++j) {
    epj *= eps;
    if (j <= k) continue;
    double scale = epj / factorial(j);
    const auto& level = coeff[static_cast<std::size_t>(j - 1)];
    for (std::size_t su = 0; su < us.idx.size(); ++su) {
      const auto& lam = level[us.idx[su]].lambda;
      double v = 0.0;
      for (int sx = 0; sx < 4; ++sx) v += xw[sx] * lam[static_cast<std::size_t>(xidx[sx])];
      out += scale * us.w[su] * v;
    }
  }
  return out;
}

FieldPair evaluate_virtual_soliton(const ManifoldExpansion& exp, double eps,
                                   const SolitonParams& p, const Grid1D& g, int depth) {
  FieldPair base = soliton_pair(p, g);
  if (eps == 0.0) return base;
  if (exp.newton_eps_max > 0.0 && eps > exp.newton_eps_max) {
    static std::once_flag warned;
    std::call_once(warned, [&] {
      std::cerr << "evaluate_virtual_soliton: eps=" << eps
                << " beyond the probed refinement validity eps_max=" << exp.newton_eps_max
                << "\n";
    });
  }
  Field th, ps;
  exp.hat_at(eps, p.xi, p.u, g, th, ps, depth);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    base.theta[i] += th[i];
    base.psi[i] += ps[i];
  }
  return base;
}

double lambda_n(const ManifoldExpansion& exp, double eps, double xi, double u, int depth) {
  return exp.lambda_hat_at(eps, xi, u, depth);
}

// ---------------------------------------------------------------------------
// Newton refinement and residuals
// ---------------------------------------------------------------------------

FamilyState assemble_family_state(const ManifoldExpansion& exp, double eps, std::size_t iu,
                                  int depth) {
  if (depth < 0) depth = exp.n;
  const std::size_t nxi = exp.n_xi(), ny = exp.n_y();
  FamilyState st;
  st.iu = iu;
  st.u = exp.u_samples[iu];
  st.theta_hat = Array2D(nxi, ny);
  st.psi_hat = Array2D(nxi, ny);
  st.lambda.assign(nxi, 0.0);
  double epj = 1.0;
  for (int j = 1; j <= depth; ++j) {
    epj *= eps;
    if (j <= exp.k) continue;
    double scale = epj / factorial(j);
    const auto& c = exp.coeff[static_cast<std::size_t>(j - 1)][iu];
    for (std::size_t q = 0; q < st.theta_hat.v.size(); ++q) {
      st.theta_hat.v[q] += scale * c.theta.v[q];
      st.psi_hat.v[q] += scale * c.psi.v[q];
    }
    for (std::size_t m = 0; m < nxi; ++m) st.lambda[m] += scale * c.lambda[m];
  }
  return st;
}

namespace {

// Border of the iteration map at depth: d/du of the (depth-1)-Taylor
// polynomial of the full state, i.e. t2 plus hat corrections.
void iteration_border(const ManifoldExpansion& exp, double eps, std::size_t iu, int depth,
                      Array2D& bt, Array2D& bp) {
  const std::size_t nxi = exp.n_xi(), ny = exp.n_y();
  const double u = exp.u_samples[iu];
  bt = Array2D(nxi, ny);
  bp = Array2D(nxi, ny);
  for (std::size_t i = 0; i < ny; ++i) {
    double y = exp.grid.x_grid.node(i);
    double t2t = t2_theta(u, y), t2p = t2_psi(u, y);
    for (std::size_t m = 0; m < nxi; ++m) {
      bt.at(m, i) = t2t;
      bp.at(m, i) = t2p;
    }
  }
  auto w = exp.u_deriv_weights(iu, 1);
  double epj = 1.0;
  for (int j = 1; j <= depth - 1; ++j) {
    epj *= eps;
    if (j <= exp.k) continue;
    double scale = epj / factorial(j);
    for (std::size_t ju = 0; ju < exp.u_samples.size(); ++ju) {
      if (w[ju] == 0.0) continue;
      const auto& c = exp.coeff[static_cast<std::size_t>(j - 1)][ju];
      double f2 = scale * w[ju];
      for (std::size_t q = 0; q < bt.v.size(); ++q) {
        bt.v[q] += f2 * c.theta.v[q];
        bp.v[q] += f2 * c.psi.v[q];
      }
    }
  }
}

// G-residual of the iteration equation at depth for hat fields (xi-major).
void iteration_G(const ManifoldExpansion& exp, double eps, const FamilyState& st, int depth,
                 Array2D& g1, Array2D& g2out) {
  const std::size_t nxi = exp.n_xi(), ny = exp.n_y();
  const double u = st.u;
  const double gam = lorentz_gamma(u);
  const Grid1D& yg = exp.grid.x_grid;

  Array2D bt, bp;
  iteration_border(exp, eps, st.iu, depth, bt, bp);

  // linear part from the mode operator (same discrete derivatives as the
  // solver): zt = u(dxi-dy)th - ps, zp = -dy2 th + cos(theta_K) th + u(dxi-dy)ps
  Array2D zt, zp;
  {
    std::vector<double> lam0(nxi, 0.0);
    frakM_apply(u, exp.grid, st.theta_hat, st.psi_hat, lam0, zt, zp);
  }

  g1 = Array2D(nxi, ny);
  g2out = Array2D(nxi, ny);
  double ff = exp.F.force_factor(eps);
  for (std::size_t m = 0; m < nxi; ++m) {
    double xi = exp.grid.xi_grid.node(m);
    double cm = exp.chi.samples[m];
    for (std::size_t i = 0; i < ny; ++i) {
      double y = yg.node(i);
      double th0 = kink_theta(gam * y);
      double thh = st.theta_hat.at(m, i);
      // zt = u(dxi-dy)th - ps ; zp = -dy2 th + cos(theta_K) th + u(dxi-dy)ps
      // nonlinear correction: replace cos(theta_K)*th by sin(th0+th)-sin(th0)
      double lin = kink_cos_theta(gam * y) * thh;
      double nonlin = std::sin(th0 + thh) - std::sin(th0);
      g1.at(m, i) = zt.at(m, i) + st.lambda[m] * bt.at(m, i);
      g2out.at(m, i) = zp.at(m, i) - lin + nonlin - cm * ff * exp.F.f(y + xi) +
                       st.lambda[m] * bp.at(m, i);
    }
  }
}

double grid_l2(const Array2D& a, const Array2D& b, const Grid2D& g2) {
  double s = 0.0;
  for (std::size_t q = 0; q < a.v.size(); ++q) s += a.v[q] * a.v[q] + b.v[q] * b.v[q];
  return std::sqrt(s * g2.xi_grid.spacing * g2.x_grid.spacing);
}

}  // namespace

double iteration_residual(const ManifoldExpansion& exp, double eps, const FamilyState& st,
                          int depth) {
  if (depth < 0) depth = exp.n;
  Array2D g1, g2;
  iteration_G(exp, eps, st, depth, g1, g2);
  return grid_l2(g1, g2, exp.grid);
}

FamilyState newton_refine(const ManifoldExpansion& exp, double eps, std::size_t iu,
                          const FrakMSolver& solver, double tol, int max_iters, int depth) {
  if (depth < 0) depth = exp.n;
  FamilyState st = assemble_family_state(exp, eps, iu, depth);
  if (eps == 0.0) {
    st.refined = true;
    st.residual = 0.0;
    return st;
  }

  double prev = std::numeric_limits<double>::infinity();
  double first = 0.0;
  int grew = 0;
  std::string history;
  for (int it = 0; it <= max_iters; ++it) {
    Array2D g1, g2;
    iteration_G(exp, eps, st, depth, g1, g2);
    double res = grid_l2(g1, g2, exp.grid);
    if (it == 0) first = res;
    st.residual = res;
    st.newton_iters = it;
    {
      char buf[32];
      std::snprintf(buf, sizeof buf, " %.3e", res);
      history += buf;
    }
    if (res < tol) {
      st.refined = true;
      return st;
    }
    if (it == max_iters) {
      // iteration budget exhausted: accept a clearly contracting iterate,
      // reject a stalled one
      if (res < 1e-3 * first) {
        st.refined = true;
        return st;
      }
      break;
    }
    if (res > prev) {
      if (++grew >= 2) break;  // diverging: eps too large for the frozen linearization
    }
    prev = res;

    for (std::size_t q = 0; q < g1.v.size(); ++q) {
      g1.v[q] = -g1.v[q];
      g2.v[q] = -g2.v[q];
    }
    FrakMSolver::Solution d = solver.solve(g1, g2);
    for (std::size_t q = 0; q < d.theta.v.size(); ++q) {
      st.theta_hat.v[q] += d.theta.v[q];
      st.psi_hat.v[q] += d.psi.v[q];
    }
    for (std::size_t m = 0; m < st.lambda.size(); ++m) st.lambda[m] += d.lambda[m];
  }
  throw std::runtime_error("newton_refine: no convergence (eps outside the validity range);"
                           " residuals:" + history);
}

VirtualFamily build_family(const ManifoldExpansion& exp, double eps,
                           const std::vector<std::size_t>& iu_list, bool refine, int threads,
                           int depth) {
  if (depth < 0) depth = exp.n;
  VirtualFamily fam;
  fam.eps = eps;
  fam.depth = depth;
  fam.iu = iu_list;
  fam.refined = refine;
  fam.states.resize(iu_list.size());
  for (std::size_t s = 0; s < iu_list.size(); ++s) {
    std::size_t iu = iu_list[s];
    if (refine) {
      FrakMSolver solver(exp.u_samples[iu], exp.grid, threads);
      fam.states[s] = newton_refine(exp, eps, iu, solver, 1e-10, 12, depth);
    } else {
      fam.states[s] = assemble_family_state(exp, eps, iu, depth);
    }
  }
  return fam;
}

namespace {

// d/du across the family states at member fam_iu (Fornberg weights on the
// family's u values)
std::vector<double> family_u_weights(const VirtualFamily& fam, std::size_t fam_iu) {
  std::vector<double> us(fam.states.size());
  for (std::size_t s = 0; s < fam.states.size(); ++s) us[s] = fam.states[s].u;
  return fd_weights(us[fam_iu], us, 1);
}

}  // namespace

ResidualReport residual_Rn(const ManifoldExpansion& exp, const VirtualFamily& fam,
                           std::size_t xi_index, std::size_t fam_iu) {
  if (fam.states.size() < 3)
    throw std::invalid_argument("residual_Rn: need at least 3 family u samples");
  const std::size_t ny = exp.n_y();
  const double eps = fam.eps;
  const Grid1D& yg = exp.grid.x_grid;
  const double xi = exp.grid.xi_grid.node(xi_index);

  auto w = family_u_weights(fam, fam_iu);

  // D = Taylor_{depth-1} - state (hat level); R = lambda * d/du D
  Field r1(ny, 0.0), r2(ny, 0.0);
  for (std::size_t s = 0; s < fam.states.size(); ++s) {
    if (w[s] == 0.0) continue;
    FamilyState taylor = assemble_family_state(exp, eps, fam.iu[s], fam.depth - 1);
    const double* st_t = fam.states[s].theta_hat.v.data() + xi_index * ny;
    const double* st_p = fam.states[s].psi_hat.v.data() + xi_index * ny;
    const double* ta_t = taylor.theta_hat.v.data() + xi_index * ny;
    const double* ta_p = taylor.psi_hat.v.data() + xi_index * ny;
    for (std::size_t i = 0; i < ny; ++i) {
      r1[i] += w[s] * (ta_t[i] - st_t[i]);
      r2[i] += w[s] * (ta_p[i] - st_p[i]);
    }
  }
  double lam = fam.states[fam_iu].lambda[xi_index];
  for (std::size_t i = 0; i < ny; ++i) {
    r1[i] *= lam;
    r2[i] *= lam;
  }

  ResidualReport rep;
  rep.eps = eps;
  rep.r1_l2 = sobolev_norm(r1, yg, {0, 0});
  rep.r2_l2 = sobolev_norm(r2, yg, {0, 0});
  rep.r_l2 = std::sqrt(rep.r1_l2 * rep.r1_l2 + rep.r2_l2 * rep.r2_l2);
  // weighted with the lab-frame weight (1 + x^2)^{1/2}, x = y + xi
  Field rw1(ny), rw2(ny);
  for (std::size_t i = 0; i < ny; ++i) {
    double x = yg.node(i) + xi;
    double wgt = std::sqrt(1.0 + x * x);
    rw1[i] = wgt * r1[i];
    rw2[i] = wgt * r2[i];
  }
  rep.r1_w = sobolev_norm(rw1, yg, {0, 0});
  rep.r2_w = sobolev_norm(rw2, yg, {0, 0});
  return rep;
}

ResidualReport pde_defect(const ManifoldExpansion& exp, const VirtualFamily& fam,
                          std::size_t xi_index, std::size_t fam_iu) {
  const std::size_t nxi = exp.n_xi(), ny = exp.n_y();
  const double eps = fam.eps;
  const Grid1D& yg = exp.grid.x_grid;
  const double xi = exp.grid.xi_grid.node(xi_index);
  if (std::abs(xi) > exp.chi.Xi)
    throw std::invalid_argument("pde_defect: xi outside the cutoff plateau");

  const FamilyState& st = fam.states[fam_iu];
  const double u = st.u;
  const double gam = lorentz_gamma(u);

  // linear operator part with the solver's discrete derivatives:
  // dxi_t = u(dxi-dy)th - ps, dxi_p = -dy2 th + cos(theta_K) th + u(dxi-dy)ps
  Array2D dxi_t, dxi_p;
  {
    std::vector<double> lam0(nxi, 0.0);
    frakM_apply(u, exp.grid, st.theta_hat, st.psi_hat, lam0, dxi_t, dxi_p);
  }

  auto w = family_u_weights(fam, fam_iu);
  Field du_t(ny, 0.0), du_p(ny, 0.0);
  for (std::size_t s = 0; s < fam.states.size(); ++s) {
    if (w[s] == 0.0) continue;
    const double* t = fam.states[s].theta_hat.v.data() + xi_index * ny;
    const double* p = fam.states[s].psi_hat.v.data() + xi_index * ny;
    for (std::size_t i = 0; i < ny; ++i) {
      du_t[i] += w[s] * t[i];
      du_p[i] += w[s] * p[i];
    }
  }

  double ff = exp.F.force_factor(eps);
  double lam = st.lambda[xi_index];
  Field d1(ny), d2(ny);
  const double* th = st.theta_hat.v.data() + xi_index * ny;
  for (std::size_t i = 0; i < ny; ++i) {
    double y = yg.node(i);
    double th0 = kink_theta(gam * y);
    double lin = kink_cos_theta(gam * y) * th[i];
    double nonlin = std::sin(th0 + th[i]) - std::sin(th0);
    d1[i] = dxi_t.at(xi_index, i) + lam * (t2_theta(u, y) + du_t[i]);
    d2[i] = dxi_p.at(xi_index, i) - lin + nonlin - ff * exp.F.f(y + xi) +
            lam * (t2_psi(u, y) + du_p[i]);
  }

  ResidualReport rep;
  rep.eps = eps;
  rep.defect1_l2 = sobolev_norm(d1, yg, {0, 0});
  rep.defect2_l2 = sobolev_norm(d2, yg, {0, 0});
  rep.defect_l2 = std::sqrt(rep.defect1_l2 * rep.defect1_l2 + rep.defect2_l2 * rep.defect2_l2);
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

void write_f64(std::ofstream& os, const double* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_f64(std::ifstream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("manifold container: truncated file");
}

constexpr std::uint32_t kMagic = 0x534C4D56;  // "VMLS"
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_manifold(const ManifoldExpansion& exp, const std::string& dir) {
  std::string bin = dir + "/manifold.bin";
  std::ofstream os(bin, std::ios::binary);
  if (!os) throw std::runtime_error("save_manifold: cannot open " + bin);

  auto w32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  w32(kMagic);
  w32(kVersion);
  w32(static_cast<std::uint32_t>(exp.n));
  w32(static_cast<std::uint32_t>(exp.k));
  w32(static_cast<std::uint32_t>(exp.n_xi()));
  w32(static_cast<std::uint32_t>(exp.n_y()));
  w32(static_cast<std::uint32_t>(exp.u_samples.size()));
  w32(0);  // reserved
  double geo[4] = {exp.grid.xi_grid.half_width, exp.grid.x_grid.half_width, exp.chi.xi_s,
                   exp.newton_eps_max};
  write_f64(os, geo, 4);
  write_f64(os, exp.u_samples.data(), exp.u_samples.size());
  write_f64(os, exp.solve_residuals.data(), exp.solve_residuals.size());
  for (const auto& level : exp.coeff) {
    for (const auto& c : level) {
      write_f64(os, c.theta.v.data(), c.theta.v.size());
      write_f64(os, c.psi.v.data(), c.psi.v.size());
      write_f64(os, c.lambda.data(), c.lambda.size());
    }
  }
  os.close();

  nlohmann::json man;
  man["format"] = "sglab-manifold";
  man["version"] = kVersion;
  man["n"] = exp.n;
  man["k"] = exp.k;
  man["xi_points"] = exp.n_xi();
  man["x_points"] = exp.n_y();
  man["xi_half_width"] = exp.grid.xi_grid.half_width;
  man["x_half_width"] = exp.grid.x_grid.half_width;
  man["xi_s"] = exp.chi.xi_s;
  man["cutoff_Xi"] = exp.chi.Xi;
  man["u_samples"] = exp.u_samples;
  man["profile"] = exp.F.profile_id;
  man["amplitude"] = exp.F.amplitude;
  man["solve_residuals"] = exp.solve_residuals;
  std::ofstream ms(dir + "/manifest.json");
  ms << man.dump(2) << "\n";
}

ManifoldExpansion load_manifold(const std::string& dir) {
  nlohmann::json man;
  {
    std::ifstream ms(dir + "/manifest.json");
    if (!ms) throw std::runtime_error("load_manifold: missing manifest.json in " + dir);
    ms >> man;
  }

  std::string bin = dir + "/manifold.bin";
  std::ifstream is(bin, std::ios::binary);
  if (!is) throw std::runtime_error("load_manifold: cannot open " + bin);
  auto r32 = [&]() {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw std::runtime_error("manifold container: truncated header");
    return v;
  };
  if (r32() != kMagic) throw std::runtime_error("load_manifold: bad magic");
  std::uint32_t ver = r32();
  if (ver != kVersion) throw std::runtime_error("load_manifold: unsupported version");

  ManifoldExpansion exp;
  exp.n = static_cast<int>(r32());
  exp.k = static_cast<int>(r32());
  std::size_t nxi = r32(), ny = r32(), nu = r32();
  r32();
  double geo[4];
  read_f64(is, geo, 4);
  exp.grid.xi_grid = make_grid(geo[0], nxi, Boundary::periodic);
  exp.grid.x_grid = make_grid(geo[1], ny, Boundary::dirichlet_decay);
  exp.newton_eps_max = geo[3];
  exp.u_samples.resize(nu);
  read_f64(is, exp.u_samples.data(), nu);
  exp.solve_residuals.assign(static_cast<std::size_t>(exp.n), 0.0);
  read_f64(is, exp.solve_residuals.data(), exp.solve_residuals.size());
  exp.F = make_perturbation(man["profile"].get<std::string>(), man["amplitude"].get<double>(),
                            exp.k);
  exp.chi = make_cutoff(geo[2], exp.grid.xi_grid);
  exp.coeff.assign(static_cast<std::size_t>(exp.n), {});
  for (auto& level : exp.coeff) {
    level.resize(nu);
    for (auto& c : level) {
      c.theta = Array2D(nxi, ny);
      c.psi = Array2D(nxi, ny);
      c.lambda.assign(nxi, 0.0);
      read_f64(is, c.theta.v.data(), c.theta.v.size());
      read_f64(is, c.psi.v.data(), c.psi.v.size());
      read_f64(is, c.lambda.data(), c.lambda.size());
    }
  }
  return exp;
}

}  // namespace sglab

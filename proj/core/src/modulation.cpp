#include "sglab/modulation.hpp"

#include <cmath>
#include <stdexcept>

namespace sglab {

namespace {

struct Rhs2 {
  double dxi, du;
};

template <typename F>
void rk4_march(double& xi, double& u, double dt, const F& f) {
  Rhs2 k1 = f(xi, u);
  Rhs2 k2 = f(xi + 0.5 * dt * k1.dxi, u + 0.5 * dt * k1.du);
  Rhs2 k3 = f(xi + 0.5 * dt * k2.dxi, u + 0.5 * dt * k2.du);
  Rhs2 k4 = f(xi + dt * k3.dxi, u + dt * k3.du);
  xi += dt / 6.0 * (k1.dxi + 2.0 * k2.dxi + 2.0 * k3.dxi + k4.dxi);
  u += dt / 6.0 * (k1.du + 2.0 * k2.du + 2.0 * k3.du + k4.du);
}

}  // namespace

ParamSeries integrate_exact_ode(double xi0, double u0, const ManifoldExpansion& exp, double eps,
                                double T, double dt) {
  if (dt <= 0.0 || T < 0.0) throw std::invalid_argument("integrate_exact_ode: bad horizon");
  ParamSeries out;
  double xi = xi0, u = u0;
  std::size_t n = static_cast<std::size_t>(std::llround(T / dt));
  out.t.reserve(n + 1);
  out.xi.reserve(n + 1);
  out.u.reserve(n + 1);
  double u_hi = exp.u_samples.empty() ? 1.0 : exp.u_samples.back();
  double u_lo = exp.u_samples.empty() ? -1.0 : exp.u_samples.front();

  auto f = [&](double x, double v) -> Rhs2 {
    return {v, lambda_n(exp, eps, x, v)};
  };
  out.t.push_back(0.0);
  out.xi.push_back(xi);
  out.u.push_back(u);
  for (std::size_t k = 1; k <= n; ++k) {
    rk4_march(xi, u, dt, f);
    if (u <= u_lo || u >= u_hi) {
      out.strip_exit = true;
      break;
    }
    out.t.push_back(static_cast<double>(k) * dt);
    out.xi.push_back(xi);
    out.u.push_back(u);
  }
  return out;
}

ParamSeries rescale(const ParamSeries& series, double eps, int k) {
  double beta = 0.5 * (k + 1);
  double f = std::pow(eps, beta);
  ParamSeries out;
  out.strip_exit = series.strip_exit;
  out.t.resize(series.t.size());
  out.xi = series.xi;
  out.u.resize(series.u.size());
  for (std::size_t i = 0; i < series.t.size(); ++i) {
    out.t[i] = f * series.t[i];
    out.u[i] = series.u[i] / f;
  }
  return out;
}

ParamSeries unrescale(const ParamSeries& series, double eps, int k) {
  double beta = 0.5 * (k + 1);
  double f = std::pow(eps, beta);
  ParamSeries out;
  out.strip_exit = series.strip_exit;
  out.t.resize(series.t.size());
  out.xi = series.xi;
  out.u.resize(series.u.size());
  for (std::size_t i = 0; i < series.t.size(); ++i) {
    out.t[i] = series.t[i] / f;
    out.u[i] = series.u[i] * f;
  }
  return out;
}

ModulationResiduals modulation_residuals(const ParamSeries& series, const ManifoldExpansion& exp,
                                         double eps) {
  const std::size_t n = series.t.size();
  if (n < 3) throw std::invalid_argument("modulation_residuals: need at least 3 snapshots");
  double dt = series.t[1] - series.t[0];
  for (std::size_t i = 1; i + 1 < n; ++i)
    if (std::abs((series.t[i + 1] - series.t[i]) - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
      throw std::invalid_argument("modulation_residuals: snapshots not uniformly spaced");

  ModulationResiduals out;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    double xid = (series.xi[i + 1] - series.xi[i - 1]) / (2.0 * dt);
    double ud = (series.u[i + 1] - series.u[i - 1]) / (2.0 * dt);
    out.t.push_back(series.t[i]);
    out.xi_residual.push_back(std::abs(xid - series.u[i]));
    out.u_residual.push_back(std::abs(ud - lambda_n(exp, eps, series.xi[i], series.u[i])));
  }
  return out;
}

double gronwall_constant(const ManifoldExpansion& exp, double eps, int k) {
  double beta = 0.5 * (k + 1);
  double e2b = std::pow(eps, 2.0 * beta);
  double e1b = std::pow(eps, beta);

  // sample partial derivatives of lambda_n over the plateau strip
  double sup1 = 0.0, sup2 = 0.0;
  const double xi_max = exp.chi.Xi - 1.0;
  const double u_cap = 0.8 * exp.u_samples.back();
  const double hxi = 1e-4, hu = 1e-4;
  for (int i = -8; i <= 8; ++i) {
    double xi = xi_max * i / 8.0;
    for (int j = -4; j <= 4; ++j) {
      double u = u_cap * j / 4.0;
      double d1 = (lambda_n(exp, eps, xi + hxi, u) - lambda_n(exp, eps, xi - hxi, u)) / (2 * hxi);
      double d2 = (lambda_n(exp, eps, xi, u + hu) - lambda_n(exp, eps, xi, u - hu)) / (2 * hu);
      sup1 = std::max(sup1, std::abs(d1));
      sup2 = std::max(sup2, std::abs(d2));
    }
  }
  return std::max({1.0, sup1 / e2b, sup2 / e1b});
}

GronwallReport gronwall_compare(const ManifoldExpansion& exp, double eps, double xi0,
                                double u_hat0, double S, double ds, const DefectFn& defect1,
                                const DefectFn& defect2) {
  double beta = 0.5 * (exp.k + 1);
  double e2b = std::pow(eps, 2.0 * beta);
  double e1b = std::pow(eps, beta);

  auto rescaled_rhs = [&](double x, double v) -> Rhs2 {
    return {v, lambda_n(exp, eps, x, e1b * v) / e2b};
  };

  GronwallReport rep;
  rep.C = gronwall_constant(exp, eps, exp.k);

  double xe = xi0, ue = u_hat0;   // exact
  double xt = xi0, ut = u_hat0;   // with injected defects
  double sup_defect = std::max(std::abs(defect1(0.0)), std::abs(defect2(0.0)));
  std::size_t n = static_cast<std::size_t>(std::llround(S / ds));
  for (std::size_t k = 1; k <= n; ++k) {
    double s0 = static_cast<double>(k - 1) * ds;
    rk4_march(xe, ue, ds, rescaled_rhs);
    auto tilde_rhs = [&](double x, double v) -> Rhs2 {
      Rhs2 r = rescaled_rhs(x, v);
      // defects sampled at the step base time (piecewise-constant injection)
      return {r.dxi + defect1(s0), r.du + defect2(s0)};
    };
    rk4_march(xt, ut, ds, tilde_rhs);
    sup_defect = std::max({sup_defect, std::abs(defect1(s0)), std::abs(defect2(s0))});
    rep.max_dev_xi = std::max(rep.max_dev_xi, std::abs(xt - xe));
    rep.max_dev_u = std::max(rep.max_dev_u, std::abs(ut - ue));
  }
  rep.bound = std::sqrt(2.0) * S * std::exp(2.0 * rep.C * S) * sup_defect;
  rep.within_bound = std::max(rep.max_dev_xi, rep.max_dev_u) <= rep.bound + 1e-15;
  return rep;
}

ParameterErrorReport parameter_error(const ParamSeries& projected, const ManifoldExpansion& exp,
                                     double eps, int k) {
  if (projected.t.size() < 2) throw std::invalid_argument("parameter_error: series too short");
  double beta = 0.5 * (k + 1);
  double e1b = std::pow(eps, beta);
  double e2b = e1b * e1b;

  auto rhs = [&](double x, double v) -> Rhs2 {
    return {v, lambda_n(exp, eps, x, e1b * v) / e2b};
  };

  // substeps chosen to land exactly on the snapshot times
  double dt_snap = projected.t[1] - projected.t[0];
  double ds_snap = e1b * dt_snap;
  int m = std::max(1, static_cast<int>(std::ceil(ds_snap / 1e-3)));
  double ds = ds_snap / m;

  ParameterErrorReport rep;
  double x = projected.xi.front();
  double v = projected.u.front() / e1b;
  for (std::size_t idx = 0;; ++idx) {
    rep.max_dev_xi = std::max(rep.max_dev_xi, std::abs(projected.xi[idx] - x));
    rep.max_dev_u = std::max(rep.max_dev_u, std::abs(projected.u[idx] - e1b * v));
    if (idx + 1 >= projected.t.size()) break;
    for (int s = 0; s < m; ++s) rk4_march(x, v, ds, rhs);
  }
  return rep;
}

}  // namespace sglab

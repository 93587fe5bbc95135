#include "sglab/kink.hpp"

#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace sglab {

KinkProfile kink_profile(double Z) {
  return {kink_theta(Z), kink_dtheta(Z), kink_ddtheta(Z)};
}

double lorentz_gamma(double u) {
  if (!(std::abs(u) < 1.0)) throw std::invalid_argument("lorentz_gamma: |u| must be < 1");
  return 1.0 / std::sqrt(1.0 - u * u);
}

FieldPair soliton_pair(const SolitonParams& p, const Grid1D& g) {
  const double gam = lorentz_gamma(p.u);
  FieldPair fp;
  fp.theta.resize(g.n_points);
  fp.psi.resize(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    double Z = gam * (g.node(i) - p.xi);
    fp.theta[i] = kink_theta(Z);
    fp.psi[i] = -p.u * gam * kink_dtheta(Z);
  }
  return fp;
}

double t1_theta(double u, double y) { return -lorentz_gamma(u) * kink_dtheta(lorentz_gamma(u) * y); }
double t1_psi(double u, double y) {
  double gam = lorentz_gamma(u);
  return u * gam * gam * kink_ddtheta(gam * y);
}
double t2_theta(double u, double y) {
  double gam = lorentz_gamma(u);
  return u * gam * gam * gam * y * kink_dtheta(gam * y);
}
double t2_psi(double u, double y) {
  double gam = lorentz_gamma(u);
  double g3 = gam * gam * gam;
  return -g3 * kink_dtheta(gam * y) - u * u * g3 * gam * y * kink_ddtheta(gam * y);
}

std::pair<FieldPair, FieldPair> tangent_vectors(const SolitonParams& p, const Grid1D& g) {
  if (!(std::abs(p.u) < 1.0)) throw std::invalid_argument("tangent_vectors: |u| must be < 1");
  FieldPair t1, t2;
  t1.theta.resize(g.n_points);
  t1.psi.resize(g.n_points);
  t2.theta.resize(g.n_points);
  t2.psi.resize(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    double y = g.node(i) - p.xi;
    t1.theta[i] = t1_theta(p.u, y);
    t1.psi[i] = t1_psi(p.u, y);
    t2.theta[i] = t2_theta(p.u, y);
    t2.psi[i] = t2_psi(p.u, y);
  }
  return {t1, t2};
}

namespace {
std::mutex g_cache_mutex;
std::map<std::tuple<double, std::size_t, int>, KinkConstants> g_cache;
}  // namespace

KinkConstants kink_constants(const Grid1D& g) {
  auto key = std::make_tuple(g.half_width, g.n_points, static_cast<int>(g.boundary));
  {
    std::lock_guard<std::mutex> lk(g_cache_mutex);
    auto it = g_cache.find(key);
    if (it != g_cache.end()) return it->second;
  }
  Field dk(g.n_points), ddk(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    double Z = g.node(i);
    double d = kink_dtheta(Z);
    double dd = kink_ddtheta(Z);
    dk[i] = d * d;
    ddk[i] = dd * dd;
  }
  KinkConstants c{integrate(dk, g), integrate(ddk, g)};
  std::lock_guard<std::mutex> lk(g_cache_mutex);
  g_cache.emplace(key, c);
  return c;
}

double soliton_mass(const Grid1D& g) { return kink_constants(g).mass; }

}  // namespace sglab

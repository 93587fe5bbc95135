#include "sglab/pde.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sglab {

FieldPair rhs(const SimState& s) {
  const Grid1D& g = s.grid;
  FieldPair out;
  out.theta = s.fields.psi;
  Field d2 = derivative(s.fields.theta, g, 2);
  Field force = s.F.force(s.eps, g);
  out.psi.resize(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i)
    out.psi[i] = d2[i] - std::sin(s.fields.theta[i]) + force[i];
  return out;
}

namespace {

// Interior update with the symmetric central stencil; the outermost two
// nodes on each side are clamped to their far-field values (the tails sit
// below roundoff there, and one-sided rows would admit a slowly growing
// boundary mode).
void kick(SimState& s, double tau, const Field& force) {
  const std::size_t n = s.grid.n_points;
  const double c = 1.0 / (12.0 * s.grid.spacing * s.grid.spacing);
  const Field& th = s.fields.theta;
  for (std::size_t i = 2; i + 2 < n; ++i) {
    double d2 = c * (-th[i - 2] + 16.0 * th[i - 1] - 30.0 * th[i] + 16.0 * th[i + 1] - th[i + 2]);
    s.fields.psi[i] += tau * (d2 - std::sin(th[i]) + force[i]);
  }
}

void drift(SimState& s, double tau) {
  const std::size_t n = s.grid.n_points;
  for (std::size_t i = 2; i + 2 < n; ++i) s.fields.theta[i] += tau * s.fields.psi[i];
}

}  // namespace

SimState step(const SimState& s, double dt) {
  if (std::abs(dt) > 0.5 * s.grid.spacing)
    throw std::invalid_argument("step: CFL violation, need |dt| <= 0.5*spacing");
  SimState out = s;
  Field force = s.F.force(s.eps, s.grid);
  kick(out, 0.5 * dt, force);
  drift(out, dt);
  kick(out, 0.5 * dt, force);
  out.t = s.t + dt;
  return out;
}

Trajectory simulate(const SimState& init, double T, double dt,
                    const std::vector<Observer>& observers, std::size_t stride,
                    bool keep_states) {
  if (dt <= 0.0) throw std::invalid_argument("simulate: dt must be positive");
  if (dt > 0.5 * init.grid.spacing)
    throw std::invalid_argument("simulate: CFL violation, need dt <= 0.5*spacing");

  Trajectory traj;
  traj.dt = dt;

  SimState s = init;
  Field force = init.F.force(init.eps, init.grid);
  std::size_t n_steps = static_cast<std::size_t>(std::llround(T / dt));
  if (stride == 0) stride = n_steps == 0 ? 1 : n_steps;

  auto emit = [&](const SimState& st) {
    traj.times.push_back(st.t);
    for (auto& ob : observers) ob(st);
    if (keep_states) traj.states.push_back(st);
  };
  emit(s);
  if (n_steps == 0) {
    if (!keep_states) traj.states.push_back(s);
    return traj;
  }

  for (std::size_t k = 1; k <= n_steps; ++k) {
    kick(s, 0.5 * dt, force);
    drift(s, dt);
    kick(s, 0.5 * dt, force);
    s.t = init.t + static_cast<double>(k) * dt;
    if (k % stride == 0 || k == n_steps) {
      // cheap NaN tripwire at observer cadence
      double probe = s.fields.theta[s.grid.n_points / 2] + s.fields.psi[s.grid.n_points / 3];
      if (!std::isfinite(probe))
        throw std::runtime_error("simulate: state became non-finite at t=" + std::to_string(s.t));
      emit(s);
    }
  }
  if (!keep_states) traj.states.push_back(s);
  return traj;
}

Functionals functionals(const SimState& s) {
  const Grid1D& g = s.grid;
  Field dx = derivative(s.fields.theta, g, 1);
  Field h(g.n_points), pi(g.n_points), fth(g.n_points);
  Field force = s.F.force(s.eps, g);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    double ps = s.fields.psi[i];
    double th = s.fields.theta[i];
    h[i] = 0.5 * (ps * ps + dx[i] * dx[i] + 2.0 * (1.0 - std::cos(th)));
    pi[i] = ps * dx[i];
    fth[i] = force[i] * th;
  }
  Functionals out;
  out.H = integrate(h, g);
  out.Pi = integrate(pi, g);
  out.H_eps = out.H - integrate(fth, g);
  return out;
}

double boundary_activity(const SimState& s, double margin) {
  const Grid1D& g = s.grid;
  Field dx = derivative(s.fields.theta, g, 1);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.n_points; ++i) {
    double x = g.node(i);
    if (g.half_width - std::abs(x) > margin) continue;
    worst = std::max(worst, std::abs(s.fields.psi[i]) + std::abs(dx[i]));
  }
  return worst;
}

}  // namespace sglab

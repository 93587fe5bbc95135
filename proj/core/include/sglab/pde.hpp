#pragma once

#include <functional>
#include <vector>

#include "sglab/grid.hpp"
#include "sglab/manifold.hpp"

namespace sglab {

struct SimState {
  double t = 0.0;
  FieldPair fields;
  double eps = 0.0;
  PerturbationSpec F;
  Grid1D grid;
};

// (theta_t, psi_t) = (psi, theta_xx - sin theta + F(eps, x))
FieldPair rhs(const SimState& s);

// One Strang step of the kinetic/potential split: half-kick on psi with the
// full force (banded second difference included), drift on theta, half-kick.
// Second order, exactly time-reversible for time-independent F.
SimState step(const SimState& s, double dt);

struct Trajectory {
  std::vector<double> times;
  std::vector<SimState> states;  // at observer stride (last state always kept)
  double dt = 0.0;
  std::string scheme = "strang-kdk";
};

using Observer = std::function<void(const SimState&)>;

// Marches to T, invoking observers every `stride` steps (and at t=0 and t=T).
// Aborts with a diagnostic on NaN. Stores states at the observer stride when
// keep_states is set.
Trajectory simulate(const SimState& init, double T, double dt,
                    const std::vector<Observer>& observers = {}, std::size_t stride = 0,
                    bool keep_states = false);

struct Functionals {
  double H = 0.0;      // unperturbed energy
  double Pi = 0.0;     // momentum
  double H_eps = 0.0;  // perturbed Hamiltonian H - integral F*theta
};

Functionals functionals(const SimState& s);

// Far-field activity monitor: max |psi| + |theta_x| within `margin` of the
// boundary (used to verify the wake stays away from the domain edge).
double boundary_activity(const SimState& s, double margin = 10.0);

}  // namespace sglab

#pragma once

#include <functional>
#include <vector>

#include "sglab/decomp.hpp"
#include "sglab/manifold.hpp"

namespace sglab {

struct ParamSeries {
  std::vector<double> t;
  std::vector<double> xi;
  std::vector<double> u;
  bool strip_exit = false;
};

// Classic RK4 for xi' = u, u' = lambda_n(xi, u).
ParamSeries integrate_exact_ode(double xi0, double u0, const ManifoldExpansion& exp, double eps,
                                double T, double dt);

// s = eps^beta t, beta = (k+1)/2: (xi_hat(s), u_hat(s)) =
// (xi(s/eps^beta), u(s/eps^beta)/eps^beta).
ParamSeries rescale(const ParamSeries& series, double eps, int k);
ParamSeries unrescale(const ParamSeries& series, double eps, int k);

// |xi_dot - u| and |u_dot - lambda| from centered differences of projected
// parameters at a uniform snapshot stride.
struct ModulationResiduals {
  std::vector<double> t;
  std::vector<double> xi_residual;
  std::vector<double> u_residual;
};

ModulationResiduals modulation_residuals(const ParamSeries& series, const ManifoldExpansion& exp,
                                         double eps);

// Rescaled comparison with injected defects (Gronwall/Duhamel bound).
struct GronwallReport {
  double max_dev_xi = 0.0;
  double max_dev_u = 0.0;
  double bound = 0.0;
  double C = 0.0;
  bool within_bound = false;
};

using DefectFn = std::function<double(double)>;

GronwallReport gronwall_compare(const ManifoldExpansion& exp, double eps, double xi0,
                                double u_hat0, double S, double ds, const DefectFn& defect1,
                                const DefectFn& defect2);

// sup deviations between projected parameters from a PDE run and the exact
// rescaled ODE started from the same data.
struct ParameterErrorReport {
  double max_dev_xi = 0.0;
  double max_dev_u = 0.0;
};

ParameterErrorReport parameter_error(const ParamSeries& projected, const ManifoldExpansion& exp,
                                     double eps, int k);

// Numerically estimated Gronwall constant C = max(1, sup|d1 lambda|/eps^{2beta},
// sup|d2 lambda|/eps^beta) over the sampled strip.
double gronwall_constant(const ManifoldExpansion& exp, double eps, int k);

}  // namespace sglab

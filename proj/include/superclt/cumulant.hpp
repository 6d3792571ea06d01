#pragma once

#include <cstddef>
#include <vector>

#include "superclt/model.hpp"
#include "superclt/spectral.hpp"

namespace superclt {

struct CumulantSolution {
  Vec f;                     // terminal data
  std::vector<double> grid;  // increasing, starting at 0
  std::vector<Vec> V;        // V[i] = V_{grid[i]}(f)
  std::size_t steps = 0;     // accepted integrator steps
  // Max-norm defect of the mild (integral) form at the final grid time,
  // V_t + int_0^t T_s[beta psi0(., V_{t-s})] ds - T_t f, evaluated by
  // high-order quadrature. Solutions are accepted when this is <= 1e-7.
  double integral_residual = 0.0;
};

// Integrates dV/dt = L V - beta .* psi0(., V), V_0 = f >= 0, where
// psi0(x, v) = b(x) v^2 + sum_k r_k (e^{-v y_k} - 1 + v y_k),
// and reports V on the requested grid plus the mild-form residual.
CumulantSolution solve_cumulant(const Scenario& sc, const SpectralSystem& sys,
                                const Vec& f, double t_max,
                                const std::vector<double>& grid);

// E exp(-<f, X_t>) = exp(-<mu, V_t(f)>) for f >= 0.
double laplace_X(const Scenario& sc, const SpectralSystem& sys, const Vec& f,
                 double t, const Vec& mu);

// E exp(-<f, Y_t>) = exp(-<mu, V_t(f)> - int_0^t phi(V_s(f)) ds) with
// phi(g) = <eta, g> + sum_j rate_j (1 - e^{-<nu_j, g>}).
double laplace_Y(const Scenario& sc, const SpectralSystem& sys, const Vec& f,
                 double t, const Vec& mu);

// Laplace transform extended to signed data with small magnitude, for the
// finite-difference moment cross-checks (the transform is evaluated at
// +/- theta f). The flow stays bounded for the tiny |f| used there; callers
// must not rely on this for general signed f. `tol` is the integrator
// tolerance (the checks tighten it to keep difference quotients clean).
double laplace_Y_signed(const Scenario& sc, const SpectralSystem& sys,
                        const Vec& f, double t, const Vec& mu,
                        double tol = 1e-10);

}  // namespace superclt

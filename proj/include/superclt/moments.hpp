#pragma once

#include <optional>

#include "superclt/model.hpp"
#include "superclt/spectral.hpp"

namespace superclt {

struct MomentValues {
  double t = 0.0;
  double mean = 0.0;
  double second = 0.0;
  double variance = 0.0;  // sum of the three variance terms below

  double mean_initial = 0.0;      // <mu, T_t f>
  double mean_immigration = 0.0;  // int_0^t Gamma(T_s f) ds

  // int_0^t <mu, T_s[A (T_{t-s} f)^2]> ds
  double var_branch_initial = 0.0;
  // int_0^t Gamma-measure of the running branching variance of a unit mass,
  // i.e. int_0^t sum_x Gamma(dx) Var_x<f, X_u> du
  double var_branch_immigration = 0.0;
  // sum_j rate_j int_0^t <nu_j, T_s f>^2 ds
  double var_H_direct = 0.0;
};

// E<f, Y_t> = <mu, T_t f> + int_0^t Gamma(T_s f) ds, with the time integral
// in closed form through the eigen-expansion.
double mean_Y(const Scenario& sc, const SpectralSystem& sys, const Vec& f,
              double t, const Vec& mu);

// Full second-moment decomposition of <f, Y_t>. The variance field is
// assembled from the three integral terms directly (never as second - mean^2)
// so it stays accurate when mean^2 dominates.
MomentValues second_moment_Y(const Scenario& sc, const SpectralSystem& sys,
                             const Vec& f, double t, const Vec& mu);

// Growth diagnostics of the immigration against the heat-kernel diagonal:
//   gamma_a_half   = int_0^t0 Gamma(a_{2s}^{1/2}) ds
//   h_a_half_sq    = sum_j rate_j int_0^t0 <nu_j, a_{2s}^{1/2}>^2 ds
// Both are finite here for every t0; the values are reported, not asserted.
struct ImmigrationKernelIntegrals {
  double gamma_a_half = 0.0;
  double h_a_half_sq = 0.0;
};
ImmigrationKernelIntegrals immigration_kernel_integrals(
    const Scenario& sc, const SpectralSystem& sys, double t0);

// Long-time limit of the scaled second moment / variance of <f, Y_t>,
// dispatching on the class of f:
//   Cs: lim e^{lambda_1 t} E<f,Y_t>^2
//       = sigma_f^2 (mu(phi1) + Gamma(phi1)/(-lambda_1))
//   Cc: lim t^{-1} e^{lambda_1 t} Var<f,Y_t>
//       = (mu(phi1) + Gamma(phi1)/(-lambda_1)) <A f1^2, phi1>_m
//   Cl: lim e^{2 lambda_g t} Var<f,Y_t>
//       = mu(F) + Gamma(F)/(-2 lambda_g)
//         + sum_j rate_j <nu_j, f1>^2 / (-2 lambda_g),
//       F = int_0^inf e^{2 lambda_g s} T_s(A f1^2) ds
// where lambda_g is the exponent of f's leading group. Mixed-class profiles
// are rejected.
double variance_limit(const Scenario& sc, const SpectralSystem& sys,
                      const FunctionProfile& f, const Vec& mu);

struct CltConstants {
  std::optional<double> sigma2_f;  // int_0^inf e^{lambda_1 s} <A (T_s f)^2, phi1>_m ds
  std::optional<double> rho2_h;    // <A h^2, phi1>_m
  std::optional<double> beta2_g;   // int_0^inf e^{-lambda_1 s} <A (I_s g)^2, phi1>_m ds
  double mean_Wtilde = 0.0;        // mu(phi1) + Gamma(phi1)/(-lambda_1)
  double var_Wtilde = 0.0;         // Cl variance limit for f = phi1
  double gamma_phi = 0.0;          // Gamma(phi1)
};

// Profiles are optional because not every scenario admits every class (a
// critical eigenvalue with 2 lambda_k = lambda_1 need not exist, and when it
// sits at the bottom of the spectrum no Cs function exists either). Provided
// profiles must carry the class the constant calls for.
CltConstants clt_constants(const Scenario& sc, const SpectralSystem& sys,
                           const std::optional<FunctionProfile>& f,
                           const std::optional<FunctionProfile>& h,
                           const std::optional<FunctionProfile>& g,
                           const Vec& mu);

struct MartingaleConstants {
  double mean_H = 0.0;             // <mu, phi_j^(k)>, constant in t
  double gamma_correction = 0.0;   // Gamma(phi_j^(k)) / (-lambda_k)
  double mean_Winf = 0.0;          // mean_H + gamma_correction
};

// Constants of the martingale e^{lambda_k t}<phi_j^(k), Y_t>
//   - lambda_k^{-1}(e^{lambda_k t} - 1) Gamma(phi_j^(k))
// and of its limit. k, j are 1-based; requires lambda_1 > 2 lambda_k (the
// square-integrability condition for the limit).
MartingaleConstants martingale_constants(const Scenario& sc,
                                         const SpectralSystem& sys, int k,
                                         int j, const Vec& mu);

}  // namespace superclt

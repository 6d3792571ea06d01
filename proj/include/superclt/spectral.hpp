#pragma once

#include <limits>
#include <vector>

#include "superclt/model.hpp"

namespace superclt {

// Eigen-decomposition of the mean-flow generator L = Q + diag(alpha).
// L is m-symmetric, so D^{1/2} L D^{-1/2} with D = diag(m) is symmetric and
// the eigenfunctions can be chosen m-orthonormal. Eigenvalues are stored as
// the decay exponents lambda_k (the spectrum of L is {-lambda_k}), grouped
// into distinct values in increasing order, so lambda[0] is the principal
// exponent and supercriticality means lambda[0] < 0.
struct SpectralSystem {
  Vec m;
  Mat L;
  Vec alpha;  // cached branching drift coefficients
  Vec A;      // cached local variance coefficients

  std::vector<double> lambda;  // distinct, increasing
  std::vector<Mat> phi;        // phi[k]: n x n_k, columns m-orthonormal
  Vec phi1;                    // principal eigenfunction, positive entries

  int n() const { return static_cast<int>(m.size()); }
  int groups() const { return static_cast<int>(lambda.size()); }
  int multiplicity(int k) const { return static_cast<int>(phi[k].cols()); }

  // <f, g>_m = sum_i m_i f_i g_i
  double inner_m(const Vec& f, const Vec& g) const {
    return (f.array() * g.array() * m.array()).sum();
  }
};

enum class FnClass { Cl, Cc, Cs, Mixed, Zero };

const char* to_string(FnClass c);

// Sentinel for the leading index of the zero function.
inline constexpr int kGammaInfinity = std::numeric_limits<int>::max();

struct FunctionProfile {
  Vec f;
  std::vector<Vec> coeffs;  // coeffs[k](j) = <f, phi_j^(k)>_m
  int gamma = kGammaInfinity;  // 1-based index of first group with support
  Vec f1;                      // projection onto the leading group
  FnClass space_class = FnClass::Zero;
  // Smallest |2 lambda_k - lambda_1| over supported groups, relative to
  // max(1, |lambda_1|); makes borderline classifications auditable.
  double crit_margin = 0.0;

  bool supported(int k) const;  // group k (0-based) carries a coefficient
};

// Relative tolerance for pooling nearly equal eigenvalues and for deciding
// the 2 lambda_k vs lambda_1 comparison.
inline constexpr double kEigenClusterTol = 1e-9;

SpectralSystem build_spectral(const Scenario& sc);

// T_t f via the eigen-expansion; exact for this finite symmetric system.
Vec semigroup_apply(const SpectralSystem& sys, double t, const Vec& f);

// q_t(x,y) with T_t f(x) = sum_y q_t(x,y) f(y) m_y; symmetric in (x,y).
Mat heat_kernel(const SpectralSystem& sys, double t);
Vec heat_kernel_diag(const SpectralSystem& sys, double t);  // a_t(x)

// sum_x a_t(x) m_x = sum_k n_k e^{-lambda_k t}; finiteness diagnostic.
double heat_trace(const SpectralSystem& sys, double t);

FunctionProfile profile_function(const SpectralSystem& sys, const Vec& f);

// I_s g: the flow of g restricted to eigengroups with 2 lambda_k < lambda_1.
// Only defined for profiles classified Cl (for which it is the full flow).
Vec leading_flow(const SpectralSystem& sys, const FunctionProfile& g, double s);

}  // namespace superclt

#include "superclt/moments.hpp"

#include <cmath>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace superclt {

namespace {

// int_0^t e^{-a s} ds
double exp_integral(double a, double t) {
  if (a == 0.0) return t;
  return -std::expm1(-a * t) / a;
}

// int_0^t u e^{-c u} du, stable for small |c t|
double ramp_exp_integral(double c, double t) {
  const double u = c * t;
  if (std::abs(u) < 1e-3) {
    // (1 - e^{-u}(1+u))/u^2 = 1/2 - u/3 + u^2/8 - u^3/30 + u^4/144 - ...
    const double series =
        0.5 + u * (-1.0 / 3 + u * (1.0 / 8 + u * (-1.0 / 30 + u * (1.0 / 144))));
    return t * t * series;
  }
  return (1.0 - std::exp(-u) * (1.0 + u)) / (c * c);
}

bool nearly_equal(double x, double y) {
  return std::abs(x - y) <= 1e-9 * std::max({1.0, std::abs(x), std::abs(y)});
}

// int_0^t e^{-c t} e^{(c - r) s} ds = (e^{-r t} - e^{-c t}) / (c - r),
// the s-integral of e^{-r s - c (t - s)}.
double bridge_integral(double r, double c, double t) {
  if (nearly_equal(r, c)) return t * std::exp(-r * t);
  return (std::exp(-r * t) - std::exp(-c * t)) / (c - r);
}

// int_0^t int_0^u e^{-r s - c (u - s)} ds du
double double_bridge_integral(double r, double c, double t) {
  if (nearly_equal(r, c)) return ramp_exp_integral(r, t);
  return (exp_integral(r, t) - exp_integral(c, t)) / (c - r);
}

struct Projected {
  std::vector<Vec> p;  // p[k]: projection of f onto eigengroup k
  std::vector<int> support;
};

Projected project(const SpectralSystem& sys, const Vec& f) {
  Projected pr;
  const Vec mf = sys.m.asDiagonal() * f;
  // Same dust rule as the function classifier: roundoff-level projections are
  // zero, otherwise they would put eigenfunction inputs in every group (and
  // feed divergent denominators in the limit integrals).
  const double tol = 1e-12 * std::max(1.0, std::sqrt(sys.inner_m(f, f)));
  pr.p.resize(sys.groups());
  for (int k = 0; k < sys.groups(); ++k) {
    Vec a = sys.phi[k].transpose() * mf;
    for (int j = 0; j < a.size(); ++j) {
      if (std::abs(a(j)) <= tol) a(j) = 0.0;
    }
    pr.p[k] = sys.phi[k] * a;
    if (a.cwiseAbs().maxCoeff() > 0) pr.support.push_back(k);
  }
  return pr;
}

void check_dims(const SpectralSystem& sys, const Vec& f, const Vec& mu) {
  if (f.size() != sys.n()) throw std::invalid_argument("f has wrong dimension");
  if (mu.size() != sys.n()) throw std::invalid_argument("mu has wrong dimension");
}

double principal_weight(const Scenario& sc, const SpectralSystem& sys, const Vec& mu) {
  return mu.dot(sys.phi1) +
         gamma_functional(sc.immigration, sys.phi1) / (-sys.lambda[0]);
}

}  // namespace

double mean_Y(const Scenario& sc, const SpectralSystem& sys, const Vec& f,
              double t, const Vec& mu) {
  check_dims(sys, f, mu);
  if (t < 0) throw std::invalid_argument("time must be >= 0");
  const Projected pr = project(sys, f);
  double mean = mu.dot(semigroup_apply(sys, t, f));
  for (int k : pr.support) {
    mean += gamma_functional(sc.immigration, pr.p[k]) * exp_integral(sys.lambda[k], t);
  }
  return mean;
}

MomentValues second_moment_Y(const Scenario& sc, const SpectralSystem& sys,
                             const Vec& f, double t, const Vec& mu) {
  check_dims(sys, f, mu);
  if (t < 0) throw std::invalid_argument("time must be >= 0");
  MomentValues out;
  out.t = t;
  out.mean_initial = mu.dot(semigroup_apply(sys, t, f));
  const Projected pr = project(sys, f);
  for (int k : pr.support) {
    out.mean_immigration +=
        gamma_functional(sc.immigration, pr.p[k]) * exp_integral(sys.lambda[k], t);
  }
  out.mean = out.mean_initial + out.mean_immigration;

  const Vec gm = gamma_measure(sc.immigration, sys.n());
  // The squared flow separates over eigengroup pairs: (T_{t-s} f)^2 =
  // sum_{k,l} e^{-(lambda_k + lambda_l)(t-s)} p_k p_l, and each product is
  // projected again to make the outer T_s a pure exponential in s. All time
  // integrals then have the closed forms above.
  for (int k : pr.support) {
    for (int l : pr.support) {
      const double c = sys.lambda[k] + sys.lambda[l];
      const Vec w = sys.A.array() * pr.p[k].array() * pr.p[l].array();
      const Vec mw = sys.m.asDiagonal() * w;
      for (int r = 0; r < sys.groups(); ++r) {
        const Vec coeff = sys.phi[r].transpose() * mw;
        const Vec pw = sys.phi[r] * coeff;  // P_r(A p_k p_l)
        const double from_mu = mu.dot(pw);
        const double from_gamma = gm.dot(pw);
        out.var_branch_initial += from_mu * bridge_integral(sys.lambda[r], c, t);
        out.var_branch_immigration +=
            from_gamma * double_bridge_integral(sys.lambda[r], c, t);
      }
    }
  }

  for (const auto& atom : sc.immigration.H_atoms) {
    for (int k : pr.support) {
      for (int l : pr.support) {
        out.var_H_direct += atom.rate * atom.nu.dot(pr.p[k]) * atom.nu.dot(pr.p[l]) *
                            exp_integral(sys.lambda[k] + sys.lambda[l], t);
      }
    }
  }

  out.variance = out.var_branch_initial + out.var_branch_immigration + out.var_H_direct;
  out.second = out.mean * out.mean + out.variance;
  return out;
}

ImmigrationKernelIntegrals immigration_kernel_integrals(const Scenario& sc,
                                                        const SpectralSystem& sys,
                                                        double t0) {
  if (!(t0 > 0)) throw std::invalid_argument("t0 must be > 0");
  using quad = boost::math::quadrature::gauss_kronrod<double, 15>;
  ImmigrationKernelIntegrals out;
  auto sqrt_diag = [&](double s) { return heat_kernel_diag(sys, 2 * s).cwiseSqrt(); };
  out.gamma_a_half = quad::integrate(
      [&](double s) { return gamma_functional(sc.immigration, sqrt_diag(s)); }, 0.0,
      t0, 12, 1e-12);
  for (const auto& atom : sc.immigration.H_atoms) {
    out.h_a_half_sq +=
        atom.rate * quad::integrate(
                        [&](double s) {
                          const double v = atom.nu.dot(sqrt_diag(s));
                          return v * v;
                        },
                        0.0, t0, 12, 1e-12);
  }
  return out;
}

namespace {

double sigma2_from_profile(const SpectralSystem& sys, const Projected& pr,
                           bool growing_side) {
  // growing_side = false: int_0^inf e^{lambda_1 s} <A (T_s f)^2, phi1> ds,
  //                       denominators lambda_k + lambda_l - lambda_1;
  // growing_side = true:  int_0^inf e^{-lambda_1 s} <A (I_s g)^2, phi1> ds,
  //                       denominators lambda_1 - lambda_k - lambda_l.
  double total = 0.0;
  for (int k : pr.support) {
    for (int l : pr.support) {
      const Vec w = sys.A.array() * pr.p[k].array() * pr.p[l].array();
      const double num = sys.inner_m(w, sys.phi1);
      const double den = growing_side
                             ? sys.lambda[0] - sys.lambda[k] - sys.lambda[l]
                             : sys.lambda[k] + sys.lambda[l] - sys.lambda[0];
      if (!(den > 0)) {
        throw std::logic_error(
            "divergent limit integral: function class is inconsistent with the spectrum");
      }
      total += num / den;
    }
  }
  return total;
}

}  // namespace

double variance_limit(const Scenario& sc, const SpectralSystem& sys,
                      const FunctionProfile& f, const Vec& mu) {
  if (mu.size() != sys.n()) throw std::invalid_argument("mu has wrong dimension");
  if (!(sys.lambda[0] < 0)) {
    throw std::invalid_argument("variance limits require a supercritical flow");
  }
  switch (f.space_class) {
    case FnClass::Zero:
      return 0.0;
    case FnClass::Mixed:
      throw std::invalid_argument(
          "mixed-class function: project onto a single regime first");
    case FnClass::Cs: {
      const Projected pr = project(sys, f.f);
      return sigma2_from_profile(sys, pr, false) * principal_weight(sc, sys, mu);
    }
    case FnClass::Cc: {
      const Vec w = sys.A.array() * f.f1.array() * f.f1.array();
      return principal_weight(sc, sys, mu) * sys.inner_m(w, sys.phi1);
    }
    case FnClass::Cl: {
      const double two_lg = 2.0 * sys.lambda[f.gamma - 1];
      const Vec w = sys.A.array() * f.f1.array() * f.f1.array();
      const Vec mw = sys.m.asDiagonal() * w;
      Vec F = Vec::Zero(sys.n());
      for (int r = 0; r < sys.groups(); ++r) {
        const double den = sys.lambda[r] - two_lg;
        if (!(den > 0)) {
          throw std::logic_error(
              "divergent limit integral: function class is inconsistent with the spectrum");
        }
        F += (sys.phi[r] * (sys.phi[r].transpose() * mw)) / den;
      }
      double value = mu.dot(F) + gamma_functional(sc.immigration, F) / (-two_lg);
      for (const auto& atom : sc.immigration.H_atoms) {
        const double nf = atom.nu.dot(f.f1);
        value += atom.rate * nf * nf / (-two_lg);
      }
      return value;
    }
  }
  throw std::logic_error("unreachable");
}

CltConstants clt_constants(const Scenario& sc, const SpectralSystem& sys,
                           const std::optional<FunctionProfile>& f,
                           const std::optional<FunctionProfile>& h,
                           const std::optional<FunctionProfile>& g,
                           const Vec& mu) {
  if (!(sys.lambda[0] < 0)) {
    throw std::invalid_argument("limit constants require a supercritical flow");
  }
  CltConstants out;
  if (f) {
    if (f->space_class != FnClass::Cs) throw std::invalid_argument("f must be Cs");
    out.sigma2_f = sigma2_from_profile(sys, project(sys, f->f), false);
  }
  if (h) {
    if (h->space_class != FnClass::Cc) throw std::invalid_argument("h must be Cc");
    const Vec w = sys.A.array() * h->f.array() * h->f.array();
    out.rho2_h = sys.inner_m(w, sys.phi1);
  }
  if (g) {
    if (g->space_class != FnClass::Cl) throw std::invalid_argument("g must be Cl");
    out.beta2_g = sigma2_from_profile(sys, project(sys, g->f), true);
  }
  out.gamma_phi = gamma_functional(sc.immigration, sys.phi1);
  out.mean_Wtilde = principal_weight(sc, sys, mu);
  out.var_Wtilde = variance_limit(sc, sys, profile_function(sys, sys.phi1), mu);
  return out;
}

MartingaleConstants martingale_constants(const Scenario& sc,
                                         const SpectralSystem& sys, int k, int j,
                                         const Vec& mu) {
  if (k < 1 || k > sys.groups()) throw std::invalid_argument("eigengroup index out of range");
  if (j < 1 || j > sys.multiplicity(k - 1)) {
    throw std::invalid_argument("eigenfunction index out of range");
  }
  const double lk = sys.lambda[k - 1];
  if (!(sys.lambda[0] > 2.0 * lk)) {
    throw std::invalid_argument(
        "martingale limit needs lambda_1 > 2 lambda_k (square integrability)");
  }
  if (mu.size() != sys.n()) throw std::invalid_argument("mu has wrong dimension");
  const Vec phi = sys.phi[k - 1].col(j - 1);
  MartingaleConstants out;
  out.mean_H = mu.dot(phi);
  out.gamma_correction = gamma_functional(sc.immigration, phi) / (-lk);
  out.mean_Winf = out.mean_H + out.gamma_correction;
  return out;
}

}  // namespace superclt

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <optional>

#include "canonical.hpp"
#include "oracle.hpp"
#include "superclt/moments.hpp"
#include "superclt/spectral.hpp"

using namespace superclt;

namespace {

FunctionProfile eigen_profile(const SpectralSystem& sys, int k) {
  return profile_function(sys, sys.phi[k].col(0));
}

}  // namespace

TEST_CASE("first moment spot value and oracle agreement") {
  const Scenario sc = canonical::s1();
  const SpectralSystem sys = build_spectral(sc);
  // closed form: 1.4 e^{t/2} - 0.4 at f = 1
  const double spot = mean_Y(sc, sys, Vec::Ones(1), 1.0, sc.mu0);
  CHECK(spot == doctest::Approx(1.90820977898017947).epsilon(1e-13));

  for (const Scenario& s : {canonical::s_jump(), canonical::s_arrivals(),
                            canonical::s2(1)}) {
    const SpectralSystem ss = build_spectral(s);
    Vec f(s.space.n);
    for (int i = 0; i < s.space.n; ++i) f(i) = 1.0 + 0.4 * i;
    for (double t : {0.5, 2.0}) {
      const double mine = mean_Y(s, ss, f, t, s.mu0);
      const double ref = oracle::mean_Y(s, f, t);
      CAPTURE(t);
      CHECK(mine == doctest::Approx(ref).epsilon(1e-10));
    }
  }
}

TEST_CASE("second moment decomposition against quadrature") {
  for (const Scenario& s : {canonical::s1(), canonical::s2(1),
                            canonical::s_jump(), canonical::s_arrivals()}) {
    const SpectralSystem ss = build_spectral(s);
    Vec f(s.space.n);
    for (int i = 0; i < s.space.n; ++i) f(i) = 0.7 + 0.6 * i;
    for (double t : {0.5, 2.0}) {
      const MomentValues mv = second_moment_Y(s, ss, f, t, s.mu0);
      const double var_ref = oracle::variance_Y(s, f, t);
      const double sec_ref = oracle::second_moment_Y(s, f, t);
      CAPTURE(t);
      CHECK(mv.variance == doctest::Approx(var_ref).epsilon(1e-8));
      CHECK(mv.second == doctest::Approx(sec_ref).epsilon(1e-8));
      CHECK(mv.mean == doctest::Approx(oracle::mean_Y(s, f, t)).epsilon(1e-10));
      CHECK(mv.variance ==
            doctest::Approx(mv.var_branch_initial + mv.var_branch_immigration +
                            mv.var_H_direct)
                .epsilon(1e-12));
      CHECK(mv.mean ==
            doctest::Approx(mv.mean_initial + mv.mean_immigration)
                .epsilon(1e-12));
    }
  }
}

TEST_CASE("degenerate exponent combinations take the limiting branch") {
  // a_hat = 4 puts 2 lambda_2 = lambda_1 exactly, so the eigen-expansion of
  // the variance hits the removable singularities of the bridge integrals.
  const Scenario sc = canonical::s2(4);
  const SpectralSystem sys = build_spectral(sc);
  const Vec f = sys.phi[1].col(0);
  for (double t : {0.5, 3.0}) {
    const MomentValues mv = second_moment_Y(sc, sys, f, t, sc.mu0);
    const double var_ref = oracle::variance_Y(sc, f, t);
    CAPTURE(t);
    CHECK(mv.variance == doctest::Approx(var_ref).epsilon(1e-8));
    CHECK(std::isfinite(mv.second));
  }
}

TEST_CASE("variance limits per class") {
  // Cs on the fast-mixing two-site config
  {
    const Scenario sc = canonical::s2(1);
    const SpectralSystem sys = build_spectral(sc);
    const FunctionProfile p2 = eigen_profile(sys, 1);
    REQUIRE(p2.space_class == FnClass::Cs);
    const double lim = variance_limit(sc, sys, p2, sc.mu0);
    // sigma^2 * mean of the limit variable, both in closed form
    const double sigma2 = 1.0 / (3.0 * std::sqrt(2.0));
    const double mw = 1.4 / std::sqrt(2.0);
    CHECK(lim == doctest::Approx(sigma2 * mw).epsilon(1e-10));
    // the scaled second moment approaches it
    const MomentValues mv = second_moment_Y(sc, sys, p2.f, 20.0, sc.mu0);
    CHECK(std::exp(sys.lambda[0] * 20.0) * mv.second ==
          doctest::Approx(lim).epsilon(1e-3));
  }
  // Cc at the critical coupling
  {
    const Scenario sc = canonical::s2(4);
    const SpectralSystem sys = build_spectral(sc);
    const FunctionProfile p2 = eigen_profile(sys, 1);
    REQUIRE(p2.space_class == FnClass::Cc);
    const double lim = variance_limit(sc, sys, p2, sc.mu0);
    const double mw = mean_Y(sc, sys, sys.phi1, 0.0, sc.mu0) +
                      oracle::gamma_of(sc, sys.phi1) / (-sys.lambda[0]);
    CHECK(lim == doctest::Approx(mw / std::sqrt(2.0)).epsilon(1e-10));
    const double t = 40.0;
    const MomentValues mv = second_moment_Y(sc, sys, p2.f, t, sc.mu0);
    const double scaled = std::exp(sys.lambda[0] * t) * mv.variance / t;
    CHECK(scaled / lim > 0.9);
    CHECK(scaled / lim < 1.1);
  }
  // Cl on the slow second mode
  {
    const Scenario sc = canonical::s2(5);
    const SpectralSystem sys = build_spectral(sc);
    const FunctionProfile p2 = eigen_profile(sys, 1);
    REQUIRE(p2.space_class == FnClass::Cl);
    const double lim = variance_limit(sc, sys, p2, sc.mu0);
    CHECK(lim == doctest::Approx(oracle::var_limit_eigen_low(sc, p2.f))
                     .epsilon(1e-9));
    const double t = 20.0;
    const MomentValues mv = second_moment_Y(sc, sys, p2.f, t, sc.mu0);
    CHECK(std::exp(2.0 * sys.lambda[1] * t) * mv.variance ==
          doctest::Approx(lim).epsilon(1e-3));
  }
  // principal eigenfunction is Cl; frozen closed form on one site
  {
    const Scenario sc = canonical::s1();
    const SpectralSystem sys = build_spectral(sc);
    const FunctionProfile p1 = eigen_profile(sys, 0);
    CHECK(variance_limit(sc, sys, p1, sc.mu0) ==
          doctest::Approx(2.4).epsilon(1e-12));
  }
  // degenerate classes
  {
    const Scenario sc = canonical::s2(1);
    const SpectralSystem sys = build_spectral(sc);
    CHECK(variance_limit(sc, sys, profile_function(sys, Vec::Zero(2)),
                         sc.mu0) == 0.0);
    Vec e0 = Vec::Zero(2);
    e0(0) = 1.0;
    CHECK_THROWS_WITH_AS(
        (void)variance_limit(sc, sys, profile_function(sys, e0), sc.mu0),
        doctest::Contains("mixed-class"), std::invalid_argument);
  }
}

TEST_CASE("limit constants on the canonical configs") {
  // one site: only the Cl regime exists
  {
    const Scenario sc = canonical::s1();
    const SpectralSystem sys = build_spectral(sc);
    const auto p1 = std::optional<FunctionProfile>(eigen_profile(sys, 0));
    const CltConstants cc =
        clt_constants(sc, sys, std::nullopt, std::nullopt, p1, sc.mu0);
    REQUIRE(cc.beta2_g.has_value());
    CHECK(*cc.beta2_g == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(cc.mean_Wtilde == doctest::Approx(1.4).epsilon(1e-12));
    CHECK(cc.var_Wtilde == doctest::Approx(2.4).epsilon(1e-10));
    CHECK(cc.gamma_phi == doctest::Approx(0.2).epsilon(1e-12));
    CHECK_FALSE(cc.sigma2_f.has_value());
    CHECK_FALSE(cc.rho2_h.has_value());
  }
  // two sites, fast mixing: Cs for phi2, Cl for phi1
  {
    const Scenario sc = canonical::s2(1);
    const SpectralSystem sys = build_spectral(sc);
    const auto pf = std::optional<FunctionProfile>(eigen_profile(sys, 1));
    const auto pg = std::optional<FunctionProfile>(eigen_profile(sys, 0));
    const CltConstants cc =
        clt_constants(sc, sys, pf, std::nullopt, pg, sc.mu0);
    REQUIRE(cc.sigma2_f.has_value());
    CHECK(*cc.sigma2_f ==
          doctest::Approx(1.0 / (3.0 * std::sqrt(2.0))).epsilon(1e-10));
    REQUIRE(cc.beta2_g.has_value());
    CHECK(*cc.beta2_g ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-10));
    CHECK(*cc.beta2_g ==
          doctest::Approx(oracle::beta2_eigen(sc, sys.phi1)).epsilon(1e-9));
    CHECK(cc.mean_Wtilde ==
          doctest::Approx(1.4 / std::sqrt(2.0)).epsilon(1e-12));
  }
  // critical coupling: rho^2 in closed form
  {
    const Scenario sc = canonical::s2(4);
    const SpectralSystem sys = build_spectral(sc);
    const auto ph = std::optional<FunctionProfile>(eigen_profile(sys, 1));
    const CltConstants cc =
        clt_constants(sc, sys, std::nullopt, ph, std::nullopt, sc.mu0);
    REQUIRE(cc.rho2_h.has_value());
    CHECK(*cc.rho2_h == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-10));
    CHECK(*cc.rho2_h ==
          doctest::Approx(oracle::rho2(sc, sys.phi[1].col(0))).epsilon(1e-10));
  }
  // class mismatch is rejected
  {
    const Scenario sc = canonical::s2(1);
    const SpectralSystem sys = build_spectral(sc);
    const auto p1 = std::optional<FunctionProfile>(eigen_profile(sys, 0));
    CHECK_THROWS_AS((void)clt_constants(sc, sys, p1, std::nullopt,
                                        std::nullopt, sc.mu0),
                    std::invalid_argument);
  }
}

TEST_CASE("limit constants on a multi-dimensional eigengroup") {
  // Three-site ring: the second group is two-dimensional, so sigma^2 involves
  // genuine cross terms between its eigenfunctions.
  Scenario sc;
  sc.space.n = 3;
  sc.space.m = Vec::Ones(3);
  sc.generator.Q = Mat(3, 3);
  sc.generator.Q << -2, 1, 1, 1, -2, 1, 1, 1, -2;
  sc.branching.beta = Vec::Ones(3);
  sc.branching.a = Vec::Constant(3, 0.5);
  sc.branching.b = Vec::Constant(3, 0.4);
  sc.branching.jump_atoms.assign(3, {});
  sc.immigration.eta = Vec::Constant(3, 0.1);
  sc.mu0 = Vec::Ones(3);

  const SpectralSystem sys = build_spectral(sc);
  REQUIRE(sys.multiplicity(1) == 2);
  const Vec f = sys.phi[1] * (Vec(2) << 0.8, -0.5).finished();
  const FunctionProfile pf = profile_function(sys, f);
  REQUIRE(pf.space_class == FnClass::Cs);
  const CltConstants cc = clt_constants(
      sc, sys, std::optional<FunctionProfile>(pf), std::nullopt, std::nullopt,
      sc.mu0);
  REQUIRE(cc.sigma2_f.has_value());
  CHECK(*cc.sigma2_f == doctest::Approx(oracle::sigma2(sc, f)).epsilon(1e-9));
}

TEST_CASE("martingale constants") {
  {
    const Scenario sc = canonical::s1();
    const SpectralSystem sys = build_spectral(sc);
    const MartingaleConstants mc = martingale_constants(sc, sys, 1, 1, sc.mu0);
    CHECK(mc.mean_H == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mc.gamma_correction == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(mc.mean_Winf == doctest::Approx(1.4).epsilon(1e-12));
  }
  {
    const Scenario sc = canonical::s2(1);
    const SpectralSystem sys = build_spectral(sc);
    const MartingaleConstants mc = martingale_constants(sc, sys, 1, 1, sc.mu0);
    CHECK(mc.mean_H == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(mc.mean_Winf ==
          doctest::Approx(1.4 / std::sqrt(2.0)).epsilon(1e-12));
    // the second mode fails square integrability: lambda_1 < 2 lambda_2
    CHECK_THROWS_WITH_AS((void)martingale_constants(sc, sys, 2, 1, sc.mu0),
                         doctest::Contains("square integrability"),
                         std::invalid_argument);
    CHECK_THROWS_AS((void)martingale_constants(sc, sys, 3, 1, sc.mu0),
                    std::invalid_argument);
  }
}

TEST_CASE("immigration kernel integrals are finite, positive, and grow") {
  for (const Scenario& sc : {canonical::s1(), canonical::s_arrivals()}) {
    const SpectralSystem sys = build_spectral(sc);
    const ImmigrationKernelIntegrals a1 =
        immigration_kernel_integrals(sc, sys, 1.0);
    const ImmigrationKernelIntegrals a2 =
        immigration_kernel_integrals(sc, sys, 2.0);
    CHECK(std::isfinite(a1.gamma_a_half));
    CHECK(a1.gamma_a_half > 0.0);
    CHECK(a2.gamma_a_half > a1.gamma_a_half);
    if (!sc.immigration.H_atoms.empty()) {
      CHECK(a1.h_a_half_sq > 0.0);
      CHECK(a2.h_a_half_sq > a1.h_a_half_sq);
    } else {
      CHECK(a1.h_a_half_sq == 0.0);
    }
  }
}

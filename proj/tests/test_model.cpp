#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "canonical.hpp"
#include "superclt/model.hpp"

using namespace superclt;

TEST_CASE("validate accepts the canonical configs") {
  for (const Scenario& sc :
       {canonical::s1(), canonical::s2(1), canonical::s2(4), canonical::s2(5),
        canonical::s_jump(), canonical::s_arrivals()}) {
    const ValidationReport rep = validate(sc);
    CAPTURE(rep.violations);
    CHECK(rep.pass());
    CHECK(rep.supercritical);
  }
}

TEST_CASE("validation summary values for the single-site config") {
  const ValidationReport rep = validate(canonical::s1());
  CHECK(rep.lambda1 == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(rep.M == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(rep.gamma_total == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(rep.H_second_moment == 0.0);
}

TEST_CASE("arrival atoms enter the immigration summaries") {
  const ValidationReport rep = validate(canonical::s_arrivals());
  CHECK(rep.gamma_total == doctest::Approx(0.2 + 0.5 * 0.3).epsilon(1e-12));
  CHECK(rep.H_second_moment == doctest::Approx(0.5 * 0.09).epsilon(1e-12));
}

TEST_CASE("derived coefficients include the jump second moment") {
  const DerivedCoefficients dc = derived_coefficients(canonical::s_jump());
  CHECK(dc.alpha(0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(dc.A(0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(dc.M == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("gamma functional sums drift and atom contributions") {
  const Scenario sc = canonical::s_arrivals();
  CHECK(gamma_functional(sc.immigration, Vec::Ones(1)) ==
        doctest::Approx(0.35).epsilon(1e-12));
  const Vec g = gamma_measure(sc.immigration, 1);
  CHECK(g(0) == doctest::Approx(0.35).epsilon(1e-12));
}

TEST_CASE("sign and symmetry violations are reported, not thrown") {
  Scenario sc = canonical::s1();
  sc.branching.b(0) = -1.0;
  ValidationReport rep = validate(sc);
  REQUIRE_FALSE(rep.pass());
  CHECK(rep.violations[0].find("b must be nonnegative") != std::string::npos);

  Scenario asym = canonical::s2(1);
  asym.generator.Q(0, 1) = 2.0;  // breaks m-symmetry (and the row sum)
  rep = validate(asym);
  REQUIRE_FALSE(rep.pass());
  bool found = false;
  for (const auto& v : rep.violations)
    found = found || v.find("m-symmetry") != std::string::npos;
  CHECK(found);
}

TEST_CASE("positive off-diagonal rates and killing are both legal") {
  Scenario sc = canonical::s1();
  sc.generator.Q(0, 0) = -1.0;  // pure killing
  CHECK(validate(sc).pass());

  Scenario neg = canonical::s2(1);
  neg.generator.Q(0, 1) = -0.5;
  neg.generator.Q(1, 0) = -0.5;
  CHECK_FALSE(validate(neg).pass());
}

TEST_CASE("subcritical configs pass validation with a warning") {
  Scenario sc = canonical::s1();
  sc.branching.a(0) = -0.5;
  const ValidationReport rep = validate(sc);
  CHECK(rep.pass());
  CHECK_FALSE(rep.supercritical);
  REQUIRE_FALSE(rep.warnings.empty());
  CHECK(rep.warnings[0].find("not supercritical") != std::string::npos);
}

TEST_CASE("dimension mismatches are hard errors") {
  Scenario sc = canonical::s2(1);
  sc.branching.a = Vec::Ones(3);
  CHECK_THROWS_AS((void)validate(sc), std::invalid_argument);
  CHECK_THROWS_AS((void)derived_coefficients(sc), std::invalid_argument);
}

TEST_CASE("json round trip preserves every field") {
  const Scenario sc = canonical::s_arrivals();
  Scenario sc2 = scenario_from_json_text(scenario_to_json_text(sc));
  CHECK(sc2.space.n == sc.space.n);
  CHECK((sc2.space.m - sc.space.m).cwiseAbs().maxCoeff() == 0.0);
  CHECK((sc2.generator.Q - sc.generator.Q).cwiseAbs().maxCoeff() == 0.0);
  CHECK((sc2.branching.beta - sc.branching.beta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((sc2.branching.a - sc.branching.a).cwiseAbs().maxCoeff() == 0.0);
  CHECK((sc2.branching.b - sc.branching.b).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(sc2.immigration.H_atoms.size() == 1);
  CHECK(sc2.immigration.H_atoms[0].rate == 0.5);
  CHECK(sc2.immigration.H_atoms[0].nu(0) == 0.3);
  CHECK((sc2.mu0 - sc.mu0).cwiseAbs().maxCoeff() == 0.0);

  Scenario sj = canonical::s_jump();
  Scenario sj2 = scenario_from_json_text(scenario_to_json_text(sj));
  REQUIRE(sj2.branching.jump_atoms[0].size() == 1);
  CHECK(sj2.branching.jump_atoms[0][0].y == 0.5);
  CHECK(sj2.branching.jump_atoms[0][0].rate == 0.8);
}

TEST_CASE("file round trip and load errors") {
  const auto dir = std::filesystem::temp_directory_path() / "superclt_model_t";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "roundtrip.json").string();
  const Scenario sc = canonical::s2(4);
  save_scenario(sc, path);
  const Scenario sc2 = load_scenario(path);
  CHECK((sc2.branching.a - sc.branching.a).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_WITH_AS((void)load_scenario((dir / "missing.json").string()),
                       doctest::Contains("missing.json"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("malformed configs are rejected with context") {
  CHECK_THROWS_AS((void)scenario_from_json_text("{not json"),
                  std::runtime_error);
  CHECK_THROWS_AS((void)scenario_from_json_text("{\"space\":{\"n\":1}}"),
                  std::runtime_error);
  // jump atom site out of range
  const char* bad = R"({
    "space": {"n": 1, "m": [1]},
    "generator": {"Q": [[0]]},
    "branching": {"beta": [1], "a": [0.5], "b": [0.5],
                  "jump_atoms": [[2, 0.5, 0.1]]},
    "immigration": {"eta": [0]},
    "initial": {"mu": [1]}
  })";
  CHECK_THROWS_WITH_AS((void)scenario_from_json_text(bad),
                       doctest::Contains("site out of range"),
                       std::runtime_error);
}

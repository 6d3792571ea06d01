#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace superclt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// One atom of the reproduction jump kernel at a site: offspring mass `y`
// arriving at rate `rate` (per unit of parent mass, before the branching-rate
// factor beta).
struct JumpAtom {
  double y = 0.0;
  double rate = 0.0;
};

struct StateSpace {
  int n = 0;
  Vec m;  // positive site weights; the reference measure on {1..n}
};

// Off-diagonal entries of Q are the jump rates of the underlying spatial
// chain. Row sums may be strictly negative; the deficit is the killing rate
// into an implicit absorbing cemetery on which all functions vanish.
struct Generator {
  Mat Q;
};

struct BranchingLaw {
  Vec beta;  // branching rate, >= 0
  Vec a;     // linear (drift) coefficient, any sign
  Vec b;     // quadratic (diffusion) coefficient, >= 0
  std::vector<std::vector<JumpAtom>> jump_atoms;  // per site
};

// One atom of the immigration kernel: a measure `nu` on the sites arriving as
// a Poisson stream with the given rate.
struct ImmigrationAtom {
  Vec nu;
  double rate = 0.0;
};

struct ImmigrationLaw {
  Vec eta;  // deterministic immigration drift measure
  std::vector<ImmigrationAtom> H_atoms;
};

struct Scenario {
  StateSpace space;
  Generator generator;
  BranchingLaw branching;
  ImmigrationLaw immigration;
  Vec mu0;  // initial mass per site, >= 0
};

struct DerivedCoefficients {
  Vec alpha;     // beta .* a : mass-creation potential
  Vec A;         // beta .* (2 b + sum_k rate_k y_k^2) : local variance rate
  double M = 0;  // max_i (|alpha_i| + A_i)
};

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;
  double M = 0.0;
  double gamma_total = 0.0;       // Gamma(1): total immigration mass rate
  double H_second_moment = 0.0;   // sum_j rate_j * (nu_j(E))^2
  double lambda1 = 0.0;           // principal decay exponent of the mean flow
  bool supercritical = false;
  bool pass() const { return violations.empty(); }
};

// Checks structural invariants (dimensions are hard errors; sign/symmetry
// violations are reported) and computes the summary quantities above.
ValidationReport validate(const Scenario& sc);

DerivedCoefficients derived_coefficients(const Scenario& sc);

// Gamma(f) = <eta, f> + sum_j rate_j <nu_j, f>, the mean immigration
// functional; gamma_measure() is the measure representing it.
double gamma_functional(const ImmigrationLaw& imm, const Vec& f);
Vec gamma_measure(const ImmigrationLaw& imm, int n);

Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& sc, const std::string& path);

// Parse / serialize against the documented config schema; used by the file
// round-trip above and by tests that build configs in memory.
Scenario scenario_from_json_text(const std::string& text);
std::string scenario_to_json_text(const Scenario& sc);

}  // namespace superclt

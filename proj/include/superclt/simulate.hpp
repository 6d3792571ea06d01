#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "superclt/model.hpp"
#include "superclt/rng.hpp"
#include "superclt/spectral.hpp"

namespace superclt {

enum class SimMode { full, native_only, immigration_only };

const char* to_string(SimMode m);

struct SimConfig {
  double dt = 0.01;
  std::vector<double> t_snapshots;  // strictly increasing, > 0 allowed to include 0
  int replicates = 1;
  std::uint64_t master_seed = 1;
  SimMode mode = SimMode::full;
};

struct PathEnsemble {
  std::vector<double> t_snapshots;
  int replicates = 0;
  SimMode mode = SimMode::full;
  std::uint64_t master_seed = 0;
  // states[r][s]: mass vector at snapshot s of replicate r
  std::vector<std::vector<Vec>> states;
  // coords[r][s]: the same state in eigen-coordinates, the scheme's native
  // representation. Functionals of non-principal modes must be read from
  // here: in the mass vector the principal coordinate outgrows the others
  // like e^{(lambda_k - lambda_1) t}, and once that gap exceeds the double
  // mantissa the other modes are no longer recoverable from the sites.
  // Hand-assembled ensembles may leave this empty (site-space evaluation).
  std::vector<std::vector<Vec>> coords;
  int failed = 0;  // replicates aborted on non-finite state
};

// Splitting scheme over steps of length dt (shortened to land exactly on
// snapshot times):
//   1. exact linear mass flow through the adjoint mean generator,
//   2. per-site square-root diffusion increment, truncated at 0,
//   3. compensated reproduction jumps with rates frozen at the step start,
//   4. immigration drift eta*dt plus Poisson arrivals of the H atoms.
// native_only drops step 4 and starts from mu0; immigration_only starts
// from 0. The state advances in eigen-coordinates <phi_j^(k), Y> so that
// widely separated growth rates do not cancel in double precision.
PathEnsemble simulate_ensemble(const Scenario& sc, const SimConfig& cfg);

// Independent native and immigration ensembles (distinct seed streams);
// their independent sum is distributed like the full process.
std::pair<PathEnsemble, PathEnsemble> decomposition_ensemble(
    const Scenario& sc, const SimConfig& cfg);

// Exact transition of the one-site quadratic branching diffusion (no jump
// atoms) over dt: a Poisson(y e^{alpha dt} / c) mixture of Gamma(N, c) with
// c = beta b (e^{alpha dt} - 1) / alpha. Bias oracle for the dt scheme.
double exact_single_site_step(double y, double dt, double beta, double a,
                              double b, RngStream& rng);

// Worker threads: SUPERCLT_THREADS when set (clamped to [1, 256], may exceed
// the core count so determinism can be tested anywhere), otherwise the
// hardware concurrency. Replicates are assigned by stride, so results do not
// depend on this value.
int worker_count();

}  // namespace superclt

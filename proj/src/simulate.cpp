#include "superclt/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <thread>

namespace superclt {

const char* to_string(SimMode m) {
  switch (m) {
    case SimMode::full: return "full";
    case SimMode::native_only: return "native_only";
    case SimMode::immigration_only: return "immigration_only";
  }
  return "?";
}

int worker_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("SUPERCLT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) hw = static_cast<int>(std::min<long>(v, 256));
  }
  return hw;
}

namespace {

// Flattened eigenbasis plus everything a step needs, shared read-only by all
// worker threads.
struct SimPlan {
  int n = 0;
  Vec lambda_flat;     // per eigenfunction column
  Mat Phi;             // columns: eigenfunctions in group order
  Mat R;               // diag(m) * Phi: c -> mass vector
  Mat PhiT;            // Phi transposed, rows aligned with c
  Vec c0;              // initial eigen-coordinates
  Vec phi_eta;         // Phi^T eta
  std::vector<Vec> phi_nu;
  std::vector<double> nu_rate;
  Vec beta, b;
  Vec diff_coef;       // 2 beta_i b_i
  const std::vector<std::vector<JumpAtom>>* atoms = nullptr;
  std::vector<double> comp_rate;  // per site: sum_k r_k y_k (for reference)
  bool immigration = false;
  bool native = true;
};

SimPlan make_plan(const Scenario& sc, const SpectralSystem& sys, SimMode mode) {
  SimPlan pl;
  pl.n = sys.n();
  Mat Phi(pl.n, pl.n);
  Vec lam(pl.n);
  int col = 0;
  for (int k = 0; k < sys.groups(); ++k) {
    for (int j = 0; j < sys.multiplicity(k); ++j) {
      Phi.col(col) = sys.phi[k].col(j);
      lam(col) = sys.lambda[k];
      ++col;
    }
  }
  pl.Phi = Phi;
  pl.PhiT = Phi.transpose();
  pl.R = sys.m.asDiagonal() * Phi;
  pl.lambda_flat = lam;
  pl.beta = sc.branching.beta;
  pl.b = sc.branching.b;
  pl.diff_coef = 2.0 * sc.branching.beta.array() * sc.branching.b.array();
  pl.atoms = &sc.branching.jump_atoms;
  pl.comp_rate.assign(pl.n, 0.0);
  for (int i = 0; i < pl.n; ++i) {
    for (const auto& atom : (*pl.atoms)[i]) pl.comp_rate[i] += atom.rate * atom.y;
  }
  pl.immigration = mode != SimMode::native_only;
  pl.native = mode != SimMode::immigration_only;
  pl.c0 = pl.native ? Vec(pl.PhiT * sc.mu0) : Vec(Vec::Zero(pl.n));
  pl.phi_eta = pl.PhiT * sc.immigration.eta;
  for (const auto& atom : sc.immigration.H_atoms) {
    pl.phi_nu.push_back(pl.PhiT * atom.nu);
    pl.nu_rate.push_back(atom.rate);
  }
  return pl;
}

// Below this Poisson count the diffusion sub-step samples its exact
// compound-Poisson transition. A Gaussian increment clips at zero with
// probability Phi(-sqrt(count/2)), noticeable up to count ~ 30, and the
// clipping drift inflates small masses; above the threshold the clip
// probability is < 1e-8 and the Gaussian kick is kept, also avoiding
// count overflow on strongly growing scenarios.
constexpr double kExactDiffusionCount = 64.0;

// One Lie-splitting step of length h on the eigen-coordinates c.
void step(const SimPlan& pl, double h, Vec& c, Vec& y, Vec& delta, RngStream& rng) {
  // 1. exact linear flow: the mean generator is diagonal here
  for (int k = 0; k < pl.n; ++k) c(k) *= std::exp(-pl.lambda_flat(k) * h);

  // 2. square-root diffusion. Near the zero boundary a truncated Gaussian
  // increment has a positive clipping drift that inflates small masses, so
  // the transition of dY = sqrt(2 beta b Y) dW is sampled exactly there: a
  // Poisson(Y/(beta b h)) count of Exp(beta b h) lumps, which is
  // mean-preserving and puts an atom at 0. Per-site changes feed back into
  // c through the site rows of Phi^T.
  y.noalias() = pl.R * c;
  bool any = false;
  for (int i = 0; i < pl.n; ++i) {
    delta(i) = 0.0;
    const double yi = std::max(y(i), 0.0);
    const double scale = pl.beta(i) * pl.b(i) * h;
    if (yi <= 0.0 || scale <= 0.0) continue;
    const double count = yi / scale;
    double ynew;
    if (count <= kExactDiffusionCount) {
      ynew = rng.gamma_int(rng.poisson(count), scale);
    } else {
      const double incr = std::sqrt(pl.diff_coef(i) * yi * h) * rng.normal();
      ynew = std::max(yi + incr, 0.0);
    }
    delta(i) = ynew - y(i);
    y(i) = ynew;
    any = true;
  }
  if (any) c.noalias() += pl.PhiT * delta;

  // 3. compensated reproduction jumps, rates frozen at the step start
  any = false;
  for (int i = 0; i < pl.n; ++i) {
    delta(i) = 0.0;
    if ((*pl.atoms)[i].empty()) continue;
    const double yi = std::max(y(i), 0.0);
    if (yi == 0.0) continue;
    double d = 0.0;
    for (const auto& atom : (*pl.atoms)[i]) {
      d += atom.y * rng.poisson_centered(pl.beta(i) * yi * atom.rate * h);
    }
    delta(i) = (y(i) + d >= 0) ? d : -yi;
    y(i) += delta(i);
    any = true;
  }
  if (any) c.noalias() += pl.PhiT * delta;

  // 4. immigration drift and Poisson arrivals. Mass immigrating at time u
  // inside the step decays by exp(-lambda (h - u)) before the step closes;
  // integrating that over u gives the drift weight per mode, and each atom
  // arrival draws its own uniform arrival time. A flat h * phi_eta weight
  // would overstate the mean by O(lambda h) every step.
  if (pl.immigration) {
    for (int k = 0; k < pl.n; ++k) {
      const double lam = pl.lambda_flat(k);
      const double w = (lam != 0.0) ? -std::expm1(-lam * h) / lam : h;
      c(k) += pl.phi_eta(k) * w;
    }
    for (std::size_t j = 0; j < pl.phi_nu.size(); ++j) {
      const std::int64_t arrivals = rng.poisson(pl.nu_rate[j] * h);
      for (std::int64_t a = 0; a < arrivals; ++a) {
        const double left = h * (1.0 - rng.uniform());
        for (int k = 0; k < pl.n; ++k) {
          c(k) += pl.phi_nu[j](k) * std::exp(-pl.lambda_flat(k) * left);
        }
      }
    }
  }
}

void run_replicate(const SimPlan& pl, const SimConfig& cfg, std::uint64_t index,
                   std::vector<Vec>& out, std::vector<Vec>& out_coords,
                   bool& failed) {
  RngStream rng = seed_stream(cfg.master_seed, index);
  Vec c = pl.c0;
  Vec y(pl.n), delta(pl.n);
  double t = 0.0;
  failed = false;
  out.resize(cfg.t_snapshots.size());
  out_coords.resize(cfg.t_snapshots.size());
  for (std::size_t s = 0; s < cfg.t_snapshots.size(); ++s) {
    const double target = cfg.t_snapshots[s];
    const double span = target - t;
    if (span > 0) {
      const int nsteps = std::max(1, static_cast<int>(std::ceil(span / cfg.dt - 1e-9)));
      const double h = span / nsteps;
      for (int q = 0; q < nsteps; ++q) step(pl, h, c, y, delta, rng);
      t = target;
    }
    if (!c.allFinite()) {
      failed = true;
      for (std::size_t rest = s; rest < cfg.t_snapshots.size(); ++rest) {
        out[rest] = Vec::Constant(pl.n, std::numeric_limits<double>::quiet_NaN());
        out_coords[rest] = out[rest];
      }
      return;
    }
    out[s] = pl.R * c;
    out_coords[s] = c;
  }
}

void check_config(const SimConfig& cfg) {
  if (!(cfg.dt > 0)) throw std::invalid_argument("dt must be > 0");
  if (cfg.replicates < 1) throw std::invalid_argument("replicates must be >= 1");
  if (cfg.t_snapshots.empty()) throw std::invalid_argument("need at least one snapshot");
  double prev = 0.0;
  for (double t : cfg.t_snapshots) {
    if (t < prev) throw std::invalid_argument("snapshots must be nondecreasing and >= 0");
    prev = t;
  }
}

}  // namespace

PathEnsemble simulate_ensemble(const Scenario& sc, const SimConfig& cfg) {
  check_config(cfg);
  const SpectralSystem sys = build_spectral(sc);
  const SimPlan pl = make_plan(sc, sys, cfg.mode);

  PathEnsemble ens;
  ens.t_snapshots = cfg.t_snapshots;
  ens.replicates = cfg.replicates;
  ens.mode = cfg.mode;
  ens.master_seed = cfg.master_seed;
  ens.states.resize(cfg.replicates);
  ens.coords.resize(cfg.replicates);

  std::vector<char> failed(cfg.replicates, 0);
  const int workers = std::min(worker_count(), cfg.replicates);
  auto work = [&](int w) {
    for (int r = w; r < cfg.replicates; r += workers) {
      bool f = false;
      run_replicate(pl, cfg, static_cast<std::uint64_t>(r), ens.states[r],
                    ens.coords[r], f);
      failed[r] = f ? 1 : 0;
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  for (char f : failed) ens.failed += f;
  return ens;
}

std::pair<PathEnsemble, PathEnsemble> decomposition_ensemble(const Scenario& sc,
                                                             const SimConfig& cfg) {
  check_config(cfg);
  // Derived master seeds keep the two parts independent of each other and of
  // a full run with the same seed.
  std::uint64_t s1 = cfg.master_seed ^ 0xa5a5a5a5a5a5a5a5ULL;
  std::uint64_t s2 = cfg.master_seed ^ 0x5a5a5a5a5a5a5a5aULL;
  SimConfig native_cfg = cfg;
  native_cfg.mode = SimMode::native_only;
  native_cfg.master_seed = splitmix64(s1);
  SimConfig imm_cfg = cfg;
  imm_cfg.mode = SimMode::immigration_only;
  imm_cfg.master_seed = splitmix64(s2);
  return {simulate_ensemble(sc, native_cfg), simulate_ensemble(sc, imm_cfg)};
}

double exact_single_site_step(double y, double dt, double beta, double a, double b,
                              RngStream& rng) {
  if (y < 0 || dt < 0) throw std::invalid_argument("mass and dt must be >= 0");
  if (y == 0 || dt == 0) return y;
  const double alpha = beta * a;
  const double growth = std::exp(alpha * dt);
  const double scale =
      (alpha == 0.0) ? beta * b * dt : beta * b * std::expm1(alpha * dt) / alpha;
  if (scale == 0.0) return y * growth;  // no diffusion: deterministic flow
  const std::int64_t mixture = rng.poisson(y * growth / scale);
  return rng.gamma_int(mixture, scale);
}

}  // namespace superclt

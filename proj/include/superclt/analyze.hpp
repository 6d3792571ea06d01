#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "superclt/moments.hpp"
#include "superclt/simulate.hpp"
#include "superclt/spectral.hpp"

namespace superclt {

// Replicates whose principal-mass denominator is at or below this threshold
// are excluded from normalized statistics (extinct paths).
inline constexpr double kSurvivalEps = 1e-12;

struct SampleStats {
  int n = 0;
  double mean = 0.0;
  double se_mean = 0.0;
  double var = 0.0;     // unbiased
  double se_var = 0.0;  // delta method from the fourth central moment
};

SampleStats sample_stats(const std::vector<double>& xs);

// Per-replicate values of <f, Y> at one snapshot, read from the ensemble's
// eigen-coordinates when it carries them (see PathEnsemble::coords).
std::vector<double> functional_samples(const PathEnsemble& ens,
                                       const SpectralSystem& sys,
                                       int snapshot_index, const Vec& f);

int snapshot_index(const PathEnsemble& ens, double t);

// --- Kolmogorov-Smirnov -----------------------------------------------------

struct KsResult {
  double D = 0.0;
  double p_value = 0.0;  // asymptotic, from the Kolmogorov series
};

// One-sample KS against a continuous CDF. Sample size >= 8, values finite.
KsResult ks_statistic(std::vector<double> sample,
                      const std::function<double(double)>& cdf);

// sup_x |F_n(x) - F(x)| for a reference law that may carry atoms; cdf_left
// is the left limit F(x-). No p-value (the asymptotic series assumes
// continuity); used where only the distance is compared.
double ks_distance(std::vector<double> sample,
                   const std::function<double(double)>& cdf,
                   const std::function<double(double)>& cdf_left);

// --- Martingale test ---------------------------------------------------------

struct MartingaleReport {
  std::vector<double> times;
  std::vector<std::vector<double>> H;  // [snapshot][replicate]
  std::vector<double> slopes;          // per-replicate OLS slope
  std::vector<double> mean_H;      // empirical mean per snapshot
  std::vector<double> se_H;
  double expected = 0.0;           // theoretical constant mean
  double slope = 0.0;              // mean of per-replicate OLS slopes
  double slope_se = 0.0;
  double slope_ci_lo = 0.0, slope_ci_hi = 0.0;  // 99% CI
  bool snapshots_pass = false;     // every mean within 3.5 SE of expected
  bool slope_pass = false;         // 0 inside the 99% CI
  bool pass = false;
};

// H_t = e^{lambda_k t} <phi_j^(k), Y_t> - lambda_k^{-1}(e^{lambda_k t} - 1) g
// with g = gamma_const (pass Gamma(phi_j^(k)) for the real statistic; a
// deliberately wrong value is the negative control). Requires >= 3 snapshots,
// >= 1000 replicates, and lambda_1 > 2 lambda_k. k, j are 1-based.
MartingaleReport martingale_test(const PathEnsemble& ens,
                                 const SpectralSystem& sys, int k, int j,
                                 double gamma_const, double expected_mean);

// --- Law-of-large-numbers test ----------------------------------------------

struct LlnReport {
  double t1 = 0.0, t2 = 0.0, t_proxy = 0.0;
  std::vector<double> D_t1, D_t2;   // per-replicate residuals
  double D2_t1 = 0.0, D2_t2 = 0.0;  // empirical E D_t^2
  double scaled_second_t2 = 0.0;    // empirical E (e^{lambda_g t2} <f, Y_t2>)^2
  double decay_ratio = 0.0;         // D2_t1 / D2_t2
  bool pass = false;
};

// D_t = e^{lambda_g t} <f, Y_t> - sum_j a_j Wproxy_j with the proxies read
// from the ensemble at t_proxy. Pass iff decay_ratio >= 1.5 and
// D2_t2 <= 0.1 * scaled_second_t2. Requires lambda_1 > 2 lambda_g.
LlnReport lln_test(const PathEnsemble& ens, const SpectralSystem& sys,
                   const FunctionProfile& f, double t1, double t2,
                   double t_proxy);

// --- CLT test -----------------------------------------------------------------

struct CltSample {
  double t = 0.0, lookahead = 0.0;
  std::vector<double> W_hat;  // e^{lambda_1 t} <phi1, Y_t>
  std::vector<double> U_f;    // <f, Y_t> / sqrt(<phi1, Y_t>)
  std::vector<double> U_h;    // <h, Y_t> / sqrt(t <phi1, Y_t>)
  std::vector<double> U_g;    // (<g, Y_t> - growing-part proxy) / sqrt(<phi1, Y_t>)
  int excluded = 0;
};

CltSample build_clt_sample(const PathEnsemble& ens, const SpectralSystem& sys,
                           const std::optional<FunctionProfile>& f,
                           const std::optional<FunctionProfile>& h,
                           const std::optional<FunctionProfile>& g, double t,
                           double lookahead);

struct CltReport {
  CltSample sample;
  double exclusion_fraction = 0.0;

  // W_hat moment checks (3.5 SE)
  double W_mean_z = 0.0, W_var_z = 0.0;
  bool W_pass = false;

  // Distribution checks
  std::optional<KsResult> ks_f, ks_g;
  std::optional<double> var_ratio_f, var_ratio_g;  // in [0.93, 1.07]
  std::optional<double> var_ratio_h;               // in [0.90, 1.10]
  bool f_pass = true, g_pass = true, h_pass = true;

  // Pairwise |correlation| among the present statistics, max over pairs,
  // compared against 3/sqrt(included replicates).
  double max_abs_corr = 0.0;
  double corr_threshold = 0.0;
  bool corr_pass = false;

  bool pass = false;
};

// Requires >= 10^4 replicates, snapshots at t and t + lookahead, a
// supercritical system, and exclusion fraction <= 1%.
CltReport clt_test(const PathEnsemble& ens, const SpectralSystem& sys,
                   const std::optional<FunctionProfile>& f,
                   const std::optional<FunctionProfile>& h,
                   const std::optional<FunctionProfile>& g,
                   const CltConstants& constants, double t, double lookahead);

}  // namespace superclt

// superclt: command-line front end.
//
// Subcommands: validate, spectral, laplace, moments, clt-constants, simulate,
// martingale-test, lln-test, clt-test, full-battery. Exit codes: 0 pass,
// 1 test failure or runtime refusal, 2 usage/config error.
//
// File outputs (enabled by --out) are named superclt_<sub>_<hash>_s<seed>*;
// data files are content-guarded against silent overwrites, the run manifest
// is rewritten every run. Column and key layouts: docs/output_schema.md.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "superclt/analyze.hpp"
#include "superclt/cumulant.hpp"
#include "superclt/io.hpp"
#include "superclt/model.hpp"
#include "superclt/moments.hpp"
#include "superclt/simulate.hpp"
#include "superclt/spectral.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace superclt;

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  if (out.empty()) throw std::invalid_argument("empty number list: '" + s + "'");
  return out;
}

struct Loaded {
  std::string path;
  std::string text;
  std::string hash;
  Scenario sc;
};

Loaded load_raw(const std::string& path) {
  Loaded L;
  L.path = path;
  L.text = read_text_file(path);
  L.hash = fnv1a64_hex(L.text);
  L.sc = scenario_from_json_text(L.text);
  return L;
}

struct NamedFn {
  Vec f;
  std::string name;
  int flat = 0;  // 1-based flattened eigenfunction index; 0 for non-eigen
};

// "one", "phiK" (K-th eigenfunction, flattened across groups), or a literal
// comma-separated vector of length n.
NamedFn parse_fn(const SpectralSystem& sys, const std::string& spec) {
  NamedFn nf;
  if (spec == "one" || spec == "1") {
    nf.f = Vec::Ones(sys.n());
    nf.name = "one";
    return nf;
  }
  if (spec.rfind("phi", 0) == 0) {
    const int idx = std::stoi(spec.substr(3));
    if (idx < 1 || idx > sys.n()) {
      throw std::invalid_argument("eigenfunction index out of range: " + spec);
    }
    int c = idx;
    for (int k = 0; k < sys.groups(); ++k) {
      if (c <= sys.multiplicity(k)) {
        nf.f = sys.phi[k].col(c - 1);
        nf.name = spec;
        nf.flat = idx;
        return nf;
      }
      c -= sys.multiplicity(k);
    }
    throw std::logic_error("eigenfunction enumeration out of sync");
  }
  const std::vector<double> vals = parse_list(spec);
  if (static_cast<int>(vals.size()) != sys.n()) {
    throw std::invalid_argument("function vector has wrong length: " + spec);
  }
  nf.f = Eigen::Map<const Vec>(vals.data(), vals.size());
  std::string joined;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    joined += (i ? ";" : "") + format_double(vals[i]);
  }
  nf.name = "vec(" + joined + ")";
  return nf;
}

// Flattened 1-based eigen index -> (group k, column j), both 1-based.
std::pair<int, int> flat_to_group(const SpectralSystem& sys, int flat) {
  int c = flat;
  for (int k = 0; k < sys.groups(); ++k) {
    if (c <= sys.multiplicity(k)) return {k + 1, c};
    c -= sys.multiplicity(k);
  }
  throw std::invalid_argument("eigenfunction index out of range");
}

class Sink {
 public:
  Sink() = default;
  Sink(const std::string& dir, std::string prefix)
      : on_(true), dir_(dir), prefix_(std::move(prefix)) {
    std::filesystem::create_directories(dir_);
  }
  bool on() const { return on_; }
  void write(const std::string& suffix, const std::string& content,
             bool overwrite = false) {
    if (!on_) return;
    const std::string name = prefix_ + suffix;
    write_guarded((std::filesystem::path(dir_) / name).string(), content,
                  overwrite);
    written_.push_back(name);
  }
  const std::vector<std::string>& written() const { return written_; }

 private:
  bool on_ = false;
  std::string dir_, prefix_;
  std::vector<std::string> written_;
};

void emit_manifest(Sink& sink, RunManifest m, const std::string& started) {
  if (!sink.on()) return;
  m.started_at = started;
  m.finished_at = iso8601_utc_now();
  m.outputs = sink.written();
  sink.write("_manifest.json", m.to_json(), /*overwrite=*/true);
}

std::string csv_cell(double x) { return format_double(x); }

json ks_json(const std::optional<KsResult>& ks) {
  if (!ks) return nullptr;
  return json{{"D", ks->D}, {"p_value", ks->p_value}};
}

json opt_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

// ---------------------------------------------------------------------------
// validate

int cmd_validate(const Loaded& L, Sink& sink, RunManifest& man) {
  const ValidationReport rep = validate(L.sc);
  for (const auto& v : rep.violations) std::cout << "violation: " << v << "\n";
  for (const auto& w : rep.warnings) std::cout << "warning: " << w << "\n";
  std::cout << "lambda1 = " << format_double(rep.lambda1) << "\n"
            << "M = " << format_double(rep.M) << "\n"
            << "gamma_total = " << format_double(rep.gamma_total) << "\n"
            << "H_second_moment = " << format_double(rep.H_second_moment)
            << "\n"
            << "supercritical = " << (rep.supercritical ? "yes" : "no") << "\n"
            << "result = " << (rep.pass() ? "pass" : "fail") << "\n";
  json j{{"schema_version", kOutputSchemaVersion},
         {"scenario_hash", L.hash},
         {"violations", rep.violations},
         {"warnings", rep.warnings},
         {"lambda1", rep.lambda1},
         {"M", rep.M},
         {"gamma_total", rep.gamma_total},
         {"H_second_moment", rep.H_second_moment},
         {"supercritical", rep.supercritical},
         {"pass", rep.pass()}};
  sink.write("_report.json", j.dump(2) + "\n");
  (void)man;
  return rep.pass() ? 0 : 1;
}

// ---------------------------------------------------------------------------
// spectral

int cmd_spectral(const Loaded& L, Sink& sink) {
  const SpectralSystem sys = build_spectral(L.sc);
  std::string lines;
  for (int k = 0; k < sys.groups(); ++k) {
    json j{{"schema_version", kOutputSchemaVersion},
           {"k", k + 1},
           {"lambda", sys.lambda[k]},
           {"multiplicity", sys.multiplicity(k)},
           {"phi1_min", sys.phi1.minCoeff()},
           {"phi1_max", sys.phi1.maxCoeff()}};
    lines += j.dump() + "\n";
  }
  std::cout << lines;
  sink.write("_spectrum.jsonl", lines);
  return 0;
}

// ---------------------------------------------------------------------------
// laplace

int cmd_laplace(const Loaded& L, const std::string& f_spec,
                const std::string& t_spec, const std::string& theta_spec,
                Sink& sink) {
  const SpectralSystem sys = build_spectral(L.sc);
  const NamedFn fn = parse_fn(sys, f_spec);
  const std::vector<double> ts = parse_list(t_spec);
  const std::vector<double> thetas = parse_list(theta_spec);
  std::ostringstream csv;
  csv << "t,theta,exact_laplace\n";
  for (double t : ts) {
    for (double th : thetas) {
      const double val = laplace_Y(L.sc, sys, (th * fn.f).eval(), t, L.sc.mu0);
      csv << csv_cell(t) << ',' << csv_cell(th) << ',' << csv_cell(val) << "\n";
    }
  }
  std::cout << csv.str();
  sink.write(".csv", csv.str());
  return 0;
}

// ---------------------------------------------------------------------------
// moments

int cmd_moments(const Loaded& L, const std::string& f_spec,
                const std::string& t_spec, Sink& sink) {
  const SpectralSystem sys = build_spectral(L.sc);
  const NamedFn fn = parse_fn(sys, f_spec);
  const std::vector<double> ts = parse_list(t_spec);
  std::ostringstream csv;
  csv << "t,f_name,mean,second,variance,mean_initial,mean_immigration,"
         "var_initial,var_immigration\n";
  for (double t : ts) {
    const MomentValues mv = second_moment_Y(L.sc, sys, fn.f, t, L.sc.mu0);
    csv << csv_cell(t) << ',' << fn.name << ',' << csv_cell(mv.mean) << ','
        << csv_cell(mv.second) << ',' << csv_cell(mv.variance) << ','
        << csv_cell(mv.mean_initial) << ',' << csv_cell(mv.mean_immigration)
        << ',' << csv_cell(mv.var_branch_initial) << ','
        << csv_cell(mv.var_branch_immigration + mv.var_H_direct) << "\n";
  }
  std::cout << csv.str();
  sink.write(".csv", csv.str());
  return 0;
}

// ---------------------------------------------------------------------------
// clt-constants

int cmd_clt_constants(const Loaded& L, const std::string& f_spec,
                      const std::string& h_spec, const std::string& g_spec,
                      Sink& sink) {
  const SpectralSystem sys = build_spectral(L.sc);
  std::optional<FunctionProfile> f, h, g;
  json names{{"f", nullptr}, {"h", nullptr}, {"g", nullptr}};
  if (!f_spec.empty()) {
    f = profile_function(sys, parse_fn(sys, f_spec).f);
    names["f"] = f_spec;
  }
  if (!h_spec.empty()) {
    h = profile_function(sys, parse_fn(sys, h_spec).f);
    names["h"] = h_spec;
  }
  if (!g_spec.empty()) {
    g = profile_function(sys, parse_fn(sys, g_spec).f);
    names["g"] = g_spec;
  }
  const CltConstants c = clt_constants(L.sc, sys, f, h, g, L.sc.mu0);
  json j{{"schema_version", kOutputSchemaVersion},
         {"scenario_hash", L.hash},
         {"inputs", names},
         {"sigma2", opt_json(c.sigma2_f)},
         {"rho2", opt_json(c.rho2_h)},
         {"beta2", opt_json(c.beta2_g)},
         {"mean_W", c.mean_Wtilde},
         {"var_W", c.var_Wtilde},
         {"gamma_phi", c.gamma_phi}};
  std::cout << j.dump(2) << "\n";
  sink.write(".json", j.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const Loaded& L, const SimConfig& cfg, Sink& sink,
                 RunManifest& man) {
  const PathEnsemble ens = simulate_ensemble(L.sc, cfg);
  std::ostringstream csv;
  csv << "replicate,t";
  for (int i = 1; i <= L.sc.space.n; ++i) csv << ",y_" << i;
  csv << "\n";
  for (int r = 0; r < ens.replicates; ++r) {
    for (std::size_t s = 0; s < ens.t_snapshots.size(); ++s) {
      csv << r << ',' << csv_cell(ens.t_snapshots[s]);
      for (int i = 0; i < L.sc.space.n; ++i) {
        csv << ',' << csv_cell(ens.states[r][s](i));
      }
      csv << "\n";
    }
  }
  sink.write(".csv", csv.str());
  std::cout << "replicates = " << ens.replicates << "\n"
            << "snapshots = " << ens.t_snapshots.size() << "\n"
            << "failed = " << ens.failed << "\n";
  (void)man;
  return ens.failed == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// martingale-test

int cmd_martingale(const Loaded& L, const std::string& f_spec,
                   const std::vector<double>& snaps, int replicates, double dt,
                   std::uint64_t seed, Sink& sink) {
  const SpectralSystem sys = build_spectral(L.sc);
  const NamedFn fn = parse_fn(sys, f_spec);
  if (fn.flat == 0) {
    throw std::invalid_argument(
        "martingale-test needs an eigenfunction (--f phiK)");
  }
  const auto [k, jj] = flat_to_group(sys, fn.flat);
  const MartingaleConstants mc = martingale_constants(L.sc, sys, k, jj, L.sc.mu0);
  const double gc = gamma_functional(L.sc.immigration, fn.f);

  SimConfig cfg;
  cfg.dt = dt;
  cfg.t_snapshots = snaps;
  cfg.replicates = replicates;
  cfg.master_seed = seed;
  const PathEnsemble ens = simulate_ensemble(L.sc, cfg);
  const MartingaleReport rep = martingale_test(ens, sys, k, jj, gc, mc.mean_H);

  json j{{"schema_version", kOutputSchemaVersion},
         {"test", "martingale"},
         {"scenario", L.path},
         {"scenario_hash", L.hash},
         {"inputs",
          {{"f", fn.name},
           {"snapshots", snaps},
           {"replicates", replicates},
           {"dt", dt},
           {"seed", seed},
           {"failed_replicates", ens.failed}}},
         {"statistics",
          {{"expected_mean", rep.expected},
           {"mean_H", rep.mean_H},
           {"se_H", rep.se_H},
           {"slope", rep.slope},
           {"slope_se", rep.slope_se},
           {"slope_ci", {rep.slope_ci_lo, rep.slope_ci_hi}}}},
         {"thresholds",
          {{"snapshot_z", 3.5}, {"slope_ci_level", 0.99}}},
         {"pass", rep.pass}};
  std::cout << j.dump(2) << "\n";
  sink.write("_verdict.json", j.dump(2) + "\n");

  std::ostringstream csv;
  csv << "replicate";
  for (double t : rep.times) csv << ",H_t" << format_double(t);
  csv << ",slope\n";
  for (std::size_t r = 0; r < rep.slopes.size(); ++r) {
    csv << r;
    for (std::size_t s = 0; s < rep.times.size(); ++s) {
      csv << ',' << csv_cell(rep.H[s][r]);
    }
    csv << ',' << csv_cell(rep.slopes[r]) << "\n";
  }
  sink.write("_replicates.csv", csv.str());
  return rep.pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// lln-test

int cmd_lln(const Loaded& L, const std::string& f_spec,
            const std::vector<double>& snaps, int replicates, double dt,
            std::uint64_t seed, Sink& sink) {
  if (snaps.size() != 3) {
    throw std::invalid_argument("lln-test needs --snapshots t1,t2,t_proxy");
  }
  const SpectralSystem sys = build_spectral(L.sc);
  const NamedFn fn = parse_fn(sys, f_spec);
  const FunctionProfile prof = profile_function(sys, fn.f);

  SimConfig cfg;
  cfg.dt = dt;
  cfg.t_snapshots = snaps;
  cfg.replicates = replicates;
  cfg.master_seed = seed;
  const PathEnsemble ens = simulate_ensemble(L.sc, cfg);
  const LlnReport rep = lln_test(ens, sys, prof, snaps[0], snaps[1], snaps[2]);

  json j{{"schema_version", kOutputSchemaVersion},
         {"test", "lln"},
         {"scenario", L.path},
         {"scenario_hash", L.hash},
         {"inputs",
          {{"f", fn.name},
           {"snapshots", snaps},
           {"replicates", replicates},
           {"dt", dt},
           {"seed", seed},
           {"failed_replicates", ens.failed}}},
         {"statistics",
          {{"D2_t1", rep.D2_t1},
           {"D2_t2", rep.D2_t2},
           {"decay_ratio",
            std::isfinite(rep.decay_ratio) ? json(rep.decay_ratio) : json()},
           {"scaled_second_t2", rep.scaled_second_t2}}},
         {"thresholds",
          {{"min_decay_ratio", 1.5}, {"max_residual_fraction", 0.1}}},
         {"pass", rep.pass}};
  std::cout << j.dump(2) << "\n";
  sink.write("_verdict.json", j.dump(2) + "\n");

  std::ostringstream csv;
  csv << "replicate,D_t1,D_t2\n";
  for (std::size_t r = 0; r < rep.D_t1.size(); ++r) {
    csv << r << ',' << csv_cell(rep.D_t1[r]) << ',' << csv_cell(rep.D_t2[r])
        << "\n";
  }
  sink.write("_replicates.csv", csv.str());
  return rep.pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// clt-test

int cmd_clt(const Loaded& L, const std::string& f_spec,
            const std::string& h_spec, const std::string& g_spec, double t,
            double lookahead, int replicates, double dt, std::uint64_t seed,
            Sink& sink) {
  const SpectralSystem sys = build_spectral(L.sc);
  std::optional<FunctionProfile> f, h, g;
  json names{{"f", nullptr}, {"h", nullptr}, {"g", nullptr}};
  if (!f_spec.empty()) {
    f = profile_function(sys, parse_fn(sys, f_spec).f);
    names["f"] = f_spec;
  }
  if (!h_spec.empty()) {
    h = profile_function(sys, parse_fn(sys, h_spec).f);
    names["h"] = h_spec;
  }
  if (!g_spec.empty()) {
    g = profile_function(sys, parse_fn(sys, g_spec).f);
    names["g"] = g_spec;
  }
  if (!f && !h && !g) {
    throw std::invalid_argument("clt-test needs at least one of --f/--h/--g");
  }
  if (g && !(lookahead > 0)) {
    throw std::invalid_argument("--lookahead must be > 0 when g is given");
  }
  const CltConstants consts = clt_constants(L.sc, sys, f, h, g, L.sc.mu0);

  SimConfig cfg;
  cfg.dt = dt;
  cfg.t_snapshots = {t};
  if (g) cfg.t_snapshots.push_back(t + lookahead);
  cfg.replicates = replicates;
  cfg.master_seed = seed;
  const PathEnsemble ens = simulate_ensemble(L.sc, cfg);
  const CltReport rep = clt_test(ens, sys, f, h, g, consts, t, lookahead);

  json j{{"schema_version", kOutputSchemaVersion},
         {"test", "clt"},
         {"scenario", L.path},
         {"scenario_hash", L.hash},
         {"inputs",
          {{"functions", names},
           {"t", t},
           {"lookahead", g ? json(lookahead) : json()},
           {"replicates", replicates},
           {"dt", dt},
           {"seed", seed},
           {"failed_replicates", ens.failed}}},
         {"statistics",
          {{"exclusion_fraction", rep.exclusion_fraction},
           {"W_mean_z", rep.W_mean_z},
           {"W_var_z", rep.W_var_z},
           {"mean_W_ref", consts.mean_Wtilde},
           {"var_W_ref", consts.var_Wtilde},
           {"sigma2", opt_json(consts.sigma2_f)},
           {"rho2", opt_json(consts.rho2_h)},
           {"beta2", opt_json(consts.beta2_g)},
           {"ks_f", ks_json(rep.ks_f)},
           {"ks_g", ks_json(rep.ks_g)},
           {"var_ratio_f", opt_json(rep.var_ratio_f)},
           {"var_ratio_g", opt_json(rep.var_ratio_g)},
           {"var_ratio_h", opt_json(rep.var_ratio_h)},
           {"max_abs_corr", rep.max_abs_corr}}},
         {"thresholds",
          {{"se_z", 3.5},
           {"ks_level", 0.01},
           {"var_ratio_fg", {0.93, 1.07}},
           {"var_ratio_h", {0.90, 1.10}},
           {"max_abs_corr", rep.corr_threshold}}},
         {"pass", rep.pass}};
  std::cout << j.dump(2) << "\n";
  sink.write("_verdict.json", j.dump(2) + "\n");

  std::ostringstream csv;
  csv << "index,W_hat";
  if (f) csv << ",U_f";
  if (h) csv << ",U_h";
  if (g) csv << ",U_g";
  csv << "\n";
  for (std::size_t i = 0; i < rep.sample.W_hat.size(); ++i) {
    csv << i << ',' << csv_cell(rep.sample.W_hat[i]);
    if (f) csv << ',' << csv_cell(rep.sample.U_f[i]);
    if (h) csv << ',' << csv_cell(rep.sample.U_h[i]);
    if (g) csv << ',' << csv_cell(rep.sample.U_g[i]);
    csv << "\n";
  }
  sink.write("_replicates.csv", csv.str());
  return rep.pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// full-battery

struct BatteryItem {
  std::string name;
  bool pass = false;
  json detail;
};

std::uint64_t derived_seed(std::uint64_t seed, const std::string& tag) {
  std::uint64_t s = seed ^ fnv1a64(tag);
  return splitmix64(s);
}

// z-score with the same floor the library's interval checks use. The floor
// also covers deterministic ensembles, where identical replicates leave the
// standard error at summation-rounding scale rather than exactly zero and a
// raw ratio would amplify dust into huge scores.
double zscore(double emp, double ref, double se) {
  const double floor = 1e-9 * std::max(1.0, std::abs(ref));
  return (emp - ref) / std::max(se, floor);
}

// Sample mean/variance of <f, Y_t> against the exact moments, and the
// empirical Laplace transform against the exact one, all at 3.5 SE.
BatteryItem battery_moment_cross(const std::string& name, const Loaded& L,
                                 const SpectralSystem& sys,
                                 const PathEnsemble& ens,
                                 const std::vector<NamedFn>& fns) {
  BatteryItem item;
  item.name = "moments:" + name;
  item.pass = ens.failed == 0;
  json checks = json::array();
  for (const auto& fn : fns) {
    for (std::size_t s = 0; s < ens.t_snapshots.size(); ++s) {
      const double t = ens.t_snapshots[s];
      const MomentValues mv = second_moment_Y(L.sc, sys, fn.f, t, L.sc.mu0);
      const SampleStats st =
          sample_stats(functional_samples(ens, sys, static_cast<int>(s), fn.f));
      const double zm = zscore(st.mean, mv.mean, st.se_mean);
      const double zv = zscore(st.var, mv.variance, st.se_var);
      const bool ok = std::abs(zm) <= 3.5 && std::abs(zv) <= 3.5;
      item.pass = item.pass && ok;
      checks.push_back(json{{"f", fn.name},
                            {"t", t},
                            {"mean_z", zm},
                            {"var_z", zv},
                            {"pass", ok}});
    }
  }
  item.detail = json{{"failed_replicates", ens.failed}, {"checks", checks}};
  return item;
}

BatteryItem battery_laplace_cross(const std::string& name, const Loaded& L,
                                  const SpectralSystem& sys,
                                  const PathEnsemble& ens, int snapshot,
                                  const std::vector<NamedFn>& fns,
                                  const std::vector<double>& thetas) {
  BatteryItem item;
  item.name = "laplace:" + name;
  item.pass = ens.failed == 0;
  const double t = ens.t_snapshots[snapshot];
  json checks = json::array();
  for (const auto& fn : fns) {
    const std::vector<double> vals =
        functional_samples(ens, sys, snapshot, fn.f);
    for (double th : thetas) {
      std::vector<double> lap(vals.size());
      for (std::size_t i = 0; i < vals.size(); ++i) {
        lap[i] = std::exp(-th * vals[i]);
      }
      const SampleStats st = sample_stats(lap);
      const double exact = laplace_Y(L.sc, sys, (th * fn.f).eval(), t, L.sc.mu0);
      const double z = zscore(st.mean, exact, st.se_mean);
      const bool ok = std::abs(z) <= 3.5;
      item.pass = item.pass && ok;
      checks.push_back(
          json{{"f", fn.name}, {"theta", th}, {"t", t}, {"z", z}, {"pass", ok}});
    }
  }
  item.detail = json{{"checks", checks}};
  return item;
}

const std::vector<std::string> kBatteryScenarios{"s1", "s2a1", "s2a4", "s2a5"};

std::map<std::string, Loaded> load_battery_set(const std::string& dir) {
  std::map<std::string, Loaded> scen;
  for (const auto& nm : kBatteryScenarios) {
    const std::string path =
        (std::filesystem::path(dir) / (nm + ".json")).string();
    scen.emplace(nm, load_raw(path));
  }
  return scen;
}

int cmd_battery(const std::map<std::string, Loaded>& scen,
                const std::string& dir, std::uint64_t seed, int replicates,
                double dt, Sink& sink, RunManifest& man,
                const std::string& started) {
  const std::vector<std::string>& names = kBatteryScenarios;
  std::vector<BatteryItem> results;
  json aborted;
  bool all_pass = true;

  auto finish = [&](int code) {
    json j{{"schema_version", kOutputSchemaVersion},
           {"test", "full-battery"},
           {"inputs",
            {{"scenario_dir", dir},
             {"seed", seed},
             {"replicates", replicates},
             {"dt", dt}}},
           {"scenarios", json::object()},
           {"results", json::array()},
           {"aborted", aborted},
           {"pass", code == 0}};
    for (const auto& nm : names) j["scenarios"][nm] = scen.at(nm).hash;
    for (const auto& it : results) {
      json r{{"name", it.name}, {"pass", it.pass}};
      r["detail"] = it.detail;
      j["results"].push_back(r);
    }
    std::cout << j.dump(2) << "\n";
    sink.write("_summary.json", j.dump(2) + "\n");
    emit_manifest(sink, man, started);
    return code;
  };

  if (replicates < 1000) {
    aborted = json{{"test", "full-battery"},
                   {"message", "insufficient replicates (need >= 1000)"}};
    std::cerr << "full-battery: insufficient replicates (need >= 1000)\n";
    return finish(1);
  }

  std::string current = "setup";
  try {
    // Validation gates everything else.
    for (const auto& nm : names) {
      current = "validate:" + nm;
      const ValidationReport rep = validate(scen.at(nm).sc);
      results.push_back({current, rep.pass(),
                         json{{"violations", rep.violations},
                              {"lambda1", rep.lambda1},
                              {"M", rep.M}}});
      all_pass = all_pass && rep.pass();
    }

    // Simulator vs exact moments and Laplace transforms.
    for (const auto& nm : {std::string("s1"), std::string("s2a1"),
                           std::string("s2a5")}) {
      current = "moments:" + nm;
      const Loaded& L = scen.at(nm);
      const SpectralSystem sys = build_spectral(L.sc);
      SimConfig cfg;
      cfg.dt = dt;
      cfg.t_snapshots = {0.5, 1.0, 2.0};
      cfg.replicates = replicates;
      cfg.master_seed = derived_seed(seed, "cross:" + nm);
      const PathEnsemble ens = simulate_ensemble(L.sc, cfg);

      std::vector<NamedFn> fns{parse_fn(sys, "one"), parse_fn(sys, "phi1")};
      if (sys.n() >= 2) fns.push_back(parse_fn(sys, "phi2"));
      results.push_back(battery_moment_cross(nm, L, sys, ens, fns));
      all_pass = all_pass && results.back().pass;

      current = "laplace:" + nm;
      std::vector<NamedFn> nonneg{parse_fn(sys, "one"), parse_fn(sys, "phi1")};
      results.push_back(
          battery_laplace_cross(nm, L, sys, ens, 1, nonneg, {0.25, 1.0, 4.0}));
      all_pass = all_pass && results.back().pass;
    }

    // Martingale snapshots and slope.
    for (const auto& nm : {std::string("s1"), std::string("s2a1"),
                           std::string("s2a5")}) {
      current = "martingale:" + nm;
      const Loaded& L = scen.at(nm);
      const SpectralSystem sys = build_spectral(L.sc);
      const MartingaleConstants mc =
          martingale_constants(L.sc, sys, 1, 1, L.sc.mu0);
      const double gc = gamma_functional(L.sc.immigration, sys.phi1);
      SimConfig cfg;
      cfg.dt = dt;
      cfg.t_snapshots = {1.0, 2.0, 4.0, 8.0};
      cfg.replicates = replicates;
      cfg.master_seed = derived_seed(seed, current);
      const PathEnsemble ens = simulate_ensemble(L.sc, cfg);
      const MartingaleReport rep =
          martingale_test(ens, sys, 1, 1, gc, mc.mean_H);
      results.push_back({current, rep.pass,
                         json{{"mean_H", rep.mean_H},
                              {"expected", rep.expected},
                              {"slope", rep.slope},
                              {"slope_ci", {rep.slope_ci_lo, rep.slope_ci_hi}}}});
      all_pass = all_pass && rep.pass;
    }

    // Law of large numbers on the principal projection.
    {
      current = "lln:s1";
      const Loaded& L = scen.at("s1");
      const SpectralSystem sys = build_spectral(L.sc);
      SimConfig cfg;
      cfg.dt = dt;
      cfg.t_snapshots = {4.0, 8.0, 16.0};
      cfg.replicates = replicates;
      cfg.master_seed = derived_seed(seed, current);
      const PathEnsemble ens = simulate_ensemble(L.sc, cfg);
      const FunctionProfile prof = profile_function(sys, sys.phi1);
      const LlnReport rep = lln_test(ens, sys, prof, 4.0, 8.0, 16.0);
      results.push_back({current, rep.pass,
                         json{{"D2_t1", rep.D2_t1},
                              {"D2_t2", rep.D2_t2},
                              {"scaled_second_t2", rep.scaled_second_t2}}});
      all_pass = all_pass && rep.pass;
    }

    // Central limit statistics: subcritical direction on s2a1, critical
    // direction on s2a4.
    {
      current = "clt:s2a1";
      const Loaded& L = scen.at("s2a1");
      const SpectralSystem sys = build_spectral(L.sc);
      const auto f = profile_function(sys, parse_fn(sys, "phi2").f);
      const auto g = profile_function(sys, parse_fn(sys, "phi1").f);
      const CltConstants consts =
          clt_constants(L.sc, sys, f, std::nullopt, g, L.sc.mu0);
      SimConfig cfg;
      cfg.dt = dt;
      cfg.t_snapshots = {12.0, 24.0};
      cfg.replicates = std::max(replicates, 10000);
      cfg.master_seed = derived_seed(seed, current);
      const PathEnsemble ens = simulate_ensemble(L.sc, cfg);
      const CltReport rep =
          clt_test(ens, sys, f, std::nullopt, g, consts, 12.0, 12.0);
      results.push_back({current, rep.pass,
                         json{{"ks_f", ks_json(rep.ks_f)},
                              {"ks_g", ks_json(rep.ks_g)},
                              {"var_ratio_f", opt_json(rep.var_ratio_f)},
                              {"var_ratio_g", opt_json(rep.var_ratio_g)},
                              {"W_mean_z", rep.W_mean_z},
                              {"W_var_z", rep.W_var_z},
                              {"max_abs_corr", rep.max_abs_corr}}});
      all_pass = all_pass && rep.pass;

      current = "clt:s2a4";
      const Loaded& L4 = scen.at("s2a4");
      const SpectralSystem sys4 = build_spectral(L4.sc);
      const auto h = profile_function(sys4, parse_fn(sys4, "phi2").f);
      const CltConstants consts4 =
          clt_constants(L4.sc, sys4, std::nullopt, h, std::nullopt, L4.sc.mu0);
      SimConfig cfg4;
      cfg4.dt = dt;
      cfg4.t_snapshots = {40.0};
      cfg4.replicates = std::max(replicates, 10000);
      cfg4.master_seed = derived_seed(seed, current);
      const PathEnsemble ens4 = simulate_ensemble(L4.sc, cfg4);
      const CltReport rep4 =
          clt_test(ens4, sys4, std::nullopt, h, std::nullopt, consts4, 40.0, 0.0);
      results.push_back({current, rep4.pass,
                         json{{"var_ratio_h", opt_json(rep4.var_ratio_h)},
                              {"W_mean_z", rep4.W_mean_z},
                              {"W_var_z", rep4.W_var_z}}});
      all_pass = all_pass && rep4.pass;
    }
  } catch (const std::exception& e) {
    aborted = json{{"test", current}, {"message", e.what()}};
    std::cerr << "full-battery: " << current << " refused: " << e.what()
              << "\n";
    return finish(1);
  }

  return finish(all_pass ? 0 : 1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "superclt: exact spectral/moment computations and Monte Carlo limit-"
      "theorem verification for a supercritical superprocess with immigration "
      "on a finite site space"};
  app.require_subcommand(1);

  std::string scenario, out_dir, f_spec, h_spec, g_spec;
  std::string t_list = "1", theta_list = "0.25,1,4", snapshot_list, mode_str =
      "full";
  double t_single = 12.0, lookahead = 12.0, dt = 0.005;
  int replicates = 20000;
  std::uint64_t seed = 1;
  std::string battery_dir = "scenarios";

  auto add_scenario = [&](CLI::App* c) {
    c->add_option("scenario,--scenario", scenario, "scenario config file")
        ->required();
  };
  auto add_out = [&](CLI::App* c) {
    c->add_option("--out", out_dir, "output directory (enables file output)");
  };
  auto add_sim_flags = [&](CLI::App* c) {
    c->add_option("--seed", seed, "master RNG seed");
    c->add_option("--replicates", replicates, "Monte Carlo replicates");
    c->add_option("--dt", dt, "time step of the splitting scheme");
  };

  CLI::App* c_val = app.add_subcommand("validate", "check a scenario config");
  add_scenario(c_val);
  add_out(c_val);

  CLI::App* c_spec = app.add_subcommand("spectral", "eigenstructure report");
  add_scenario(c_spec);
  add_out(c_spec);

  CLI::App* c_lap =
      app.add_subcommand("laplace", "exact Laplace transform of <f, Y_t>");
  add_scenario(c_lap);
  add_out(c_lap);
  c_lap->add_option("--f", f_spec, "test function (one|phiK|v1,v2,...)");
  c_lap->add_option("--t", t_list, "comma-separated times");
  c_lap->add_option("--theta", theta_list, "comma-separated theta grid");

  CLI::App* c_mom =
      app.add_subcommand("moments", "exact mean/second moment/variance");
  add_scenario(c_mom);
  add_out(c_mom);
  c_mom->add_option("--f", f_spec, "test function");
  c_mom->add_option("--t", t_list, "comma-separated times");

  CLI::App* c_cc =
      app.add_subcommand("clt-constants", "limit constants for given functions");
  // The short help alias -h would shadow the --h option below.
  c_cc->set_help_flag("--help", "print help");
  add_scenario(c_cc);
  add_out(c_cc);
  c_cc->add_option("--f", f_spec, "subcritical-direction function");
  c_cc->add_option("--h", h_spec, "critical-direction function");
  c_cc->add_option("--g", g_spec, "supercritical-direction function");

  CLI::App* c_sim = app.add_subcommand("simulate", "write a path ensemble");
  add_scenario(c_sim);
  c_sim->add_option("--out", out_dir, "output directory")->required();
  add_sim_flags(c_sim);
  c_sim->add_option("--snapshots", snapshot_list, "comma-separated times")
      ->required();
  c_sim->add_option("--mode", mode_str, "full|native_only|immigration_only")
      ->check(CLI::IsMember({"full", "native_only", "immigration_only"}));

  CLI::App* c_mart =
      app.add_subcommand("martingale-test", "compensated martingale check");
  add_scenario(c_mart);
  add_out(c_mart);
  add_sim_flags(c_mart);
  c_mart->add_option("--f", f_spec, "eigenfunction phiK");
  c_mart->add_option("--snapshots", snapshot_list, "comma-separated times");

  CLI::App* c_lln =
      app.add_subcommand("lln-test", "strong-law residual decay check");
  add_scenario(c_lln);
  add_out(c_lln);
  add_sim_flags(c_lln);
  c_lln->add_option("--f", f_spec, "test function");
  c_lln->add_option("--snapshots", snapshot_list, "t1,t2,t_proxy");

  CLI::App* c_clt =
      app.add_subcommand("clt-test", "normal fluctuation checks");
  c_clt->set_help_flag("--help", "print help");
  add_scenario(c_clt);
  add_out(c_clt);
  add_sim_flags(c_clt);
  c_clt->add_option("--f", f_spec, "subcritical-direction function");
  c_clt->add_option("--h", h_spec, "critical-direction function");
  c_clt->add_option("--g", g_spec, "supercritical-direction function");
  c_clt->add_option("--t", t_single, "evaluation time");
  c_clt->add_option("--lookahead", lookahead, "proxy lookahead for g");

  CLI::App* c_bat =
      app.add_subcommand("full-battery", "run every check on the bundled set");
  c_bat->add_option("--scenario-dir", battery_dir, "directory with s1/s2a*");
  add_out(c_bat);
  add_sim_flags(c_bat);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  // Config phase: load inputs, resolve names, set up outputs. Failures here
  // are usage errors (exit 2); failures during the run itself exit 1.
  Loaded L;
  std::map<std::string, Loaded> battery_set;
  Sink sink;
  RunManifest man;
  std::string started = iso8601_utc_now();
  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    if (f_spec.empty()) {
      if (sub == "laplace" || sub == "moments") f_spec = "one";
      if (sub == "martingale-test" || sub == "lln-test") f_spec = "phi1";
    }
    if (snapshot_list.empty()) {
      if (sub == "martingale-test") snapshot_list = "1,2,4,8";
      if (sub == "lln-test") snapshot_list = "4,8,16";
    }

    man.subcommand = sub;
    man.master_seed = seed;
    std::string hash_part;
    if (sub != "full-battery") {
      L = load_raw(scenario);
      man.scenario_hash = L.hash;
      man.flags.emplace_back("scenario", scenario);
      hash_part = L.hash;
    } else {
      battery_set = load_battery_set(battery_dir);
      std::string all_text;
      for (const auto& nm : kBatteryScenarios) {
        all_text += battery_set.at(nm).text;
      }
      man.scenario_hash = fnv1a64_hex(all_text);
      man.flags.emplace_back("scenario-dir", battery_dir);
      hash_part = man.scenario_hash;
    }
    const std::string prefix =
        "superclt_" + sub + "_" + hash_part + "_s" + std::to_string(seed);
    if (sub == "full-battery" && out_dir.empty()) out_dir = ".";
    if (!out_dir.empty()) sink = Sink(out_dir, prefix);

    auto flag = [&](const std::string& k, const std::string& v) {
      man.flags.emplace_back(k, v);
    };
    if (!f_spec.empty()) flag("f", f_spec);
    if (!h_spec.empty()) flag("h", h_spec);
    if (!g_spec.empty()) flag("g", g_spec);
    if (sub == "laplace") {
      flag("t", t_list);
      flag("theta", theta_list);
    }
    if (sub == "moments") flag("t", t_list);
    if (sub == "clt-test") {
      flag("t", format_double(t_single));
      flag("lookahead", format_double(lookahead));
    }
    if (!snapshot_list.empty()) flag("snapshots", snapshot_list);
    if (sub == "simulate") flag("mode", mode_str);
    if (sub == "simulate" || sub == "martingale-test" || sub == "lln-test" ||
        sub == "clt-test" || sub == "full-battery") {
      flag("seed", std::to_string(seed));
      flag("replicates", std::to_string(replicates));
      flag("dt", format_double(dt));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    int code = 0;
    if (sub == "validate") {
      code = cmd_validate(L, sink, man);
    } else if (sub == "spectral") {
      code = cmd_spectral(L, sink);
    } else if (sub == "laplace") {
      code = cmd_laplace(L, f_spec, t_list, theta_list, sink);
    } else if (sub == "moments") {
      code = cmd_moments(L, f_spec, t_list, sink);
    } else if (sub == "clt-constants") {
      code = cmd_clt_constants(L, f_spec, h_spec, g_spec, sink);
    } else if (sub == "simulate") {
      SimConfig cfg;
      cfg.dt = dt;
      cfg.t_snapshots = parse_list(snapshot_list);
      cfg.replicates = replicates;
      cfg.master_seed = seed;
      cfg.mode = mode_str == "native_only"
                     ? SimMode::native_only
                     : mode_str == "immigration_only" ? SimMode::immigration_only
                                                      : SimMode::full;
      code = cmd_simulate(L, cfg, sink, man);
    } else if (sub == "martingale-test") {
      code = cmd_martingale(L, f_spec, parse_list(snapshot_list), replicates,
                            dt, seed, sink);
    } else if (sub == "lln-test") {
      code = cmd_lln(L, f_spec, parse_list(snapshot_list), replicates, dt,
                     seed, sink);
    } else if (sub == "clt-test") {
      code = cmd_clt(L, f_spec, h_spec, g_spec, t_single, lookahead,
                     replicates, dt, seed, sink);
    } else if (sub == "full-battery") {
      return cmd_battery(battery_set, battery_dir, seed, replicates, dt, sink,
                         man, started);
    }
    emit_manifest(sink, man, started);
    return code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    emit_manifest(sink, man, started);
    return 1;
  }
}

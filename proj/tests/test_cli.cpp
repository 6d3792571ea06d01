// End-to-end checks of the superclt command line: exit codes per failure
// phase, stdout spot values, guarded file output, and rerun determinism.
// Statistical behavior of the underlying routines is covered elsewhere; the
// simulation-heavy subcommands are exercised here on noiseless configs so the
// runs are fast and their verdicts exact.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;  // stdout and stderr interleaved
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(SUPERCLT_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[4096];
  std::size_t got = 0;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string scenario(const std::string& name) {
  return (fs::path(SUPERCLT_SCENARIO_DIR) / name).string();
}

// Fresh per-test scratch directory under the ctest working directory.
fs::path scratch(const std::string& name) {
  fs::path dir = fs::path("cli_scratch") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  REQUIRE(out.good());
  out << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

// Finds the unique file in dir whose name ends with the given suffix.
fs::path find_output(const fs::path& dir, const std::string& suffix) {
  std::vector<fs::path> hits;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string nm = e.path().filename().string();
    if (nm.size() >= suffix.size() &&
        nm.compare(nm.size() - suffix.size(), suffix.size(), suffix) == 0) {
      hits.push_back(e.path());
    }
  }
  REQUIRE(hits.size() == 1);
  return hits.front();
}

// Deterministic branching flow: no diffusion, no jumps, no immigration. The
// simulator reproduces the mean semigroup exactly, so every statistical
// verdict on these configs is a sharp yes/no.
std::string noiseless_one_site() {
  return R"({
  "space": {"n": 1, "m": [1]},
  "generator": {"Q": [[0]]},
  "branching": {"beta": [1], "a": [0.5], "b": [0]},
  "immigration": {"eta": [0]},
  "initial": {"mu": [1]}
})";
}

std::string noiseless_two_site(double a_hat) {
  const std::string a = std::to_string(a_hat);
  return std::string(R"({
  "space": {"n": 2, "m": [1, 1]},
  "generator": {"Q": [[-1, 1], [1, -1]]},
  "branching": {"beta": [1, 1], "a": [)") +
         a + ", " + a + R"(], "b": [0, 0]},
  "immigration": {"eta": [0, 0]},
  "initial": {"mu": [1, 0]}
})";
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("validate reports the flow summary on a bundled scenario") {
  const RunResult r = run_cli("validate " + scenario("s1.json"));
  CHECK(r.code == 0);
  CHECK(r.out.find("lambda1 = -0.5") != std::string::npos);
  CHECK(r.out.find("M = 1.5") != std::string::npos);
  CHECK(r.out.find("gamma_total = 0.2") != std::string::npos);
  CHECK(r.out.find("supercritical = yes") != std::string::npos);
  CHECK(r.out.find("result = pass") != std::string::npos);
}

TEST_CASE("validate flags coefficient violations with exit 1") {
  const fs::path dir = scratch("validate_bad");
  const fs::path cfg = dir / "bad.json";
  write_file(cfg, R"({
  "space": {"n": 1, "m": [1]},
  "generator": {"Q": [[0]]},
  "branching": {"beta": [1], "a": [0.5], "b": [-0.5]},
  "immigration": {"eta": [0.2]},
  "initial": {"mu": [1]}
})");
  const RunResult r = run_cli("validate " + cfg.string());
  CHECK(r.code == 1);
  CHECK(r.out.find("violation: b must be nonnegative at site 1") !=
        std::string::npos);
  CHECK(r.out.find("result = fail") != std::string::npos);
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cli("validate /nonexistent/missing.json").code == 2);
  CHECK(run_cli("validate " + scenario("s1.json") + " --bogus-flag").code == 2);
  CHECK(run_cli("").code == 2);
  const RunResult bat = run_cli("full-battery --scenario-dir /nonexistent");
  CHECK(bat.code == 2);
  CHECK(bat.out.find("error:") != std::string::npos);
}

TEST_CASE("spectral prints one JSON line per eigenvalue group") {
  // Drop stderr so the line count sees stdout alone.
  const std::string cmd = std::string(SUPERCLT_CLI_PATH) + " spectral " +
                          scenario("s2a1.json") + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  std::size_t got = 0;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, got);
  const int status = pclose(pipe);
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(count_lines(out) == 2);
  CHECK(out.find("\"k\":1") != std::string::npos);
  CHECK(out.find("\"k\":2") != std::string::npos);
  CHECK(out.find("\"multiplicity\":1") != std::string::npos);
  CHECK(out.find("\"lambda\":") != std::string::npos);
}

TEST_CASE("laplace prints the exact transform as CSV") {
  const RunResult r =
      run_cli("laplace " + scenario("s1.json") + " --t 1 --theta 1");
  CHECK(r.code == 0);
  CHECK(r.out.find("t,theta,exact_laplace") != std::string::npos);
  // theta = 1 is a fixed point of the branching mechanism here, so the value
  // reduces to exp(-1 - 0.2 t); trusted digits bounded by the ODE tolerance.
  CHECK(r.out.find("1,1,0.3011942119") != std::string::npos);
}

TEST_CASE("moments prints the closed-form columns") {
  const RunResult r = run_cli("moments " + scenario("s1.json") + " --t 1");
  CHECK(r.code == 0);
  CHECK(r.out.find("t,f_name,mean,second,variance,mean_initial,"
                   "mean_immigration,var_initial,var_immigration") !=
        std::string::npos);
  CHECK(r.out.find("1,one,1.9082097789801") != std::string::npos);
}

TEST_CASE("clt-constants reports limit variances and rejects class mismatch") {
  const RunResult ok =
      run_cli("clt-constants " + scenario("s2a1.json") + " --f phi2");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("\"sigma2\"") != std::string::npos);
  CHECK(ok.out.find("0.23570226039551") != std::string::npos);

  const RunResult bad =
      run_cli("clt-constants " + scenario("s1.json") + " --f phi1");
  CHECK(bad.code == 1);
  CHECK(bad.out.find("must be Cs") != std::string::npos);
}

TEST_CASE("simulate writes guarded artifacts") {
  const fs::path dir = scratch("simulate");
  const std::string base = "simulate " + scenario("s1.json") + " --out " +
                           dir.string() +
                           " --replicates 3 --snapshots 0.5,1 --seed 9";
  const RunResult first = run_cli(base + " --dt 0.1");
  CHECK(first.code == 0);
  CHECK(first.out.find("replicates = 3") != std::string::npos);
  CHECK(first.out.find("failed = 0") != std::string::npos);

  const fs::path csv = find_output(dir, "_s9.csv");
  CHECK(csv.filename().string().rfind("superclt_simulate_", 0) == 0);
  const std::string body = read_file(csv);
  CHECK(body.rfind("replicate,t,y_1\n", 0) == 0);
  const fs::path manifest = find_output(dir, "_manifest.json");
  CHECK(read_file(manifest).find("\"subcommand\": \"simulate\"") !=
        std::string::npos);

  // Identical rerun: same bytes land in the same files, which is a no-op.
  const RunResult again = run_cli(base + " --dt 0.1");
  CHECK(again.code == 0);
  CHECK(read_file(csv) == body);

  // A different dt produces different content under the same name; the run
  // must refuse rather than clobber the existing result.
  const RunResult clash = run_cli(base + " --dt 0.05");
  CHECK(clash.code == 1);
  CHECK(clash.out.find("refusing to overwrite") != std::string::npos);
  CHECK(read_file(csv) == body);
}

TEST_CASE("martingale-test passes a deterministic flow and reruns identically") {
  const fs::path dir = scratch("martingale");
  const fs::path cfg = dir / "flow.json";
  write_file(cfg, noiseless_one_site());
  const fs::path out_a = dir / "a";
  const fs::path out_b = dir / "b";
  fs::create_directories(out_a);
  fs::create_directories(out_b);
  const std::string base = "martingale-test " + cfg.string() +
                           " --replicates 1000 --dt 0.1 --snapshots 1,2,4" +
                           " --seed 5 --out ";
  const RunResult ra = run_cli(base + out_a.string());
  CHECK(ra.code == 0);
  CHECK(ra.out.find("\"pass\": true") != std::string::npos);
  const RunResult rb = run_cli(base + out_b.string());
  CHECK(rb.code == 0);

  const std::string verdict_a = read_file(find_output(out_a, "_verdict.json"));
  const std::string verdict_b = read_file(find_output(out_b, "_verdict.json"));
  CHECK(verdict_a == verdict_b);
  const std::string reps_a = read_file(find_output(out_a, "_replicates.csv"));
  const std::string reps_b = read_file(find_output(out_b, "_replicates.csv"));
  CHECK(reps_a == reps_b);
  CHECK(reps_a.rfind("replicate,", 0) == 0);
}

TEST_CASE("lln-test requires exactly three snapshot times") {
  const RunResult r =
      run_cli("lln-test " + scenario("s1.json") +
              " --replicates 1000 --dt 0.1 --snapshots 1,2");
  CHECK(r.code == 1);
  CHECK(r.out.find("t1,t2,t_proxy") != std::string::npos);
}

TEST_CASE("full-battery refuses insufficient replicates") {
  const fs::path dir = scratch("battery_small");
  const RunResult r = run_cli("full-battery --scenario-dir " +
                              std::string(SUPERCLT_SCENARIO_DIR) +
                              " --replicates 10 --out " + dir.string());
  CHECK(r.code == 1);
  CHECK(r.out.find("insufficient replicates (need >= 1000)") !=
        std::string::npos);
  CHECK(r.out.find("\"pass\": false") != std::string::npos);
  const std::string summary = read_file(find_output(dir, "_summary.json"));
  CHECK(summary.find("insufficient replicates") != std::string::npos);
}

TEST_CASE("full-battery passes on a deterministic scenario set") {
  const fs::path dir = scratch("battery_det");
  const fs::path scen_dir = dir / "scenarios";
  fs::create_directories(scen_dir);
  write_file(scen_dir / "s1.json", noiseless_one_site());
  write_file(scen_dir / "s2a1.json", noiseless_two_site(1.0));
  write_file(scen_dir / "s2a4.json", noiseless_two_site(4.0));
  write_file(scen_dir / "s2a5.json", noiseless_two_site(5.0));
  const fs::path out = dir / "out";
  fs::create_directories(out);

  const RunResult r = run_cli("full-battery --scenario-dir " +
                              scen_dir.string() + " --out " + out.string() +
                              " --replicates 1000 --dt 0.05 --seed 3");
  CHECK(r.code == 0);
  CHECK(r.out.find("\"pass\": true") != std::string::npos);
  CHECK(r.out.find("\"aborted\": null") != std::string::npos);
  const std::string summary = read_file(find_output(out, "_summary.json"));
  for (const std::string name :
       {"validate:s1", "validate:s2a1", "validate:s2a4", "validate:s2a5",
        "moments:s1", "laplace:s1", "moments:s2a1", "laplace:s2a1",
        "moments:s2a5", "laplace:s2a5", "martingale:s1", "martingale:s2a1",
        "martingale:s2a5", "lln:s1", "clt:s2a1", "clt:s2a4"}) {
    CHECK_MESSAGE(summary.find("\"name\": \"" + name + "\"") !=
                      std::string::npos,
                  name);
  }
  CHECK(summary.find("\"pass\": false") == std::string::npos);
}

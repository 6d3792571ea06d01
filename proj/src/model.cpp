#include "superclt/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "json.hpp"
#include "superclt/io.hpp"

namespace superclt {

namespace {

using nlohmann::json;

void require_size(const Vec& v, int n, const std::string& name) {
  if (v.size() != n) {
    throw std::invalid_argument(name + " has " + std::to_string(v.size()) +
                                " entries, expected " + std::to_string(n));
  }
}

void require_dimensions(const Scenario& sc) {
  const int n = sc.space.n;
  if (n < 1) throw std::invalid_argument("space.n must be >= 1");
  require_size(sc.space.m, n, "space.m");
  if (sc.generator.Q.rows() != n || sc.generator.Q.cols() != n) {
    throw std::invalid_argument("generator.Q must be n x n");
  }
  require_size(sc.branching.beta, n, "branching.beta");
  require_size(sc.branching.a, n, "branching.a");
  require_size(sc.branching.b, n, "branching.b");
  if (static_cast<int>(sc.branching.jump_atoms.size()) != n) {
    throw std::invalid_argument("branching.jump_atoms must have one list per site");
  }
  require_size(sc.immigration.eta, n, "immigration.eta");
  for (std::size_t j = 0; j < sc.immigration.H_atoms.size(); ++j) {
    require_size(sc.immigration.H_atoms[j].nu, n,
                 "immigration.H_atoms[" + std::to_string(j) + "].nu");
  }
  require_size(sc.mu0, n, "initial.mu");
}

Vec parse_vec(const json& j, const std::string& key) {
  if (!j.contains(key)) throw std::runtime_error("missing key \"" + key + "\"");
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw std::runtime_error("key \"" + key + "\" must be an array");
  Vec v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<int>(i)) = arr[i].get<double>();
  return v;
}

json vec_to_json(const Vec& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

}  // namespace

DerivedCoefficients derived_coefficients(const Scenario& sc) {
  require_dimensions(sc);
  const int n = sc.space.n;
  DerivedCoefficients d;
  d.alpha = sc.branching.beta.array() * sc.branching.a.array();
  d.A = Vec(n);
  for (int i = 0; i < n; ++i) {
    double jump_second = 0.0;
    for (const auto& atom : sc.branching.jump_atoms[i]) {
      jump_second += atom.rate * atom.y * atom.y;
    }
    d.A(i) = sc.branching.beta(i) * (2.0 * sc.branching.b(i) + jump_second);
  }
  d.M = 0.0;
  for (int i = 0; i < n; ++i) d.M = std::max(d.M, std::abs(d.alpha(i)) + d.A(i));
  return d;
}

double gamma_functional(const ImmigrationLaw& imm, const Vec& f) {
  double g = imm.eta.dot(f);
  for (const auto& atom : imm.H_atoms) g += atom.rate * atom.nu.dot(f);
  return g;
}

Vec gamma_measure(const ImmigrationLaw& imm, int n) {
  Vec g = imm.eta;
  if (g.size() != n) throw std::invalid_argument("eta has wrong dimension");
  for (const auto& atom : imm.H_atoms) g += atom.rate * atom.nu;
  return g;
}

ValidationReport validate(const Scenario& sc) {
  require_dimensions(sc);
  const int n = sc.space.n;
  ValidationReport rep;
  auto flag = [&rep](const std::string& msg) { rep.violations.push_back(msg); };

  for (int i = 0; i < n; ++i) {
    if (!(sc.space.m(i) > 0)) flag("m must be positive at site " + std::to_string(i + 1));
  }

  const Mat& Q = sc.generator.Q;
  bool symmetric = true;
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) {
      row += Q(i, j);
      if (i != j && Q(i, j) < 0) {
        flag("Q off-diagonal must be nonnegative at (" + std::to_string(i + 1) +
             "," + std::to_string(j + 1) + ")");
      }
    }
    if (row > 1e-12 * std::max(1.0, Q.cwiseAbs().maxCoeff())) {
      flag("Q row sum must be <= 0 at row " + std::to_string(i + 1));
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double lhs = sc.space.m(i) * Q(i, j);
      const double rhs = sc.space.m(j) * Q(j, i);
      if (std::abs(lhs - rhs) > 1e-12 * std::max({1.0, std::abs(lhs), std::abs(rhs)})) {
        flag("m-symmetry failed at (" + std::to_string(i + 1) + "," +
             std::to_string(j + 1) + ")");
        symmetric = false;
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    if (sc.branching.beta(i) < 0) flag("beta must be nonnegative at site " + std::to_string(i + 1));
    if (sc.branching.b(i) < 0) flag("b must be nonnegative at site " + std::to_string(i + 1));
    for (const auto& atom : sc.branching.jump_atoms[i]) {
      if (!(atom.y > 0)) flag("jump atom mass must be positive at site " + std::to_string(i + 1));
      if (atom.rate < 0) flag("jump atom rate must be nonnegative at site " + std::to_string(i + 1));
    }
    if (sc.immigration.eta(i) < 0) flag("eta must be nonnegative at site " + std::to_string(i + 1));
    if (sc.mu0(i) < 0) flag("mu must be nonnegative at site " + std::to_string(i + 1));
  }
  for (std::size_t j = 0; j < sc.immigration.H_atoms.size(); ++j) {
    const auto& atom = sc.immigration.H_atoms[j];
    if (!(atom.rate > 0)) flag("H atom rate must be positive at atom " + std::to_string(j + 1));
    for (int i = 0; i < n; ++i) {
      if (atom.nu(i) < 0) flag("H atom measure must be nonnegative at atom " + std::to_string(j + 1));
    }
  }

  const DerivedCoefficients d = derived_coefficients(sc);
  rep.M = d.M;
  rep.gamma_total = gamma_functional(sc.immigration, Vec::Ones(n));
  rep.H_second_moment = 0.0;
  for (const auto& atom : sc.immigration.H_atoms) {
    const double total = atom.nu.sum();
    rep.H_second_moment += atom.rate * total * total;
  }

  // Principal decay exponent of the mean flow: the spectrum of L = Q +
  // diag(alpha) is computed from its m-symmetrization, which only exists
  // when the symmetry invariant holds.
  bool m_positive = (sc.space.m.array() > 0).all();
  if (symmetric && m_positive) {
    Mat L = Q;
    L.diagonal() += d.alpha;
    const Vec sqrt_m = sc.space.m.array().sqrt();
    Mat S = sqrt_m.asDiagonal() * L * sqrt_m.cwiseInverse().asDiagonal();
    S = 0.5 * (S + S.transpose());  // clean roundoff asymmetry
    Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) {
      throw std::runtime_error("eigenvalue computation failed in validate");
    }
    rep.lambda1 = -es.eigenvalues().maxCoeff();
    rep.supercritical = rep.lambda1 < 0;
    if (!rep.supercritical) {
      rep.warnings.push_back(
          "mean flow is not supercritical; moment reports remain valid, limit-theorem "
          "tests will refuse this scenario");
    }
  }
  return rep;
}

Scenario scenario_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config parse error: ") + e.what());
  }
  try {
    Scenario sc;
    const auto& space = j.at("space");
    sc.space.n = space.at("n").get<int>();
    sc.space.m = parse_vec(space, "m");

    const auto& gen = j.at("generator");
    if (!gen.contains("Q")) throw std::runtime_error("missing key \"Q\"");
    const auto& rows = gen.at("Q");
    const int n = sc.space.n;
    if (static_cast<int>(rows.size()) != n) {
      throw std::runtime_error("generator.Q must have n rows");
    }
    sc.generator.Q = Mat(n, n);
    for (int i = 0; i < n; ++i) {
      if (static_cast<int>(rows[i].size()) != n) {
        throw std::runtime_error("generator.Q row " + std::to_string(i + 1) +
                                 " must have n entries");
      }
      for (int k = 0; k < n; ++k) sc.generator.Q(i, k) = rows[i][k].get<double>();
    }

    const auto& br = j.at("branching");
    sc.branching.beta = parse_vec(br, "beta");
    sc.branching.a = parse_vec(br, "a");
    sc.branching.b = parse_vec(br, "b");
    sc.branching.jump_atoms.assign(n, {});
    if (br.contains("jump_atoms")) {
      for (const auto& triple : br.at("jump_atoms")) {
        if (!triple.is_array() || triple.size() != 3) {
          throw std::runtime_error("jump_atoms entries must be [site, y, rate]");
        }
        const int site = triple[0].get<int>();  // sites are 1-based in configs
        if (site < 1 || site > n) throw std::runtime_error("jump atom site out of range");
        sc.branching.jump_atoms[site - 1].push_back(
            {triple[1].get<double>(), triple[2].get<double>()});
      }
    }

    const auto& imm = j.at("immigration");
    sc.immigration.eta = parse_vec(imm, "eta");
    if (imm.contains("H_atoms")) {
      for (const auto& atom : imm.at("H_atoms")) {
        ImmigrationAtom ia;
        ia.nu = parse_vec(atom, "nu");
        if (!atom.contains("rate")) throw std::runtime_error("missing key \"rate\"");
        ia.rate = atom.at("rate").get<double>();
        sc.immigration.H_atoms.push_back(std::move(ia));
      }
    }

    sc.mu0 = parse_vec(j.at("initial"), "mu");
    require_dimensions(sc);
    return sc;
  } catch (const json::out_of_range& e) {
    throw std::runtime_error(std::string("config error: ") + e.what());
  } catch (const json::type_error& e) {
    throw std::runtime_error(std::string("config error: ") + e.what());
  }
}

std::string scenario_to_json_text(const Scenario& sc) {
  // Numbers are emitted through the round-trip formatter so that
  // save -> load reproduces every field bit-exactly.
  std::ostringstream out;
  auto vec = [](const Vec& v) {
    std::string s = "[";
    for (int i = 0; i < v.size(); ++i) {
      if (i) s += ", ";
      s += format_double(v(i));
    }
    return s + "]";
  };
  out << "{\n";
  out << "  \"space\": {\"n\": " << sc.space.n << ", \"m\": " << vec(sc.space.m) << "},\n";
  out << "  \"generator\": {\"Q\": [";
  for (int i = 0; i < sc.space.n; ++i) {
    if (i) out << ", ";
    out << vec(sc.generator.Q.row(i));
  }
  out << "]},\n";
  out << "  \"branching\": {\"beta\": " << vec(sc.branching.beta)
      << ", \"a\": " << vec(sc.branching.a) << ", \"b\": " << vec(sc.branching.b)
      << ", \"jump_atoms\": [";
  bool first = true;
  for (int i = 0; i < sc.space.n; ++i) {
    for (const auto& atom : sc.branching.jump_atoms[i]) {
      if (!first) out << ", ";
      first = false;
      out << "[" << (i + 1) << ", " << format_double(atom.y) << ", "
          << format_double(atom.rate) << "]";
    }
  }
  out << "]},\n";
  out << "  \"immigration\": {\"eta\": " << vec(sc.immigration.eta) << ", \"H_atoms\": [";
  for (std::size_t jx = 0; jx < sc.immigration.H_atoms.size(); ++jx) {
    if (jx) out << ", ";
    out << "{\"nu\": " << vec(sc.immigration.H_atoms[jx].nu)
        << ", \"rate\": " << format_double(sc.immigration.H_atoms[jx].rate) << "}";
  }
  out << "]},\n";
  out << "  \"initial\": {\"mu\": " << vec(sc.mu0) << "}\n";
  out << "}\n";
  return out.str();
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return scenario_from_json_text(buf.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void save_scenario(const Scenario& sc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scenario file: " + path);
  out << scenario_to_json_text(sc);
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace superclt

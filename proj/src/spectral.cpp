#include "superclt/spectral.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace superclt {

const char* to_string(FnClass c) {
  switch (c) {
    case FnClass::Cl: return "Cl";
    case FnClass::Cc: return "Cc";
    case FnClass::Cs: return "Cs";
    case FnClass::Mixed: return "mixed";
    case FnClass::Zero: return "zero";
  }
  return "?";
}

bool FunctionProfile::supported(int k) const {
  return coeffs[k].cwiseAbs().maxCoeff() > 0;
}

SpectralSystem build_spectral(const Scenario& sc) {
  const DerivedCoefficients d = derived_coefficients(sc);
  const int n = sc.space.n;

  SpectralSystem sys;
  sys.m = sc.space.m;
  sys.alpha = d.alpha;
  sys.A = d.A;
  sys.L = sc.generator.Q;
  sys.L.diagonal() += d.alpha;

  const Vec sqrt_m = sys.m.array().sqrt();
  Mat S = sqrt_m.asDiagonal() * sys.L * sqrt_m.cwiseInverse().asDiagonal();
  S = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("spectral decomposition did not converge");
  }

  // Eigen sorts the spectrum of S ascending; the decay exponents are the
  // negatives, so walk from the top down to get lambda increasing.
  std::vector<double> lam(n);
  Mat vecs(n, n);
  for (int i = 0; i < n; ++i) {
    lam[i] = -es.eigenvalues()(n - 1 - i);
    // m-orthonormal eigenfunction of L from the Euclidean eigenvector of S
    vecs.col(i) = es.eigenvectors().col(n - 1 - i).cwiseQuotient(sqrt_m);
  }

  // Pool numerically equal exponents into one group.
  int i = 0;
  while (i < n) {
    int j = i + 1;
    while (j < n &&
           lam[j] - lam[i] <= kEigenClusterTol * std::max(1.0, std::abs(lam[i]))) {
      ++j;
    }
    double pooled = 0.0;
    for (int k = i; k < j; ++k) pooled += lam[k];
    pooled /= (j - i);
    sys.lambda.push_back(pooled);
    sys.phi.push_back(vecs.middleCols(i, j - i));
    i = j;
  }

  if (sys.phi[0].cols() != 1) {
    throw std::runtime_error(
        "principal eigenvalue is not simple; the mean flow is reducible");
  }
  Vec p1 = sys.phi[0].col(0);
  int imax = 0;
  p1.cwiseAbs().maxCoeff(&imax);
  if (p1(imax) < 0) p1 = -p1;
  if ((p1.array() <= 0).any()) {
    throw std::runtime_error("principal eigenfunction not positive");
  }
  sys.phi[0].col(0) = p1;
  sys.phi1 = p1;

  // Orthonormality and completeness residuals; both are resolution-of-identity
  // checks in finite dimension and must hold to near machine precision.
  Mat full(n, n);
  int col = 0;
  for (const auto& block : sys.phi) {
    full.middleCols(col, block.cols()) = block;
    col += static_cast<int>(block.cols());
  }
  const Mat gram = full.transpose() * sys.m.asDiagonal() * full;
  const double ortho = (gram - Mat::Identity(n, n)).cwiseAbs().maxCoeff();
  const Mat resolution = full * full.transpose() * sys.m.asDiagonal();
  const double complete = (resolution - Mat::Identity(n, n)).cwiseAbs().maxCoeff();
  if (ortho > 1e-10 || complete > 1e-10) {
    throw std::runtime_error("eigenbasis residual exceeds 1e-10");
  }
  return sys;
}

Vec semigroup_apply(const SpectralSystem& sys, double t, const Vec& f) {
  if (t < 0) throw std::invalid_argument("semigroup time must be >= 0");
  const Vec mf = sys.m.asDiagonal() * f;
  Vec out = Vec::Zero(sys.n());
  for (int k = 0; k < sys.groups(); ++k) {
    const Vec a = sys.phi[k].transpose() * mf;
    out += std::exp(-sys.lambda[k] * t) * (sys.phi[k] * a);
  }
  return out;
}

Mat heat_kernel(const SpectralSystem& sys, double t) {
  if (!(t > 0)) throw std::invalid_argument("heat kernel needs t > 0");
  Mat q = Mat::Zero(sys.n(), sys.n());
  for (int k = 0; k < sys.groups(); ++k) {
    q += std::exp(-sys.lambda[k] * t) * (sys.phi[k] * sys.phi[k].transpose());
  }
  return q;
}

Vec heat_kernel_diag(const SpectralSystem& sys, double t) {
  if (!(t > 0)) throw std::invalid_argument("heat kernel needs t > 0");
  Vec a = Vec::Zero(sys.n());
  for (int k = 0; k < sys.groups(); ++k) {
    a += std::exp(-sys.lambda[k] * t) * sys.phi[k].rowwise().squaredNorm();
  }
  return a;
}

double heat_trace(const SpectralSystem& sys, double t) {
  double tr = 0.0;
  for (int k = 0; k < sys.groups(); ++k) {
    tr += sys.multiplicity(k) * std::exp(-sys.lambda[k] * t);
  }
  return tr;
}

FunctionProfile profile_function(const SpectralSystem& sys, const Vec& f) {
  if (f.size() != sys.n()) throw std::invalid_argument("function has wrong dimension");
  FunctionProfile p;
  p.f = f;
  const Vec mf = sys.m.asDiagonal() * f;
  const double norm_m = std::sqrt(sys.inner_m(f, f));
  const double coeff_tol = 1e-12 * std::max(1.0, norm_m);

  p.coeffs.resize(sys.groups());
  for (int k = 0; k < sys.groups(); ++k) {
    Vec a = sys.phi[k].transpose() * mf;
    // Suppress roundoff-level projections so that eigenfunction inputs land
    // in a single group.
    for (int j = 0; j < a.size(); ++j) {
      if (std::abs(a(j)) <= coeff_tol) a(j) = 0.0;
    }
    p.coeffs[k] = a;
  }

  int gamma0 = -1;  // 0-based leading group
  for (int k = 0; k < sys.groups() && gamma0 < 0; ++k) {
    if (p.supported(k)) gamma0 = k;
  }
  if (gamma0 < 0) {
    p.gamma = kGammaInfinity;
    p.f1 = Vec::Zero(sys.n());
    p.space_class = FnClass::Zero;
    return p;
  }
  p.gamma = gamma0 + 1;
  p.f1 = sys.phi[gamma0] * p.coeffs[gamma0];

  const double lam1 = sys.lambda[0];
  const double tol = kEigenClusterTol * std::max(1.0, std::abs(lam1));
  auto margin = [&](int k) { return 2.0 * sys.lambda[k] - lam1; };

  p.crit_margin = std::numeric_limits<double>::infinity();
  bool all_critical = true, all_below = true;
  for (int k = gamma0; k < sys.groups(); ++k) {
    if (!p.supported(k)) continue;
    const double mk = margin(k);
    p.crit_margin = std::min(p.crit_margin, std::abs(mk) / std::max(1.0, std::abs(lam1)));
    if (std::abs(mk) > tol) all_critical = false;
    if (mk >= -tol) all_below = false;
  }

  if (margin(gamma0) > tol) {
    p.space_class = FnClass::Cs;
  } else if (all_critical) {
    p.space_class = FnClass::Cc;
  } else if (all_below) {
    p.space_class = FnClass::Cl;
  } else {
    p.space_class = FnClass::Mixed;
  }
  return p;
}

Vec leading_flow(const SpectralSystem& sys, const FunctionProfile& g, double s) {
  if (g.space_class != FnClass::Cl) {
    throw std::invalid_argument("leading_flow requires a Cl-classified function");
  }
  if (s < 0) throw std::invalid_argument("flow time must be >= 0");
  Vec out = Vec::Zero(sys.n());
  for (int k = 0; k < sys.groups(); ++k) {
    if (!g.supported(k)) continue;
    out += std::exp(sys.lambda[k] * s) * (sys.phi[k] * g.coeffs[k]);
  }
  return out;
}

}  // namespace superclt

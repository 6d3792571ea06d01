// Scenario builders shared by the test binaries. These mirror the configs in
// scenarios/ plus a few extra shapes (jump atoms, Poisson immigration
// arrivals, noiseless flows) that only the tests need.
#pragma once

#include "superclt/model.hpp"

namespace canonical {

using superclt::Scenario;
using superclt::Vec;

// Single site: beta=1, a=0.5, b=0.5, eta=0.2, mu=1. Principal exponent -0.5.
inline Scenario s1() {
  Scenario sc;
  sc.space.n = 1;
  sc.space.m = Vec::Ones(1);
  sc.generator.Q = superclt::Mat::Zero(1, 1);
  sc.branching.beta = Vec::Ones(1);
  sc.branching.a = Vec::Constant(1, 0.5);
  sc.branching.b = Vec::Constant(1, 0.5);
  sc.branching.jump_atoms.assign(1, {});
  sc.immigration.eta = Vec::Constant(1, 0.2);
  sc.mu0 = Vec::Ones(1);
  return sc;
}

// Two symmetric sites with uniform drift a_hat: exponents are
// lambda = (-a_hat, 2 - a_hat). a_hat = 1, 4, 5 put the second mode on the
// subcritical, critical, and supercritical side of the 2*lambda_2 vs lambda_1
// comparison respectively.
inline Scenario s2(double a_hat) {
  Scenario sc;
  sc.space.n = 2;
  sc.space.m = Vec::Ones(2);
  sc.generator.Q = superclt::Mat(2, 2);
  sc.generator.Q << -1, 1, 1, -1;
  sc.branching.beta = Vec::Ones(2);
  sc.branching.a = Vec::Constant(2, a_hat);
  sc.branching.b = Vec::Constant(2, 0.5);
  sc.branching.jump_atoms.assign(2, {});
  sc.immigration.eta = Vec::Constant(2, 0.2);
  sc.mu0 = Vec::Zero(2);
  sc.mu0(0) = 1.0;
  return sc;
}

// Single site with a reproduction jump atom (y=0.5 at rate 0.8) next to a
// smaller diffusive part; A = 2*0.2 + 0.8*0.25 = 0.6.
inline Scenario s_jump() {
  Scenario sc;
  sc.space.n = 1;
  sc.space.m = Vec::Ones(1);
  sc.generator.Q = superclt::Mat::Zero(1, 1);
  sc.branching.beta = Vec::Ones(1);
  sc.branching.a = Vec::Constant(1, 0.3);
  sc.branching.b = Vec::Constant(1, 0.2);
  sc.branching.jump_atoms.assign(1, {});
  sc.branching.jump_atoms[0].push_back({0.5, 0.8});
  sc.immigration.eta = Vec::Constant(1, 0.1);
  sc.mu0 = Vec::Ones(1);
  return sc;
}

// s1 plus a Poisson stream of point-mass arrivals: nu = 0.3 at rate 0.5.
inline Scenario s_arrivals() {
  Scenario sc = s1();
  superclt::ImmigrationAtom atom;
  atom.nu = Vec::Constant(1, 0.3);
  atom.rate = 0.5;
  sc.immigration.H_atoms.push_back(atom);
  return sc;
}

// Noiseless flow: b=0, no jumps, no immigration. Y_t follows the mean
// semigroup exactly, so every Monte Carlo statistic is deterministic and all
// limit variances are 0. Two sites with a_hat as in s2().
inline Scenario noiseless(double a_hat) {
  Scenario sc = s2(a_hat);
  sc.branching.b = Vec::Zero(2);
  sc.immigration.eta = Vec::Zero(2);
  return sc;
}

inline Scenario noiseless1() {
  Scenario sc = s1();
  sc.branching.b = Vec::Zero(1);
  sc.immigration.eta = Vec::Zero(1);
  return sc;
}

}  // namespace canonical

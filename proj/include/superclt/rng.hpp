#pragma once

#include <cstdint>
#include <random>

namespace superclt {

std::uint64_t splitmix64(std::uint64_t& state);

// Per-replicate random stream. Streams are derived counter-style from
// (master_seed, replicate_index), so an ensemble is a pure function of the
// master seed and the set of indices, independent of thread scheduling.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t index);

  double uniform();  // (0, 1)
  double normal();   // standard normal

  // Poisson count for small/moderate mean. Means above 2^62 are a usage
  // error (use poisson_centered for large rates).
  std::int64_t poisson(double mean);

  // N - mean for N ~ Poisson(mean), as a double. Above `kNormalCutoff` the
  // count is not representable cheaply and the centered value is drawn from
  // the matching normal; mean and variance are exact, higher cumulants are
  // off by O(mean^{-1/2}) which is far below Monte Carlo resolution there.
  double poisson_centered(double mean);

  // Gamma(shape, scale) with integer shape; returns 0 for shape == 0.
  double gamma_int(std::int64_t shape, double scale);

  std::mt19937_64& engine() { return engine_; }

  static constexpr double kNormalCutoff = 1e9;

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

inline RngStream seed_stream(std::uint64_t master_seed, std::uint64_t index) {
  return RngStream(master_seed, index);
}

}  // namespace superclt

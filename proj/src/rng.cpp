#include "superclt/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace superclt {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t index) {
  // Counter-based derivation: hash (master, index) into a full 312-word
  // seed sequence so streams for different indices are decorrelated from
  // the first draw.
  std::uint64_t s = master_seed ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s) >> 32),
                    static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s) >> 32),
                    static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s) >> 32),
                    static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s) >> 32)};
  engine_.seed(seq);
}

double RngStream::uniform() {
  // 53-bit mantissa in (0, 1); never returns 0, which keeps logs and
  // inverse transforms safe.
  const std::uint64_t bits = engine_() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() { return normal_(engine_); }

std::int64_t RngStream::poisson(double mean) {
  if (mean < 0 || !std::isfinite(mean)) {
    throw std::invalid_argument("poisson mean must be finite and nonnegative");
  }
  if (mean == 0.0) return 0;
  if (mean >= 4.6e18) {
    throw std::invalid_argument("poisson mean too large for a count");
  }
  std::poisson_distribution<std::int64_t> dist(mean);
  return dist(engine_);
}

double RngStream::poisson_centered(double mean) {
  if (mean < 0 || !std::isfinite(mean)) {
    throw std::invalid_argument("poisson mean must be finite and nonnegative");
  }
  if (mean == 0.0) return 0.0;
  if (mean > kNormalCutoff) return std::sqrt(mean) * normal();
  return static_cast<double>(poisson(mean)) - mean;
}

double RngStream::gamma_int(std::int64_t shape, double scale) {
  if (shape < 0) throw std::invalid_argument("gamma shape must be >= 0");
  if (shape == 0) return 0.0;
  std::gamma_distribution<double> dist(static_cast<double>(shape), scale);
  return dist(engine_);
}

}  // namespace superclt

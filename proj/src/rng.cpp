#include "mlpfuse/rng.hpp"

#include <cmath>
#include <numbers>

namespace mlpfuse {

double Rng::next_normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = next_uniform();
  while (u1 <= 0.0) u1 = next_uniform();
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t Rng::next_below(std::uint64_t n) {
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

Matrix seeded_gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed,
                       double std) {
  require(std > 0.0, "seeded_gaussian: std must be positive");
  Rng rng(seed);
  Matrix out(rows, cols);
  for (double& v : out.data) v = std * rng.next_normal();
  return out;
}

}  // namespace mlpfuse

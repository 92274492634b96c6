#pragma once

#include <cstdint>

#include "mlpfuse/matrix.hpp"

namespace mlpfuse {

// splitmix64 stream (Steele, Lea, Vigna). Fully specified here so that seeded
// draws are identical on every platform; all golden fixtures can be
// regenerated with `mlpfuse gen-fixture`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; pairs are cached.
  double next_normal();

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n);

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Deterministic matrix of i.i.d. Normal(0, std²) entries, row-major fill order.
Matrix seeded_gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed,
                       double std);

}  // namespace mlpfuse

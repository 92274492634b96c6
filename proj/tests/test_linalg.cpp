#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mlpfuse/rng.hpp"
#include "mlpfuse/svd.hpp"

using namespace mlpfuse;

namespace {

// Independent oracle: eigenvalues of the symmetric matrix AᵀA via classic
// two-sided Jacobi rotations. Only shares "Jacobi" in name with the
// implementation; this one diagonalizes the Gram matrix directly.
std::vector<double> singular_values_oracle(const Matrix& a) {
  Matrix g = matmul(transpose(a), a);
  const std::size_t n = g.rows;
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += g(p, q) * g(p, q);
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(g(p, q)) < 1e-300) continue;
        const double theta = 0.5 * std::atan2(2.0 * g(p, q), g(q, q) - g(p, p));
        const double c = std::cos(theta), s = std::sin(theta);
        for (std::size_t i = 0; i < n; ++i) {
          const double gip = g(i, p), giq = g(i, q);
          g(i, p) = c * gip - s * giq;
          g(i, q) = s * gip + c * giq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double gpi = g(p, i), gqi = g(q, i);
          g(p, i) = c * gpi - s * gqi;
          g(q, i) = s * gpi + c * gqi;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = std::sqrt(std::max(0.0, g(i, i)));
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

double reconstruction_error(const Matrix& a, std::size_t t) {
  return frob_distance(a, svd_reconstruct(truncated_svd(a, t)));
}

}  // namespace

TEST_CASE("frob_distance basics") {
  Matrix a(2, 2);
  a(0, 0) = 1.0; a(0, 1) = -2.0; a(1, 0) = 0.5; a(1, 1) = 4.0;
  CHECK(frob_distance(a, a) == 0.0);

  Matrix x(1, 1), y(1, 1);
  x(0, 0) = 1.0;
  y(0, 0) = 3.0;
  CHECK(frob_distance(x, y) == doctest::Approx(2.0));

  Matrix b = seeded_gaussian(4, 4, 7, 1.0);
  Matrix c = seeded_gaussian(4, 4, 8, 1.0);
  double oracle = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const double d = b(i, j) - c(i, j);
      oracle += d * d;
    }
  CHECK(frob_distance(b, c) == doctest::Approx(std::sqrt(oracle)).epsilon(1e-12));

  Matrix wrong(3, 4);
  CHECK_THROWS_AS(frob_distance(b, wrong), std::invalid_argument);
}

TEST_CASE("seeded_gaussian determinism and moments") {
  const Matrix a = seeded_gaussian(5, 7, 42, 2.0);
  const Matrix b = seeded_gaussian(5, 7, 42, 2.0);
  CHECK(a.data == b.data);  // bitwise

  const Matrix c = seeded_gaussian(5, 7, 43, 2.0);
  CHECK(a.data != c.data);

  const Matrix big = seeded_gaussian(100, 100, 1, 1.0);
  double mean = 0.0;
  for (double v : big.data) mean += v;
  mean /= 10000.0;
  double var = 0.0;
  for (double v : big.data) var += (v - mean) * (v - mean);
  var /= 10000.0;
  CHECK(mean > -0.05);
  CHECK(mean < 0.05);
  CHECK(var > 0.94);
  CHECK(var < 1.06);

  CHECK_THROWS_AS(seeded_gaussian(2, 2, 0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(seeded_gaussian(2, 2, 0, -1.0), std::invalid_argument);
}

TEST_CASE("truncated_svd diagonal case") {
  Matrix a(3, 3);
  a(0, 0) = 3.0; a(1, 1) = 2.0; a(2, 2) = 1.0;
  const SvdFactors f = truncated_svd(a, 2);
  CHECK(f.s[0] == doctest::Approx(3.0));
  CHECK(f.s[1] == doctest::Approx(2.0));
  CHECK(reconstruction_error(a, 2) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("truncated_svd exact rank-1") {
  Matrix u(4, 1), v(3, 1);
  Rng rng(3);
  for (double& x : u.data) x = rng.next_normal();
  for (double& x : v.data) x = rng.next_normal();
  const Matrix a = matmul(u, transpose(v));
  CHECK(reconstruction_error(a, 1) < 1e-10);
}

TEST_CASE("truncated_svd matches Gram eigen-decomposition oracle") {
  const Matrix a = seeded_gaussian(8, 6, 11, 1.0);
  const std::vector<double> sv = singular_values_oracle(a);
  const double expected = std::sqrt(sv[3] * sv[3] + sv[4] * sv[4] + sv[5] * sv[5]);
  CHECK(reconstruction_error(a, 3) ==
        doctest::Approx(expected).epsilon(1e-8));

  // Singular values agree with the oracle too.
  const SvdFactors f = truncated_svd(a, 6);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(f.s[i] == doctest::Approx(sv[i]).epsilon(1e-9));
}

TEST_CASE("truncated_svd factor orthonormality") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const Matrix a = seeded_gaussian(6, 9, seed, 1.0);
    const SvdFactors f = truncated_svd(a, 4);
    const Matrix utu = matmul(transpose(f.u), f.u);
    const Matrix vtv = matmul(transpose(f.v), f.v);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        const double expect = i == j ? 1.0 : 0.0;
        CHECK(utu(i, j) == doctest::Approx(expect).epsilon(1e-9));
        CHECK(vtv(i, j) == doctest::Approx(expect).epsilon(1e-9));
      }
    }
    CHECK(std::is_sorted(f.s.rbegin(), f.s.rend()));
  }
}

TEST_CASE("truncated_svd full rank reconstructs; error monotone in t") {
  const Matrix a = seeded_gaussian(7, 5, 21, 1.0);
  CHECK(reconstruction_error(a, 5) < 1e-8 * frob_norm(a));
  double prev = reconstruction_error(a, 1);
  for (std::size_t t = 2; t <= 5; ++t) {
    const double cur = reconstruction_error(a, t);
    CHECK(cur <= prev + 1e-12);
    prev = cur;
  }
}

TEST_CASE("truncated_svd rejects t out of range") {
  const Matrix a = seeded_gaussian(4, 3, 5, 1.0);
  CHECK_THROWS_AS(truncated_svd(a, 0), std::invalid_argument);
  CHECK_THROWS_AS(truncated_svd(a, 4), std::invalid_argument);
}

TEST_CASE("spectral_norm equals top singular value") {
  const Matrix a = seeded_gaussian(5, 5, 9, 1.0);
  CHECK(spectral_norm(a) ==
        doctest::Approx(singular_values_oracle(a)[0]).epsilon(1e-9));
}

#include "mlpfuse/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mlpfuse {

namespace {

// Orthonormal completion for (near) zero singular directions: pick the basis
// vector least represented by the existing columns and Gram-Schmidt it.
void fill_orthonormal_column(Matrix& u, std::size_t col) {
  const std::size_t m = u.rows;
  for (std::size_t attempt = 0; attempt < m; ++attempt) {
    Vector cand(m, 0.0);
    cand[attempt] = 1.0;
    for (std::size_t j = 0; j < u.cols; ++j) {
      if (j == col) continue;
      double proj = 0.0;
      for (std::size_t i = 0; i < m; ++i) proj += cand[i] * u(i, j);
      for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * u(i, j);
    }
    double norm = 0.0;
    for (double v : cand) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 1e-6) {
      for (std::size_t i = 0; i < m; ++i) u(i, col) = cand[i] / norm;
      return;
    }
  }
  throw NumericFailure("truncated_svd: failed to complete orthonormal basis");
}

}  // namespace

SvdFactors truncated_svd(const Matrix& a, std::size_t t) {
  require(a.rows >= 1 && a.cols >= 1, "truncated_svd: empty matrix");
  const std::size_t rank_cap = std::min(a.rows, a.cols);
  require(t >= 1 && t <= rank_cap, "truncated_svd: t out of range");
  require(all_finite(a), "truncated_svd: non-finite input");

  // Work on the orientation with fewer columns; swap U/V back at the end.
  const bool transposed = a.cols > a.rows;
  Matrix b = transposed ? transpose(a) : a;
  const std::size_t n = b.cols;

  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  const double scale = frob_norm(b);
  const double tol = 1e-14;
  const int max_sweeps = 100;
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < b.rows; ++i) {
          const double bip = b(i, p), biq = b(i, q);
          alpha += bip * bip;
          beta += biq * biq;
          gamma += bip * biq;
        }
        if (std::abs(gamma) <= tol * scale * scale) continue;
        if (std::abs(gamma) <= 1e-30) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double tau =
            (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + tau * tau);
        const double s = c * tau;
        for (std::size_t i = 0; i < b.rows; ++i) {
          const double bip = b(i, p), biq = b(i, q);
          b(i, p) = c * bip - s * biq;
          b(i, q) = s * bip + c * biq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
    if (!rotated) break;
  }
  if (sweep == max_sweeps) {
    throw NumericFailure("truncated_svd: Jacobi sweeps did not converge after " +
                         std::to_string(max_sweeps) + " iterations");
  }

  Vector sigma(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < b.rows; ++i) s += b(i, j) * b(i, j);
    sigma[j] = std::sqrt(s);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  Matrix u_full(b.rows, t);
  Matrix v_out(n, t);
  Vector s_out(t, 0.0);
  const double tiny = 1e-300;
  for (std::size_t j = 0; j < t; ++j) {
    const std::size_t src = order[j];
    s_out[j] = sigma[src];
    for (std::size_t i = 0; i < n; ++i) v_out(i, j) = v(i, src);
    if (sigma[src] > tiny && sigma[src] > 1e-13 * scale) {
      for (std::size_t i = 0; i < b.rows; ++i) u_full(i, j) = b(i, src) / sigma[src];
    } else {
      s_out[j] = sigma[src];
      fill_orthonormal_column(u_full, j);
    }
  }

  SvdFactors f;
  if (transposed) {
    f.u = std::move(v_out);
    f.v = std::move(u_full);
  } else {
    f.u = std::move(u_full);
    f.v = std::move(v_out);
  }
  f.s = std::move(s_out);
  return f;
}

double spectral_norm(const Matrix& a) {
  if (frob_norm(a) == 0.0) return 0.0;
  return truncated_svd(a, 1).s[0];
}

Matrix svd_reconstruct(const SvdFactors& f) {
  return matmul(scale_cols(f.u, f.s), transpose(f.v));
}

}  // namespace mlpfuse

#pragma once

#include "mlpfuse/matrix.hpp"

namespace mlpfuse {

// Rank-t factorization A ≈ U diag(S) Vᵀ with U (m×t), V (n×t) orthonormal
// columns and S descending.
struct SvdFactors {
  Matrix u;
  Vector s;
  Matrix v;
};

// Best rank-t approximation in Frobenius norm, via one-sided Jacobi applied on
// the side with fewer columns. Throws NumericFailure if the sweeps do not
// converge.
SvdFactors truncated_svd(const Matrix& a, std::size_t t);

// Largest singular value.
double spectral_norm(const Matrix& a);

// U diag(S) Vᵀ materialized.
Matrix svd_reconstruct(const SvdFactors& f);

}  // namespace mlpfuse

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlpfuse {

// Thrown when an iterative routine fails to converge or a loss goes non-finite.
struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a compressor requires a positively homogeneous activation and
// the model uses something else.
struct UnsupportedActivation : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. The only data carrier in the library.
struct Matrix {
  std::size_t rows{0};
  std::size_t cols{0};
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return data.size(); }
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

// A + 1 bᵀ (broadcast a row vector over every row).
Matrix add_row_broadcast(const Matrix& a, const Vector& b);
// A · diag(d)
Matrix scale_cols(const Matrix& a, const Vector& d);
// diag(d) · A
Matrix scale_rows(const Matrix& a, const Vector& d);

// Aᵀ · 1 (column sums).
Vector col_sums(const Matrix& a);
Vector col_means(const Matrix& a);

double frob_norm(const Matrix& a);
double frob_distance(const Matrix& a, const Matrix& b);

double dot(const Vector& a, const Vector& b);
bool all_finite(const Matrix& a);

void require(bool cond, const std::string& what);

}  // namespace mlpfuse

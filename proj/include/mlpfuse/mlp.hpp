#pragma once

#include <cstdint>
#include <string>

#include "mlpfuse/matrix.hpp"

namespace mlpfuse {

enum class ActKind { Relu, GeluExact, GeluTanh };

std::string act_name(ActKind k);
ActKind act_from_name(const std::string& name);

// Element-wise activation with derivative. relu derivative at the kink is 0.
struct Activation {
  ActKind kind{ActKind::Relu};

  double value(double x) const;
  double deriv(double x) const;
  Matrix value(const Matrix& m) const;
  Matrix deriv(const Matrix& m) const;

  // σ(c·x) = c·σ(x) for c ≥ 0; holds for relu only.
  bool positively_homogeneous() const { return kind == ActKind::Relu; }
};

// Upper bound on |σ′| used by the output-error bound. relu: 1. For exact GELU
// the maximum of Φ(x)+xφ(x) sits at x = √2; the grid oracle in the test suite
// rederives it. gelu_tanh stays below the same constant.
inline constexpr double kReluLipschitz = 1.0;
inline constexpr double kGeluLipschitz = 1.1290;

double activation_lipschitz(ActKind k);

// Two-layer feed-forward block: H = σ(X W1 + 1 b1ᵀ) W2 + 1 b2ᵀ.
struct MlpWeights {
  Matrix w1;  // p × p_I
  Vector b1;  // p_I
  Matrix w2;  // p_I × p
  Vector b2;  // p
  Activation act;

  std::size_t p() const { return w1.rows; }
  std::size_t p_inner() const { return w1.cols; }
  void validate() const;
};

// Fixed readout making the network scalar: f(X) = rᵀ · mean-over-rows(H).
struct ScalarHead {
  Vector r;
};

struct GradBundle {
  Matrix dw1;
  Vector db1;
  Matrix dw2;
  Vector db2;
};

struct HeadEval {
  double value;
  Matrix upstream;  // ∇_H f = (1/n)·1·rᵀ
};

Matrix forward(const MlpWeights& mlp, const Matrix& x);

HeadEval head_value_and_upstream(const MlpWeights& mlp, const ScalarHead& head,
                                 const Matrix& x);

// Head value/upstream for an already-computed layer output H.
HeadEval head_from_output(const ScalarHead& head, const Matrix& h);

// Analytic gradients of the scalar network w.r.t. the four parameter groups,
// given the upstream gradient G = ∇_H f:
//   dW2 = σᵀG,  db2 = Gᵀ1,  dW1 = Xᵀ[(G W2ᵀ)⊙σ′],  db1 = [(G W2ᵀ)⊙σ′]ᵀ1.
GradBundle mlp_gradients(const MlpWeights& mlp, const Matrix& x, const Matrix& g);

// Row i = [column i of W1; b1[i]; row i of W2]; shape p_I × (2p+1).
Matrix sub_mlp_embeddings(const MlpWeights& mlp);

// Inverse of sub_mlp_embeddings: rebuild (W1, b1, W2) from an embedding matrix
// with k rows; b2 and activation supplied by the caller.
MlpWeights weights_from_embeddings(const Matrix& emb, std::size_t p,
                                   const Vector& b2, Activation act);

struct FlopsEstimate {
  std::uint64_t attn;
  std::uint64_t ffn;
};

// attn = 4np² + 2n²p, ffn = 2·n·p·(4p) = 8np²; biases/softmax/layernorm ignored.
FlopsEstimate flops_estimate(std::uint64_t n, std::uint64_t p, std::uint64_t h);

}  // namespace mlpfuse

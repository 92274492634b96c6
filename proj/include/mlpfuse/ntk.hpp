#pragma once

#include "mlpfuse/compress.hpp"
#include "mlpfuse/mlp.hpp"

namespace mlpfuse {

// Per-parameter-group NTK contributions.
struct NtkTerms {
  double w2_term{0.0};
  double b2_term{0.0};
  double w1_term{0.0};
  double b1_term{0.0};
  double total{0.0};
};

enum class KernelKind { Sgd, Adam };

struct KernelMatrix {
  Matrix entries;  // m × m
  KernelKind kind{KernelKind::Sgd};
};

// ⟨g_x, g_z⟩ per group (sgd) or ⟨g_x, sign(g_z)⟩ (adam, sign(0)=0).
NtkTerms ntk_terms(const GradBundle& gx, const GradBundle& gz, KernelKind kind);

// Teacher kernels: gradients of f = head∘forward w.r.t. the MLP parameters
// only (the readout is fixed).
NtkTerms sgd_ntk(const MlpWeights& mlp, const ScalarHead& head, const Matrix& x,
                 const Matrix& z);
NtkTerms adam_ntk(const MlpWeights& mlp, const ScalarHead& head, const Matrix& x,
                  const Matrix& z);

// Compressed-model kernels over the compressed model's own parameters; the
// upstream gradient is computed through the compressed model itself.
NtkTerms sgd_ntk(const CompressedMlp& comp, const ScalarHead& head,
                 const Matrix& x, const Matrix& z);
NtkTerms adam_ntk(const CompressedMlp& comp, const ScalarHead& head,
                  const Matrix& x, const Matrix& z);

GradBundle grad_bundle(const MlpWeights& mlp, const ScalarHead& head,
                       const Matrix& x);
GradBundle grad_bundle(const CompressedMlp& comp, const ScalarHead& head,
                       const Matrix& x);

KernelMatrix kernel_matrix(const MlpWeights& mlp, const ScalarHead& head,
                           const std::vector<Matrix>& inputs, KernelKind kind);
KernelMatrix kernel_matrix(const CompressedMlp& comp, const ScalarHead& head,
                           const std::vector<Matrix>& inputs, KernelKind kind);

// ‖K_orig − K_comp‖_F.
double ntk_error(const KernelMatrix& k_orig, const KernelMatrix& k_comp);

// Mean over inputs of ‖forward(mlp, X_i) − forward_compressed(comp, X_i)‖_F.
double output_error(const MlpWeights& mlp, const CompressedMlp& comp,
                    const std::vector<Matrix>& inputs);

}  // namespace mlpfuse

#include "mlpfuse/ntk.hpp"

#include <cmath>

namespace mlpfuse {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double pair_term(const Matrix& a, const Matrix& b, KernelKind kind) {
  require(a.rows == b.rows && a.cols == b.cols, "ntk_terms: shape mismatch");
  double s = 0.0;
  if (kind == KernelKind::Sgd) {
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  } else {
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * sign(b.data[i]);
  }
  return s;
}

double pair_term(const Vector& a, const Vector& b, KernelKind kind) {
  require(a.size() == b.size(), "ntk_terms: length mismatch");
  double s = 0.0;
  if (kind == KernelKind::Sgd) {
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  } else {
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * sign(b[i]);
  }
  return s;
}

}  // namespace

NtkTerms ntk_terms(const GradBundle& gx, const GradBundle& gz, KernelKind kind) {
  NtkTerms t;
  t.w2_term = pair_term(gx.dw2, gz.dw2, kind);
  t.b2_term = pair_term(gx.db2, gz.db2, kind);
  t.w1_term = pair_term(gx.dw1, gz.dw1, kind);
  t.b1_term = pair_term(gx.db1, gz.db1, kind);
  t.total = t.w2_term + t.b2_term + t.w1_term + t.b1_term;
  return t;
}

GradBundle grad_bundle(const MlpWeights& mlp, const ScalarHead& head,
                       const Matrix& x) {
  const HeadEval he = head_value_and_upstream(mlp, head, x);
  return mlp_gradients(mlp, x, he.upstream);
}

GradBundle grad_bundle(const CompressedMlp& comp, const ScalarHead& head,
                       const Matrix& x) {
  const HeadEval he = head_from_output(head, forward_compressed(comp, x));
  return compressed_grad_bundle(comp, x, he.upstream);
}

NtkTerms sgd_ntk(const MlpWeights& mlp, const ScalarHead& head, const Matrix& x,
                 const Matrix& z) {
  return ntk_terms(grad_bundle(mlp, head, x), grad_bundle(mlp, head, z),
                   KernelKind::Sgd);
}

NtkTerms adam_ntk(const MlpWeights& mlp, const ScalarHead& head, const Matrix& x,
                  const Matrix& z) {
  return ntk_terms(grad_bundle(mlp, head, x), grad_bundle(mlp, head, z),
                   KernelKind::Adam);
}

NtkTerms sgd_ntk(const CompressedMlp& comp, const ScalarHead& head,
                 const Matrix& x, const Matrix& z) {
  return ntk_terms(grad_bundle(comp, head, x), grad_bundle(comp, head, z),
                   KernelKind::Sgd);
}

NtkTerms adam_ntk(const CompressedMlp& comp, const ScalarHead& head,
                  const Matrix& x, const Matrix& z) {
  return ntk_terms(grad_bundle(comp, head, x), grad_bundle(comp, head, z),
                   KernelKind::Adam);
}

namespace {

template <typename Model>
KernelMatrix kernel_matrix_impl(const Model& model, const ScalarHead& head,
                                const std::vector<Matrix>& inputs,
                                KernelKind kind) {
  require(!inputs.empty(), "kernel_matrix: empty input list");
  const std::size_t m = inputs.size();
  std::vector<GradBundle> bundles;
  bundles.reserve(m);
  for (const Matrix& x : inputs) bundles.push_back(grad_bundle(model, head, x));

  KernelMatrix out;
  out.kind = kind;
  out.entries = Matrix(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      out.entries(i, j) = ntk_terms(bundles[i], bundles[j], kind).total;
  return out;
}

}  // namespace

KernelMatrix kernel_matrix(const MlpWeights& mlp, const ScalarHead& head,
                           const std::vector<Matrix>& inputs, KernelKind kind) {
  return kernel_matrix_impl(mlp, head, inputs, kind);
}

KernelMatrix kernel_matrix(const CompressedMlp& comp, const ScalarHead& head,
                           const std::vector<Matrix>& inputs, KernelKind kind) {
  return kernel_matrix_impl(comp, head, inputs, kind);
}

double ntk_error(const KernelMatrix& k_orig, const KernelMatrix& k_comp) {
  require(k_orig.kind == k_comp.kind, "ntk_error: kernel kind mismatch");
  return frob_distance(k_orig.entries, k_comp.entries);
}

double output_error(const MlpWeights& mlp, const CompressedMlp& comp,
                    const std::vector<Matrix>& inputs) {
  require(!inputs.empty(), "output_error: empty input list");
  double acc = 0.0;
  for (const Matrix& x : inputs)
    acc += frob_distance(forward(mlp, x), forward_compressed(comp, x));
  return acc / static_cast<double>(inputs.size());
}

}  // namespace mlpfuse

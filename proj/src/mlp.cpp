#include "mlpfuse/mlp.hpp"

#include <cmath>
#include <numbers>

namespace mlpfuse {

std::string act_name(ActKind k) {
  switch (k) {
    case ActKind::Relu: return "relu";
    case ActKind::GeluExact: return "gelu_exact";
    case ActKind::GeluTanh: return "gelu_tanh";
  }
  return "unknown";
}

ActKind act_from_name(const std::string& name) {
  if (name == "relu") return ActKind::Relu;
  if (name == "gelu_exact") return ActKind::GeluExact;
  if (name == "gelu_tanh") return ActKind::GeluTanh;
  throw std::invalid_argument("unknown activation: " + name);
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

constexpr double kTanhGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kTanhGeluA = 0.044715;

}  // namespace

double Activation::value(double x) const {
  switch (kind) {
    case ActKind::Relu:
      return x > 0.0 ? x : 0.0;
    case ActKind::GeluExact:
      return x * normal_cdf(x);
    case ActKind::GeluTanh: {
      const double inner = kTanhGeluC * (x + kTanhGeluA * x * x * x);
      return 0.5 * x * (1.0 + std::tanh(inner));
    }
  }
  return 0.0;
}

double Activation::deriv(double x) const {
  switch (kind) {
    case ActKind::Relu:
      return x > 0.0 ? 1.0 : 0.0;
    case ActKind::GeluExact:
      return normal_cdf(x) + x * normal_pdf(x);
    case ActKind::GeluTanh: {
      const double inner = kTanhGeluC * (x + kTanhGeluA * x * x * x);
      const double th = std::tanh(inner);
      const double sech2 = 1.0 - th * th;
      return 0.5 * (1.0 + th) +
             0.5 * x * sech2 * kTanhGeluC * (1.0 + 3.0 * kTanhGeluA * x * x);
    }
  }
  return 0.0;
}

Matrix Activation::value(const Matrix& m) const {
  Matrix out = m;
  for (double& v : out.data) v = value(v);
  return out;
}

Matrix Activation::deriv(const Matrix& m) const {
  Matrix out = m;
  for (double& v : out.data) v = deriv(v);
  return out;
}

double activation_lipschitz(ActKind k) {
  return k == ActKind::Relu ? kReluLipschitz : kGeluLipschitz;
}

void MlpWeights::validate() const {
  require(w1.rows >= 1 && w1.cols >= 1, "MlpWeights: empty weights");
  require(b1.size() == w1.cols, "MlpWeights: b1 length != p_I");
  require(w2.rows == w1.cols && w2.cols == w1.rows, "MlpWeights: W2 shape");
  require(b2.size() == w1.rows, "MlpWeights: b2 length != p");
  require(all_finite(w1) && all_finite(w2), "MlpWeights: non-finite weights");
}

Matrix forward(const MlpWeights& mlp, const Matrix& x) {
  require(x.cols == mlp.p(), "forward: input column count != p");
  const Matrix pre = add_row_broadcast(matmul(x, mlp.w1), mlp.b1);
  return add_row_broadcast(matmul(mlp.act.value(pre), mlp.w2), mlp.b2);
}

HeadEval head_from_output(const ScalarHead& head, const Matrix& h) {
  require(head.r.size() == h.cols, "head: readout length != p");
  const Vector means = col_means(h);
  HeadEval out;
  out.value = dot(head.r, means);
  out.upstream = Matrix(h.rows, h.cols);
  const double inv_n = 1.0 / static_cast<double>(h.rows);
  for (std::size_t i = 0; i < h.rows; ++i)
    for (std::size_t j = 0; j < h.cols; ++j) out.upstream(i, j) = head.r[j] * inv_n;
  return out;
}

HeadEval head_value_and_upstream(const MlpWeights& mlp, const ScalarHead& head,
                                 const Matrix& x) {
  return head_from_output(head, forward(mlp, x));
}

GradBundle mlp_gradients(const MlpWeights& mlp, const Matrix& x, const Matrix& g) {
  require(x.cols == mlp.p(), "mlp_gradients: input column count != p");
  require(g.rows == x.rows && g.cols == mlp.p(), "mlp_gradients: upstream shape");
  const Matrix pre = add_row_broadcast(matmul(x, mlp.w1), mlp.b1);
  const Matrix sig = mlp.act.value(pre);
  const Matrix sig_prime = mlp.act.deriv(pre);
  const Matrix inner = hadamard(matmul(g, transpose(mlp.w2)), sig_prime);

  GradBundle out;
  out.dw2 = matmul(transpose(sig), g);
  out.db2 = col_sums(g);
  out.dw1 = matmul(transpose(x), inner);
  out.db1 = col_sums(inner);
  return out;
}

Matrix sub_mlp_embeddings(const MlpWeights& mlp) {
  const std::size_t p = mlp.p(), pi = mlp.p_inner();
  Matrix emb(pi, 2 * p + 1);
  for (std::size_t i = 0; i < pi; ++i) {
    for (std::size_t j = 0; j < p; ++j) emb(i, j) = mlp.w1(j, i);
    emb(i, p) = mlp.b1[i];
    for (std::size_t j = 0; j < p; ++j) emb(i, p + 1 + j) = mlp.w2(i, j);
  }
  return emb;
}

MlpWeights weights_from_embeddings(const Matrix& emb, std::size_t p,
                                   const Vector& b2, Activation act) {
  require(emb.cols == 2 * p + 1, "weights_from_embeddings: column count != 2p+1");
  const std::size_t k = emb.rows;
  MlpWeights mlp;
  mlp.w1 = Matrix(p, k);
  mlp.b1 = Vector(k);
  mlp.w2 = Matrix(k, p);
  mlp.b2 = b2;
  mlp.act = act;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < p; ++j) mlp.w1(j, i) = emb(i, j);
    mlp.b1[i] = emb(i, p);
    for (std::size_t j = 0; j < p; ++j) mlp.w2(i, j) = emb(i, p + 1 + j);
  }
  return mlp;
}

FlopsEstimate flops_estimate(std::uint64_t n, std::uint64_t p, std::uint64_t h) {
  require(n >= 1 && p >= 1 && h >= 1, "flops_estimate: arguments must be >= 1");
  require(p % h == 0, "flops_estimate: h must divide p");
  FlopsEstimate out;
  out.attn = 4 * n * p * p + 2 * n * n * p;
  out.ffn = 8 * n * p * p;
  return out;
}

}  // namespace mlpfuse

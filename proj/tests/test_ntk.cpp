#include <doctest.h>

#include <cmath>

#include "mlpfuse/ntk.hpp"
#include "mlpfuse/rng.hpp"
#include "mlpfuse/svd.hpp"

using namespace mlpfuse;

namespace {

MlpWeights random_mlp(std::size_t p, std::size_t p_inner, std::uint64_t seed,
                      ActKind kind) {
  Rng rng(seed);
  MlpWeights m;
  m.w1 = Matrix(p, p_inner);
  m.b1 = Vector(p_inner);
  m.w2 = Matrix(p_inner, p);
  m.b2 = Vector(p);
  m.act = Activation{kind};
  for (double& x : m.w1.data) x = rng.next_normal();
  for (double& x : m.b1) x = rng.next_normal();
  for (double& x : m.w2.data) x = rng.next_normal();
  for (double& x : m.b2) x = rng.next_normal();
  return m;
}

ScalarHead random_head(std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  ScalarHead head;
  head.r.resize(p);
  for (double& x : head.r) x = rng.next_normal();
  return head;
}

std::vector<double> flatten(const GradBundle& g) {
  std::vector<double> out;
  out.insert(out.end(), g.dw1.data.begin(), g.dw1.data.end());
  out.insert(out.end(), g.db1.begin(), g.db1.end());
  out.insert(out.end(), g.dw2.data.begin(), g.dw2.data.end());
  out.insert(out.end(), g.db2.begin(), g.db2.end());
  return out;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

TEST_CASE("ntk_terms hand example") {
  GradBundle gx, gz;
  gx.dw1 = Matrix(1, 2);
  gx.dw1(0, 0) = 1.0;
  gx.dw1(0, 1) = -2.0;
  gz.dw1 = Matrix(1, 2);
  gz.dw1(0, 0) = 3.0;
  gz.dw1(0, 1) = -0.5;
  gx.dw2 = Matrix(0, 0);
  gz.dw2 = Matrix(0, 0);

  // sgd: 1·3 + (−2)(−0.5) = 4; adam: 1·1 + (−2)(−1) = 3.
  CHECK(ntk_terms(gx, gz, KernelKind::Sgd).w1_term == doctest::Approx(4.0));
  CHECK(ntk_terms(gx, gz, KernelKind::Adam).w1_term == doctest::Approx(3.0));

  // sign(0) = 0: zeroing one side of the adam argument drops that product.
  gz.dw1(0, 1) = 0.0;
  CHECK(ntk_terms(gx, gz, KernelKind::Adam).w1_term == doctest::Approx(1.0));
}

TEST_CASE("teacher kernels match flatten-and-dot oracle") {
  const MlpWeights m = random_mlp(3, 6, 50, ActKind::GeluExact);
  const ScalarHead head = random_head(3, 51);
  const Matrix x = seeded_gaussian(4, 3, 52, 1.0);
  const Matrix z = seeded_gaussian(4, 3, 53, 1.0);

  const auto gx = flatten(grad_bundle(m, head, x));
  const auto gz = flatten(grad_bundle(m, head, z));

  double sgd_oracle = 0.0, adam_oracle = 0.0;
  for (std::size_t i = 0; i < gx.size(); ++i) {
    sgd_oracle += gx[i] * gz[i];
    adam_oracle += gx[i] * sign(gz[i]);
  }

  const NtkTerms s = sgd_ntk(m, head, x, z);
  const NtkTerms a = adam_ntk(m, head, x, z);
  CHECK(s.total == doctest::Approx(sgd_oracle).epsilon(1e-10));
  CHECK(a.total == doctest::Approx(adam_oracle).epsilon(1e-10));
  CHECK(s.total ==
        doctest::Approx(s.w1_term + s.b1_term + s.w2_term + s.b2_term)
            .epsilon(1e-12));
}

TEST_CASE("adam self-kernel is the gradient l1 norm") {
  const MlpWeights m = random_mlp(2, 5, 60, ActKind::Relu);
  const ScalarHead head = random_head(2, 61);
  const Matrix x = seeded_gaussian(3, 2, 62, 1.0);
  const auto g = flatten(grad_bundle(m, head, x));
  double l1 = 0.0;
  for (double v : g) l1 += std::abs(v);
  CHECK(adam_ntk(m, head, x, x).total == doctest::Approx(l1).epsilon(1e-12));
}

TEST_CASE("adam kernel is asymmetric, sgd symmetric") {
  const MlpWeights m = random_mlp(3, 7, 70, ActKind::GeluExact);
  const ScalarHead head = random_head(3, 71);
  const Matrix x = seeded_gaussian(2, 3, 72, 1.0);
  const Matrix z = seeded_gaussian(2, 3, 73, 1.0);
  CHECK(sgd_ntk(m, head, x, z).total ==
        doctest::Approx(sgd_ntk(m, head, z, x).total).epsilon(1e-12));
  CHECK(adam_ntk(m, head, x, z).total !=
        doctest::Approx(adam_ntk(m, head, z, x).total).epsilon(1e-9));
}

TEST_CASE("kernel_matrix agrees with pairwise calls; sgd gram is PSD") {
  const MlpWeights m = random_mlp(3, 6, 80, ActKind::Relu);
  const ScalarHead head = random_head(3, 81);
  std::vector<Matrix> inputs;
  for (std::uint64_t s = 0; s < 5; ++s)
    inputs.push_back(seeded_gaussian(2, 3, 90 + s, 1.0));

  const KernelMatrix ks = kernel_matrix(m, head, inputs, KernelKind::Sgd);
  const KernelMatrix ka = kernel_matrix(m, head, inputs, KernelKind::Adam);
  CHECK(ks.entries.rows == 5);
  CHECK(ks.entries.cols == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(ks.entries(i, j) ==
            doctest::Approx(sgd_ntk(m, head, inputs[i], inputs[j]).total)
                .epsilon(1e-12));
      CHECK(ka.entries(i, j) ==
            doctest::Approx(adam_ntk(m, head, inputs[i], inputs[j]).total)
                .epsilon(1e-12));
    }
  }
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(ks.entries(i, i) == doctest::Approx(ks.entries(i, i)));

  // Gram matrix of gradient vectors: xᵀKx = ‖Σx_i g_i‖² ≥ 0. Spot check via
  // a few random directions instead of a full eigensolve.
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    Vector v(5);
    for (double& c : v) c = rng.next_normal();
    double quad = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) quad += v[i] * ks.entries(i, j) * v[j];
    CHECK(quad >= -1e-8 * std::abs(ks.entries(0, 0)) * 25.0);
  }
}

TEST_CASE("ntk_error and output_error definitions") {
  const MlpWeights m = random_mlp(3, 6, 100, ActKind::Relu);
  KernelMatrix a{Matrix(2, 2), KernelKind::Sgd};
  KernelMatrix b{Matrix(2, 2), KernelKind::Sgd};
  a.entries(0, 0) = 1.0;
  b.entries(1, 1) = 2.0;
  CHECK(ntk_error(a, b) == doctest::Approx(std::sqrt(5.0)));

  KernelMatrix c{Matrix(2, 2), KernelKind::Adam};
  CHECK_THROWS_AS(ntk_error(a, c), std::invalid_argument);
}

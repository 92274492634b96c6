#pragma once

#include <cstdint>
#include <optional>
#include <variant>

#include "mlpfuse/mlp.hpp"
#include "mlpfuse/svd.hpp"

namespace mlpfuse {

// ---------------------------------------------------------------------------
// k-means over embedding rows

struct KmeansResult {
  std::size_t k{0};
  std::vector<std::size_t> labels;  // point -> cluster
  Matrix centroids;                 // k × d
  double objective{0.0};
  std::size_t iterations{0};
};

// Lloyd's algorithm with k-means++ seeding. No empty clusters in the result
// (repair reassigns the point farthest from its centroid in the largest
// cluster). Deterministic given the seed.
KmeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter = 100, double tol = 1e-10);

// One-hot clustering matrix C, averaging matrix C̄ = P⁻¹C, cluster-size
// diagonal P = CCᵀ, and centroid matrix C̄·embeddings.
struct ClusterAssignment {
  std::size_t k{0};
  std::vector<std::size_t> labels;
  Matrix c;      // k × p_I, one-hot columns
  Matrix c_bar;  // k × p_I, rows sum to 1
  Vector p_diag; // cluster sizes
  Matrix centroids;
};

ClusterAssignment make_assignment(const std::vector<std::size_t>& labels,
                                  std::size_t k, const Matrix& embeddings);

// ---------------------------------------------------------------------------
// Compressed model variants

enum class FusedStrategy { StandaloneP, PIntoW2 };

std::string strategy_name(FusedStrategy s);
FusedStrategy strategy_from_name(const std::string& name);

// H̃ = σ(X W̃1 + 1 b̃1ᵀ) P W̃2 + 1 b2ᵀ. Under PIntoW2 the trained parameter is
// the product P·W̃2; forward values agree, gradients differ by a left P factor.
struct FusedMlp {
  Matrix w1t;    // p × k
  Vector b1t;    // k
  Matrix w2t;    // k × p
  Vector p_diag; // k cluster sizes
  Vector b2;
  FusedStrategy strategy{FusedStrategy::StandaloneP};
};

// H̃ = σ(X W̃1 P^(1/2) + 1 (P^(1/2) b̃1)ᵀ) P^(1/2) W̃2 + 1 b2ᵀ; requires a
// positively homogeneous activation.
struct SgdFusedMlp {
  Matrix w1c;
  Vector b1c;
  Matrix w2c;
  Vector b2;
};

// Same P^(1/2) parameterization offered for any activation; no standalone P.
struct AblationMlp {
  Matrix w1a;
  Vector b1a;
  Matrix w2a;
  Vector b2;
};

// H̃ = out_scale · σ(X W1′ + 1 b1′ᵀ) W2′ + 1 b2ᵀ (sketch: out_scale = 1;
// MMD: out_scale = p_I/k).
struct ScaledDenseMlp {
  Matrix w1s;
  Vector b1s;
  Matrix w2s;
  Vector b2;
  double out_scale{1.0};
};

// W1 and W2 each replaced by a rank-t factorization; forward never
// materializes the full products.
struct FactoredMlp {
  SvdFactors f1;  // W1 = U1 diag(S1) V1ᵀ
  SvdFactors f2;
  Vector b1;
  Vector b2;
};

// Magnitude pruning: weights with binary masks, biases untouched.
struct MaskedMlp {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;
  Matrix m1;
  Matrix m2;
};

struct CompressedMlp {
  std::variant<FusedMlp, SgdFusedMlp, AblationMlp, ScaledDenseMlp, FactoredMlp,
               MaskedMlp>
      body;
  Activation act;

  std::size_t p() const;
  std::size_t inner_dim() const;  // k, t, or p_I depending on variant
};

// ---------------------------------------------------------------------------
// Compressors

CompressedMlp fuse_mlp(const MlpWeights& mlp, std::size_t k, std::uint64_t seed,
                       FusedStrategy strategy = FusedStrategy::StandaloneP);

CompressedMlp fuse_mlp_sgd_variant(const MlpWeights& mlp, std::size_t k,
                                   std::uint64_t seed);

CompressedMlp clustering_ablation(const MlpWeights& mlp, std::size_t k,
                                  std::uint64_t seed);

CompressedMlp sketch_mlp(const MlpWeights& mlp, std::size_t k, std::uint64_t seed);

CompressedMlp svd_mlp(const MlpWeights& mlp, std::size_t t);

CompressedMlp prune_mlp(const MlpWeights& mlp, double ratio);

// Squared maximum mean discrepancy between two point multisets under a
// Gaussian RBF kernel k(x,y) = exp(−‖x−y‖²/(2·bandwidth²)).
double mmd_squared(const Matrix& p_pts, const Matrix& q_pts, double bandwidth);

// Median of pairwise distances; the "auto" bandwidth.
double median_bandwidth(const Matrix& points);

struct MmdOptions {
  std::size_t steps{200};
  double lr{0.05};
  std::optional<double> bandwidth;  // nullopt -> median heuristic
};

// k support points initialized from k-means centroids and refined by gradient
// descent on mmd_squared(embeddings, support). Result carries the p_I/k
// output factor (expectations, not sums, enter the MMD view).
CompressedMlp mmd_mlp(const MlpWeights& mlp, std::size_t k, std::uint64_t seed,
                      const MmdOptions& opts = {});

// Loss trace helper for mmd_mlp (exposed for tests/reports).
CompressedMlp mmd_mlp_traced(const MlpWeights& mlp, std::size_t k,
                             std::uint64_t seed, const MmdOptions& opts,
                             Vector* loss_trace);

// ---------------------------------------------------------------------------
// Evaluation of compressed models

Matrix forward_compressed(const CompressedMlp& comp, const Matrix& x);

// Gradients of the fused scalar network w.r.t. its own parameters
// (W̃1, b̃1, W̃2-or-PW̃2, b2). Throws on non-fused variants.
GradBundle compressed_gradients(const CompressedMlp& comp, const Matrix& x,
                                const Matrix& g);

// Gradient bundle of any compressed variant w.r.t. its own parameters,
// used to build NTK kernels of compressed models.
GradBundle compressed_grad_bundle(const CompressedMlp& comp, const Matrix& x,
                                  const Matrix& g);

// Fused assignment retained by fuse_* so the bound checker and tests can see
// the clustering. Returned alongside when needed.
CompressedMlp fuse_from_assignment(const MlpWeights& mlp,
                                   const ClusterAssignment& assign,
                                   FusedStrategy strategy);

ClusterAssignment cluster_sub_mlps(const MlpWeights& mlp, std::size_t k,
                                   std::uint64_t seed);

}  // namespace mlpfuse

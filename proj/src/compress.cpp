#include "mlpfuse/compress.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mlpfuse/rng.hpp"

namespace mlpfuse {

namespace {

double sq_dist_row(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols; ++c) {
    const double d = a(i, c) - b(j, c);
    s += d * d;
  }
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// k-means

KmeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter, double tol) {
  const std::size_t n = points.rows, d = points.cols;
  require(k >= 1 && k <= n, "kmeans: k out of range");
  require(max_iter >= 1, "kmeans: max_iter must be >= 1");
  require(tol >= 0.0, "kmeans: tol must be >= 0");

  Rng rng(seed);
  Matrix centroids(k, d);

  // k-means++ seeding.
  {
    std::size_t first = rng.next_below(n);
    for (std::size_t c = 0; c < d; ++c) centroids(0, c) = points(first, c);
    Vector dist2(n);
    for (std::size_t j = 1; j < k; ++j) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < j; ++c)
          best = std::min(best, sq_dist_row(points, i, centroids, c));
        dist2[i] = best;
        total += best;
      }
      std::size_t pick = 0;
      if (total > 0.0) {
        const double r = rng.next_uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          acc += dist2[i];
          if (acc >= r) {
            pick = i;
            break;
          }
        }
      } else {
        pick = rng.next_below(n);
      }
      for (std::size_t c = 0; c < d; ++c) centroids(j, c) = points(pick, c);
    }
  }

  std::vector<std::size_t> labels(n, 0);
  KmeansResult out;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    // Assignment.
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d2 = sq_dist_row(points, i, centroids, c);
        if (d2 < best) {
          best = d2;
          arg = c;
        }
      }
      labels[i] = arg;
    }

    // Empty-cluster repair: move in the point farthest from its centroid
    // within the largest cluster.
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<std::size_t> counts(k, 0);
      for (std::size_t lab : labels) ++counts[lab];
      if (counts[c] > 0) continue;
      const std::size_t big =
          std::distance(counts.begin(), std::max_element(counts.begin(), counts.end()));
      double worst = -1.0;
      std::size_t victim = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != big) continue;
        const double d2 = sq_dist_row(points, i, centroids, big);
        if (d2 > worst) {
          worst = d2;
          victim = i;
        }
      }
      labels[victim] = c;
      for (std::size_t cc = 0; cc < d; ++cc) centroids(c, cc) = points(victim, cc);
    }

    // Update.
    Matrix next(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[labels[i]];
      for (std::size_t c = 0; c < d; ++c) next(labels[i], c) += points(i, c);
    }
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t c = 0; c < d; ++c) next(j, c) /= static_cast<double>(counts[j]);

    const double shift = frob_distance(next, centroids);
    centroids = std::move(next);
    out.iterations = iter + 1;
    if (shift < tol) break;
  }

  // Final assignment against the last centroid update.
  double objective = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double d2 = sq_dist_row(points, i, centroids, c);
      if (d2 < best) {
        best = d2;
        arg = c;
      }
    }
    labels[i] = arg;
    objective += best;
  }

  out.k = k;
  out.labels = std::move(labels);
  out.centroids = std::move(centroids);
  out.objective = objective;
  return out;
}

ClusterAssignment make_assignment(const std::vector<std::size_t>& labels,
                                  std::size_t k, const Matrix& embeddings) {
  require(labels.size() == embeddings.rows, "make_assignment: label count");
  ClusterAssignment a;
  a.k = k;
  a.labels = labels;
  a.c = Matrix(k, labels.size());
  a.p_diag = Vector(k, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] < k, "make_assignment: label out of range");
    a.c(labels[i], i) = 1.0;
    a.p_diag[labels[i]] += 1.0;
  }
  for (double sz : a.p_diag) require(sz >= 1.0, "make_assignment: empty cluster");
  a.c_bar = a.c;
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < labels.size(); ++i) a.c_bar(j, i) /= a.p_diag[j];
  a.centroids = matmul(a.c_bar, embeddings);
  return a;
}

ClusterAssignment cluster_sub_mlps(const MlpWeights& mlp, std::size_t k,
                                   std::uint64_t seed) {
  require(k >= 1 && k <= mlp.p_inner(), "fuse: k out of range");
  const Matrix emb = sub_mlp_embeddings(mlp);
  const KmeansResult km = kmeans(emb, k, seed);
  // Centroids recomputed exactly from the assignment (C̄·W), so the fused
  // weights satisfy the ClusterAssignment algebra bit-for-bit.
  return make_assignment(km.labels, k, emb);
}

// ---------------------------------------------------------------------------
// Fusion family

std::string strategy_name(FusedStrategy s) {
  return s == FusedStrategy::StandaloneP ? "standalone_p" : "p_into_w2";
}

FusedStrategy strategy_from_name(const std::string& name) {
  if (name == "standalone_p") return FusedStrategy::StandaloneP;
  if (name == "p_into_w2") return FusedStrategy::PIntoW2;
  throw std::invalid_argument("unknown fusion strategy: " + name);
}

CompressedMlp fuse_from_assignment(const MlpWeights& mlp,
                                   const ClusterAssignment& assign,
                                   FusedStrategy strategy) {
  const MlpWeights centroid_mlp =
      weights_from_embeddings(assign.centroids, mlp.p(), mlp.b2, mlp.act);
  FusedMlp fused;
  fused.w1t = centroid_mlp.w1;
  fused.b1t = centroid_mlp.b1;
  fused.w2t = centroid_mlp.w2;
  fused.p_diag = assign.p_diag;
  fused.b2 = mlp.b2;
  fused.strategy = strategy;
  return CompressedMlp{std::move(fused), mlp.act};
}

CompressedMlp fuse_mlp(const MlpWeights& mlp, std::size_t k, std::uint64_t seed,
                       FusedStrategy strategy) {
  return fuse_from_assignment(mlp, cluster_sub_mlps(mlp, k, seed), strategy);
}

namespace {

SgdFusedMlp sqrt_p_fold(const FusedMlp& f) {
  Vector sqrt_p(f.p_diag.size());
  for (std::size_t i = 0; i < sqrt_p.size(); ++i) sqrt_p[i] = std::sqrt(f.p_diag[i]);
  SgdFusedMlp out;
  out.w1c = scale_cols(f.w1t, sqrt_p);
  out.b1c = f.b1t;
  for (std::size_t i = 0; i < out.b1c.size(); ++i) out.b1c[i] *= sqrt_p[i];
  out.w2c = scale_rows(f.w2t, sqrt_p);
  out.b2 = f.b2;
  return out;
}

}  // namespace

CompressedMlp fuse_mlp_sgd_variant(const MlpWeights& mlp, std::size_t k,
                                   std::uint64_t seed) {
  if (!mlp.act.positively_homogeneous()) {
    throw UnsupportedActivation(
        "fuse_mlp_sgd_variant: requires a positively homogeneous activation "
        "(got " + act_name(mlp.act.kind) + ")");
  }
  const CompressedMlp fused = fuse_mlp(mlp, k, seed);
  return CompressedMlp{sqrt_p_fold(std::get<FusedMlp>(fused.body)), mlp.act};
}

CompressedMlp clustering_ablation(const MlpWeights& mlp, std::size_t k,
                                  std::uint64_t seed) {
  const CompressedMlp fused = fuse_mlp(mlp, k, seed);
  const SgdFusedMlp folded = sqrt_p_fold(std::get<FusedMlp>(fused.body));
  AblationMlp out{folded.w1c, folded.b1c, folded.w2c, folded.b2};
  return CompressedMlp{std::move(out), mlp.act};
}

// ---------------------------------------------------------------------------
// Sketch / SVD / pruning

CompressedMlp sketch_mlp(const MlpWeights& mlp, std::size_t k, std::uint64_t seed) {
  require(k >= 1 && k <= mlp.p_inner(), "sketch_mlp: k out of range");
  const Matrix s = seeded_gaussian(mlp.p_inner(), k, seed,
                                   1.0 / std::sqrt(static_cast<double>(k)));
  ScaledDenseMlp out;
  out.w1s = matmul(mlp.w1, s);
  Matrix b1_row(1, mlp.p_inner());
  for (std::size_t i = 0; i < mlp.b1.size(); ++i) b1_row(0, i) = mlp.b1[i];
  const Matrix b1s = matmul(b1_row, s);
  out.b1s = b1s.data;
  out.w2s = matmul(transpose(s), mlp.w2);
  out.b2 = mlp.b2;
  out.out_scale = 1.0;
  return CompressedMlp{std::move(out), mlp.act};
}

CompressedMlp svd_mlp(const MlpWeights& mlp, std::size_t t) {
  require(t >= 1 && t <= std::min(mlp.p(), mlp.p_inner()),
          "svd_mlp: t out of range");
  FactoredMlp out;
  out.f1 = truncated_svd(mlp.w1, t);
  out.f2 = truncated_svd(mlp.w2, t);
  out.b1 = mlp.b1;
  out.b2 = mlp.b2;
  return CompressedMlp{std::move(out), mlp.act};
}

CompressedMlp prune_mlp(const MlpWeights& mlp, double ratio) {
  require(ratio >= 0.0 && ratio <= 1.0, "prune_mlp: ratio outside [0,1]");
  const std::size_t n1 = mlp.w1.size(), n2 = mlp.w2.size();
  const std::size_t total = n1 + n2;
  const std::size_t cut = static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(total)));

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  auto mag = [&](std::size_t idx) {
    return idx < n1 ? std::abs(mlp.w1.data[idx]) : std::abs(mlp.w2.data[idx - n1]);
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mag(a) < mag(b); });

  MaskedMlp out{mlp.w1, mlp.b1, mlp.w2, mlp.b2,
                Matrix(mlp.w1.rows, mlp.w1.cols, 1.0),
                Matrix(mlp.w2.rows, mlp.w2.cols, 1.0)};
  for (std::size_t i = 0; i < cut; ++i) {
    const std::size_t idx = order[i];
    if (idx < n1) {
      out.m1.data[idx] = 0.0;
      out.w1.data[idx] = 0.0;
    } else {
      out.m2.data[idx - n1] = 0.0;
      out.w2.data[idx - n1] = 0.0;
    }
  }
  return CompressedMlp{std::move(out), mlp.act};
}

// ---------------------------------------------------------------------------
// MMD

double mmd_squared(const Matrix& p_pts, const Matrix& q_pts, double bandwidth) {
  require(p_pts.rows >= 1 && q_pts.rows >= 1, "mmd_squared: empty point set");
  require(p_pts.cols == q_pts.cols, "mmd_squared: dimension mismatch");
  require(bandwidth > 0.0, "mmd_squared: bandwidth must be positive");
  const double inv2bw2 = 1.0 / (2.0 * bandwidth * bandwidth);
  auto kern = [&](const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    return std::exp(-sq_dist_row(a, i, b, j) * inv2bw2);
  };
  const double n = static_cast<double>(p_pts.rows);
  const double m = static_cast<double>(q_pts.rows);
  double pp = 0.0, qq = 0.0, pq = 0.0;
  for (std::size_t i = 0; i < p_pts.rows; ++i)
    for (std::size_t j = 0; j < p_pts.rows; ++j) pp += kern(p_pts, i, p_pts, j);
  for (std::size_t i = 0; i < q_pts.rows; ++i)
    for (std::size_t j = 0; j < q_pts.rows; ++j) qq += kern(q_pts, i, q_pts, j);
  for (std::size_t i = 0; i < p_pts.rows; ++i)
    for (std::size_t j = 0; j < q_pts.rows; ++j) pq += kern(p_pts, i, q_pts, j);
  return pp / (n * n) + qq / (m * m) - 2.0 * pq / (n * m);
}

double median_bandwidth(const Matrix& points) {
  Vector d2;
  for (std::size_t i = 0; i < points.rows; ++i)
    for (std::size_t j = i + 1; j < points.rows; ++j)
      d2.push_back(sq_dist_row(points, i, points, j));
  if (d2.empty()) return 1.0;
  std::nth_element(d2.begin(), d2.begin() + d2.size() / 2, d2.end());
  const double med = std::sqrt(d2[d2.size() / 2]);
  return med > 0.0 ? med : 1.0;
}

namespace {

Matrix mmd_gradient(const Matrix& emb, const Matrix& q, double bandwidth) {
  const double inv_bw2 = 1.0 / (bandwidth * bandwidth);
  const double inv2bw2 = 0.5 * inv_bw2;
  const double n = static_cast<double>(emb.rows);
  const double m = static_cast<double>(q.rows);
  Matrix grad(q.rows, q.cols);
  for (std::size_t a = 0; a < q.rows; ++a) {
    for (std::size_t b = 0; b < q.rows; ++b) {
      const double kv = std::exp(-sq_dist_row(q, a, q, b) * inv2bw2);
      const double coeff = -2.0 / (m * m) * kv * inv_bw2;
      for (std::size_t c = 0; c < q.cols; ++c)
        grad(a, c) += coeff * (q(a, c) - q(b, c));
    }
    for (std::size_t i = 0; i < emb.rows; ++i) {
      const double kv = std::exp(-sq_dist_row(emb, i, q, a) * inv2bw2);
      const double coeff = -2.0 / (n * m) * kv * inv_bw2;
      for (std::size_t c = 0; c < q.cols; ++c)
        grad(a, c) += coeff * (emb(i, c) - q(a, c));
    }
  }
  return grad;
}

}  // namespace

CompressedMlp mmd_mlp_traced(const MlpWeights& mlp, std::size_t k,
                             std::uint64_t seed, const MmdOptions& opts,
                             Vector* loss_trace) {
  require(k >= 1 && k <= mlp.p_inner(), "mmd_mlp: k out of range");
  require(opts.lr > 0.0, "mmd_mlp: lr must be positive");
  const Matrix emb = sub_mlp_embeddings(mlp);
  const double bandwidth = opts.bandwidth.value_or(median_bandwidth(emb));

  const KmeansResult km = kmeans(emb, k, seed);
  Matrix q = make_assignment(km.labels, k, emb).centroids;

  double loss = mmd_squared(emb, q, bandwidth);
  if (loss_trace) loss_trace->push_back(loss);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    const Matrix grad = mmd_gradient(emb, q, bandwidth);
    Matrix next = sub(q, scale(grad, opts.lr));
    if (!all_finite(next)) {
      throw NumericFailure("mmd_mlp: non-finite iterate at step " +
                           std::to_string(step));
    }
    const double next_loss = mmd_squared(emb, next, bandwidth);
    if (!std::isfinite(next_loss)) {
      throw NumericFailure("mmd_mlp: non-finite loss at step " +
                           std::to_string(step));
    }
    // Reject uphill steps so the trace is monotone non-increasing.
    if (next_loss <= loss + 1e-15) {
      q = std::move(next);
      loss = next_loss;
    }
    if (loss_trace) loss_trace->push_back(loss);
  }

  const MlpWeights support = weights_from_embeddings(q, mlp.p(), mlp.b2, mlp.act);
  ScaledDenseMlp out;
  out.w1s = support.w1;
  out.b1s = support.b1;
  out.w2s = support.w2;
  out.b2 = mlp.b2;
  out.out_scale = static_cast<double>(mlp.p_inner()) / static_cast<double>(k);
  return CompressedMlp{std::move(out), mlp.act};
}

CompressedMlp mmd_mlp(const MlpWeights& mlp, std::size_t k, std::uint64_t seed,
                      const MmdOptions& opts) {
  return mmd_mlp_traced(mlp, k, seed, opts, nullptr);
}

// ---------------------------------------------------------------------------
// Forward / gradients of compressed variants

std::size_t CompressedMlp::p() const {
  return std::visit(
      [](const auto& m) -> std::size_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FusedMlp>) return m.w1t.rows;
        else if constexpr (std::is_same_v<T, SgdFusedMlp>) return m.w1c.rows;
        else if constexpr (std::is_same_v<T, AblationMlp>) return m.w1a.rows;
        else if constexpr (std::is_same_v<T, ScaledDenseMlp>) return m.w1s.rows;
        else if constexpr (std::is_same_v<T, FactoredMlp>) return m.f1.u.rows;
        else return m.w1.rows;
      },
      body);
}

std::size_t CompressedMlp::inner_dim() const {
  return std::visit(
      [](const auto& m) -> std::size_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FusedMlp>) return m.w1t.cols;
        else if constexpr (std::is_same_v<T, SgdFusedMlp>) return m.w1c.cols;
        else if constexpr (std::is_same_v<T, AblationMlp>) return m.w1a.cols;
        else if constexpr (std::is_same_v<T, ScaledDenseMlp>) return m.w1s.cols;
        else if constexpr (std::is_same_v<T, FactoredMlp>) return m.f1.s.size();
        else return m.w1.cols;
      },
      body);
}

namespace {

Matrix fused_forward(const FusedMlp& f, const Activation& act, const Matrix& x) {
  const Matrix sig = act.value(add_row_broadcast(matmul(x, f.w1t), f.b1t));
  if (f.strategy == FusedStrategy::StandaloneP) {
    return add_row_broadcast(matmul(scale_cols(sig, f.p_diag), f.w2t), f.b2);
  }
  return add_row_broadcast(matmul(sig, scale_rows(f.w2t, f.p_diag)), f.b2);
}

Matrix dense_forward(const Matrix& w1, const Vector& b1, const Matrix& w2,
                     const Vector& b2, const Activation& act, const Matrix& x,
                     double out_scale = 1.0) {
  const Matrix sig = act.value(add_row_broadcast(matmul(x, w1), b1));
  return add_row_broadcast(scale(matmul(sig, w2), out_scale), b2);
}

}  // namespace

Matrix forward_compressed(const CompressedMlp& comp, const Matrix& x) {
  require(x.cols == comp.p(), "forward_compressed: input column count != p");
  const Activation& act = comp.act;
  return std::visit(
      [&](const auto& m) -> Matrix {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FusedMlp>) {
          return fused_forward(m, act, x);
        } else if constexpr (std::is_same_v<T, SgdFusedMlp>) {
          return dense_forward(m.w1c, m.b1c, m.w2c, m.b2, act, x);
        } else if constexpr (std::is_same_v<T, AblationMlp>) {
          return dense_forward(m.w1a, m.b1a, m.w2a, m.b2, act, x);
        } else if constexpr (std::is_same_v<T, ScaledDenseMlp>) {
          return dense_forward(m.w1s, m.b1s, m.w2s, m.b2, act, x, m.out_scale);
        } else if constexpr (std::is_same_v<T, FactoredMlp>) {
          // (X U1) S1 V1ᵀ — rank-t products only.
          const Matrix pre = add_row_broadcast(
              matmul(scale_cols(matmul(x, m.f1.u), m.f1.s), transpose(m.f1.v)),
              m.b1);
          const Matrix sig = act.value(pre);
          return add_row_broadcast(
              matmul(scale_cols(matmul(sig, m.f2.u), m.f2.s), transpose(m.f2.v)),
              m.b2);
        } else {
          return dense_forward(m.w1, m.b1, m.w2, m.b2, act, x);
        }
      },
      comp.body);
}

GradBundle compressed_gradients(const CompressedMlp& comp, const Matrix& x,
                                const Matrix& g) {
  const FusedMlp* f = std::get_if<FusedMlp>(&comp.body);
  require(f != nullptr, "compressed_gradients: fused variant required");
  require(x.cols == f->w1t.rows, "compressed_gradients: input columns != p");
  require(g.rows == x.rows && g.cols == f->w1t.rows,
          "compressed_gradients: upstream shape");

  const Matrix pre = add_row_broadcast(matmul(x, f->w1t), f->b1t);
  const Matrix sig = comp.act.value(pre);
  const Matrix sig_prime = comp.act.deriv(pre);
  // Effective second weight in forward is P·W̃2 for both strategies.
  const Matrix inner =
      hadamard(matmul(g, scale_cols(transpose(f->w2t), f->p_diag)), sig_prime);

  GradBundle out;
  out.dw2 = matmul(transpose(sig), g);
  if (f->strategy == FusedStrategy::StandaloneP)
    out.dw2 = scale_rows(out.dw2, f->p_diag);
  out.db2 = col_sums(g);
  out.dw1 = matmul(transpose(x), inner);
  out.db1 = col_sums(inner);
  return out;
}

GradBundle compressed_grad_bundle(const CompressedMlp& comp, const Matrix& x,
                                  const Matrix& g) {
  const Activation& act = comp.act;
  return std::visit(
      [&](const auto& m) -> GradBundle {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FusedMlp>) {
          return compressed_gradients(comp, x, g);
        } else if constexpr (std::is_same_v<T, SgdFusedMlp>) {
          return mlp_gradients({m.w1c, m.b1c, m.w2c, m.b2, act}, x, g);
        } else if constexpr (std::is_same_v<T, AblationMlp>) {
          return mlp_gradients({m.w1a, m.b1a, m.w2a, m.b2, act}, x, g);
        } else if constexpr (std::is_same_v<T, ScaledDenseMlp>) {
          GradBundle b =
              mlp_gradients({m.w1s, m.b1s, m.w2s, m.b2, act}, x, scale(g, m.out_scale));
          b.db2 = col_sums(g);  // the b2 term is outside the out_scale bracket
          return b;
        } else if constexpr (std::is_same_v<T, FactoredMlp>) {
          return mlp_gradients(
              {svd_reconstruct(m.f1), m.b1, svd_reconstruct(m.f2), m.b2, act}, x, g);
        } else {
          GradBundle b = mlp_gradients({m.w1, m.b1, m.w2, m.b2, act}, x, g);
          b.dw1 = hadamard(b.dw1, m.m1);
          b.dw2 = hadamard(b.dw2, m.m2);
          return b;
        }
      },
      comp.body);
}

}  // namespace mlpfuse

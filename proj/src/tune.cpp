#include "mlpfuse/tune.hpp"

#include <cmath>

#include "mlpfuse/rng.hpp"
#include "mlpfuse/svd.hpp"

namespace mlpfuse {

void TuneConfig::validate() const {
  require(lr >= 0.0, "TuneConfig: lr must be non-negative");
  require(beta1 >= 0.0 && beta1 < 1.0, "TuneConfig: beta1 outside [0,1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "TuneConfig: beta2 outside [0,1)");
  require(eps_adam > 0.0, "TuneConfig: eps_adam must be positive");
}

namespace {

class FlatOptimizer {
 public:
  FlatOptimizer(const TuneConfig& cfg, std::size_t dim)
      : cfg_(cfg), m_(dim, 0.0), v_(dim, 0.0) {}

  void step(Vector& params, const Vector& grads) {
    if (cfg_.optimizer == Optimizer::Sgd) {
      for (std::size_t i = 0; i < params.size(); ++i)
        params[i] -= cfg_.lr * grads[i];
      return;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps_adam);
    }
  }

 private:
  TuneConfig cfg_;
  std::size_t t_{0};
  Vector m_, v_;
};

void append(Vector& flat, const Matrix& m) {
  flat.insert(flat.end(), m.data.begin(), m.data.end());
}
void append(Vector& flat, const Vector& v) {
  flat.insert(flat.end(), v.begin(), v.end());
}
std::size_t take(const Vector& flat, std::size_t pos, Matrix& m) {
  std::copy(flat.begin() + pos, flat.begin() + pos + m.data.size(), m.data.begin());
  return pos + m.data.size();
}
std::size_t take(const Vector& flat, std::size_t pos, Vector& v) {
  std::copy(flat.begin() + pos, flat.begin() + pos + v.size(), v.begin());
  return pos + v.size();
}

}  // namespace

// ---------------------------------------------------------------------------
// Layer-wise tuning (fused student)

std::pair<CompressedMlp, LossTrajectory> layerwise_tune(
    const MlpWeights& teacher, const CompressedMlp& student,
    const std::vector<Matrix>& inputs, const TuneConfig& cfg) {
  cfg.validate();
  require(std::holds_alternative<FusedMlp>(student.body),
          "layerwise_tune: fused student required");
  require(!inputs.empty(), "layerwise_tune: empty input list");

  CompressedMlp cur = student;
  std::vector<Matrix> teacher_out;
  teacher_out.reserve(inputs.size());
  for (const Matrix& x : inputs) teacher_out.push_back(forward(teacher, x));

  const double m_count = static_cast<double>(inputs.size());

  FusedMlp& f = std::get<FusedMlp>(cur.body);

  auto eval = [&](Vector* grad_out) {
    double loss = 0.0;
    Matrix gw1(f.w1t.rows, f.w1t.cols);
    Vector gb1(f.b1t.size(), 0.0);
    Matrix gw2(f.w2t.rows, f.w2t.cols);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Matrix hs = forward_compressed(cur, inputs[i]);
      const Matrix diff = sub(hs, teacher_out[i]);
      const double np = static_cast<double>(hs.rows * hs.cols);
      double sq = 0.0;
      for (double v : diff.data) sq += v * v;
      loss += sq / (np * m_count);
      if (grad_out) {
        const Matrix g = scale(diff, 2.0 / (np * m_count));
        const GradBundle gb = compressed_gradients(cur, inputs[i], g);
        gw1 = add(gw1, gb.dw1);
        for (std::size_t j = 0; j < gb1.size(); ++j) gb1[j] += gb.db1[j];
        gw2 = add(gw2, gb.dw2);
      }
    }
    if (grad_out) {
      grad_out->clear();
      append(*grad_out, gw1);
      append(*grad_out, gb1);
      append(*grad_out, gw2);
    }
    return loss;
  };
  // Under PIntoW2 the tuned parameter is the product P·W̃2.
  const bool standalone = f.strategy == FusedStrategy::StandaloneP;
  Vector inv_p(f.p_diag.size());
  for (std::size_t i = 0; i < inv_p.size(); ++i) inv_p[i] = 1.0 / f.p_diag[i];

  auto gather = [&]() {
    Vector flat;
    append(flat, f.w1t);
    append(flat, f.b1t);
    append(flat, standalone ? f.w2t : scale_rows(f.w2t, f.p_diag));
    return flat;
  };
  auto scatter = [&](const Vector& flat) {
    std::size_t pos = take(flat, 0, f.w1t);
    pos = take(flat, pos, f.b1t);
    Matrix w2_param = f.w2t;
    take(flat, pos, w2_param);
    f.w2t = standalone ? std::move(w2_param) : scale_rows(w2_param, inv_p);
  };

  LossTrajectory traj;
  Vector params = gather();
  FlatOptimizer opt(cfg, params.size());
  Vector grads;
  double loss = eval(cfg.steps > 0 ? &grads : nullptr);
  traj.values.push_back(loss);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    opt.step(params, grads);
    scatter(params);
    loss = eval(step + 1 < cfg.steps ? &grads : nullptr);
    if (!std::isfinite(loss)) {
      throw NumericFailure("layerwise_tune: non-finite loss at step " +
                           std::to_string(step + 1));
    }
    traj.values.push_back(loss);
  }
  return {cur, traj};
}

// ---------------------------------------------------------------------------
// Output-error bound

BoundReport check_output_bound(const MlpWeights& teacher,
                               const ClusterAssignment& assignment,
                               const Matrix& x) {
  for (double v : teacher.b1)
    require(v == 0.0, "check_output_bound: teacher b1 must be zero");
  for (double v : teacher.b2)
    require(v == 0.0, "check_output_bound: teacher b2 must be zero");

  const Matrix emb = sub_mlp_embeddings(teacher);
  const Matrix recon_emb = matmul(transpose(assignment.c), assignment.centroids);
  BoundReport r;
  r.epsilon = frob_distance(emb, recon_emb);
  r.c1 = spectral_norm(teacher.w1);
  r.c2 = spectral_norm(teacher.w2);
  r.cx = frob_norm(x);
  r.lipschitz = activation_lipschitz(teacher.act.kind);
  r.bound = r.lipschitz * (r.c2 * r.cx + r.c1 * r.cx) * r.epsilon +
            r.lipschitz * r.cx * r.epsilon * r.epsilon;

  const MlpWeights recon = weights_from_embeddings(
      recon_emb, teacher.p(), Vector(teacher.p(), 0.0), teacher.act);
  r.measured = frob_distance(forward(teacher, x), forward(recon, x));

  if (r.measured > r.bound + 1e-9) {
    throw NumericFailure("check_output_bound: measured error exceeds bound");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Toy trainer

ToyDataset make_toy_dataset(const MlpWeights& reference, const ScalarHead& head,
                            std::size_t count, std::size_t n, std::uint64_t seed) {
  require(count >= 1, "make_toy_dataset: empty dataset");
  Rng rng(seed);
  ToyDataset ds;
  for (std::size_t i = 0; i < count; ++i) {
    Matrix x(n, reference.p());
    for (double& v : x.data) v = rng.next_normal();
    const double f = head_value_and_upstream(reference, head, x).value;
    ds.labels.push_back(f >= 0.0 ? 1.0 : -1.0);
    ds.inputs.push_back(std::move(x));
  }
  return ds;
}

namespace {

struct ToyParams {
  Matrix* w1;
  Vector* b1;
  Matrix* w2;
  Vector* b2;
};

ToyParams toy_params(ToyModel& model) {
  if (auto* mlp = std::get_if<MlpWeights>(&model.body)) {
    return {&mlp->w1, &mlp->b1, &mlp->w2, &mlp->b2};
  }
  auto& comp = std::get<CompressedMlp>(model.body);
  return std::visit(
      [](auto& m) -> ToyParams {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FusedMlp>) {
          return {&m.w1t, &m.b1t, &m.w2t, &m.b2};
        } else if constexpr (std::is_same_v<T, SgdFusedMlp>) {
          return {&m.w1c, &m.b1c, &m.w2c, &m.b2};
        } else if constexpr (std::is_same_v<T, AblationMlp>) {
          return {&m.w1a, &m.b1a, &m.w2a, &m.b2};
        } else if constexpr (std::is_same_v<T, ScaledDenseMlp>) {
          return {&m.w1s, &m.b1s, &m.w2s, &m.b2};
        } else if constexpr (std::is_same_v<T, MaskedMlp>) {
          return {&m.w1, &m.b1, &m.w2, &m.b2};
        } else {
          throw std::invalid_argument("train_toy: unsupported model variant");
        }
      },
      comp.body);
}

// Gradient of f w.r.t. stored tensors: for the fused variant the stored W̃2 is
// the trained tensor, which matches the standalone-P gradient.
GradBundle toy_bundle(ToyModel& model, const Matrix& x, const Matrix& g) {
  if (auto* mlp = std::get_if<MlpWeights>(&model.body)) {
    return mlp_gradients(*mlp, x, g);
  }
  auto& comp = std::get<CompressedMlp>(model.body);
  if (auto* fused = std::get_if<FusedMlp>(&comp.body)) {
    CompressedMlp view = comp;
    std::get<FusedMlp>(view.body).strategy = FusedStrategy::StandaloneP;
    (void)fused;
    return compressed_grad_bundle(view, x, g);
  }
  return compressed_grad_bundle(comp, x, g);
}

Matrix toy_forward(const ToyModel& model, const Matrix& x) {
  if (auto* mlp = std::get_if<MlpWeights>(&model.body)) return forward(*mlp, x);
  return forward_compressed(std::get<CompressedMlp>(model.body), x);
}

double logistic_loss(double margin) {
  // log(1 + exp(-margin)), overflow safe.
  if (margin < -30.0) return -margin;
  return std::log1p(std::exp(-margin));
}

}  // namespace

LossTrajectory train_toy(ToyModel& model, const ToyDataset& dataset,
                         const TuneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  require(!dataset.inputs.empty(), "train_toy: empty dataset");
  require(dataset.inputs.size() == dataset.labels.size(),
          "train_toy: labels/input count mismatch");
  (void)seed;  // full-batch training; kept for interface stability

  ToyParams params = toy_params(model);
  const double count = static_cast<double>(dataset.inputs.size());

  auto eval = [&](Vector* grad_out) {
    double loss = 0.0;
    Matrix gw1(params.w1->rows, params.w1->cols);
    Vector gb1(params.b1->size(), 0.0);
    Matrix gw2(params.w2->rows, params.w2->cols);
    Vector gb2(params.b2->size(), 0.0);
    Vector gr(model.head.r.size(), 0.0);
    for (std::size_t i = 0; i < dataset.inputs.size(); ++i) {
      const Matrix& x = dataset.inputs[i];
      const Matrix h = toy_forward(model, x);
      const HeadEval he = head_from_output(model.head, h);
      const double y = dataset.labels[i];
      loss += logistic_loss(y * he.value) / count;
      if (grad_out) {
        const double margin = y * he.value;
        const double coef = -y / (1.0 + std::exp(margin)) / count;
        const GradBundle gb = toy_bundle(model, x, scale(he.upstream, coef));
        gw1 = add(gw1, gb.dw1);
        gw2 = add(gw2, gb.dw2);
        for (std::size_t j = 0; j < gb1.size(); ++j) gb1[j] += gb.db1[j];
        for (std::size_t j = 0; j < gb2.size(); ++j) gb2[j] += gb.db2[j];
        const Vector means = col_means(h);
        for (std::size_t j = 0; j < gr.size(); ++j) gr[j] += coef * means[j];
      }
    }
    if (grad_out) {
      grad_out->clear();
      append(*grad_out, gw1);
      append(*grad_out, gb1);
      append(*grad_out, gw2);
      append(*grad_out, gb2);
      append(*grad_out, gr);
    }
    return loss;
  };

  auto gather = [&]() {
    Vector flat;
    append(flat, *params.w1);
    append(flat, *params.b1);
    append(flat, *params.w2);
    append(flat, *params.b2);
    append(flat, model.head.r);
    return flat;
  };
  auto scatter = [&](const Vector& flat) {
    std::size_t pos = take(flat, 0, *params.w1);
    pos = take(flat, pos, *params.b1);
    pos = take(flat, pos, *params.w2);
    pos = take(flat, pos, *params.b2);
    take(flat, pos, model.head.r);
  };

  LossTrajectory traj;
  Vector flat = gather();
  FlatOptimizer opt(cfg, flat.size());
  Vector grads;
  double loss = eval(cfg.steps > 0 ? &grads : nullptr);
  traj.values.push_back(loss);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    opt.step(flat, grads);
    scatter(flat);
    loss = eval(step + 1 < cfg.steps ? &grads : nullptr);
    if (!std::isfinite(loss)) {
      throw NumericFailure("train_toy: non-finite loss at step " +
                           std::to_string(step + 1));
    }
    traj.values.push_back(loss);
  }
  return traj;
}

}  // namespace mlpfuse

// Acceptance suite: one pass/fail line per criterion. Criterion 10 is
// advisory; its failure is reported but does not affect the exit code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mlpfuse/bench.hpp"
#include "mlpfuse/compress.hpp"
#include "mlpfuse/io.hpp"
#include "mlpfuse/ntk.hpp"
#include "mlpfuse/rng.hpp"
#include "mlpfuse/tune.hpp"

using namespace mlpfuse;

namespace {

struct Check {
  bool ok{true};
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

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

std::vector<Matrix> random_inputs(std::size_t count, std::size_t n,
                                  std::size_t p, std::uint64_t seed) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(seeded_gaussian(n, p, seed + i, 1.0));
  return out;
}

Fixture planted_lossless(std::uint64_t seed) {
  FixtureSpec spec;
  spec.p = 8;
  spec.p_inner = 32;
  spec.k_true = 8;
  spec.noise = 0.0;
  spec.n = 4;
  spec.m = 8;
  spec.seed = seed;
  return make_fixture(spec);
}

double kernel_err(const MlpWeights& teacher, const CompressedMlp& comp,
                  const ScalarHead& head, const std::vector<Matrix>& inputs,
                  KernelKind kind) {
  return ntk_error(kernel_matrix(teacher, head, inputs, kind),
                   kernel_matrix(comp, head, inputs, kind));
}

std::vector<double> flatten(const GradBundle& g) {
  std::vector<double> out;
  out.insert(out.end(), g.dw1.data.begin(), g.dw1.data.end());
  out.insert(out.end(), g.db1.begin(), g.db1.end());
  out.insert(out.end(), g.dw2.data.begin(), g.dw2.data.end());
  out.insert(out.end(), g.db2.begin(), g.db2.end());
  return out;
}

double rel_vec_error(const std::vector<double>& approx,
                     const std::vector<double>& exact) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    num += (approx[i] - exact[i]) * (approx[i] - exact[i]);
    den += exact[i] * exact[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

// --------------------------------------------------------------------------
// 1. Exact recovery at each compressor's lossless setting.
Check criterion_exact_recovery() {
  Check c;
  auto verify = [&](const MlpWeights& teacher, const CompressedMlp& comp,
                    const ScalarHead& head, const std::vector<Matrix>& inputs,
                    const std::string& tag) {
    const double oe = output_error(teacher, comp, inputs);
    c.expect(oe < 1e-8, tag + ": output_error " + std::to_string(oe));
    for (KernelKind kind : {KernelKind::Sgd, KernelKind::Adam}) {
      const double ke = kernel_err(teacher, comp, head, inputs, kind);
      c.expect(ke < 1e-7, tag + ": ntk_error " + std::to_string(ke));
    }
  };

  const MlpWeights dense = random_mlp(6, 18, 1, ActKind::Relu);
  const ScalarHead head = random_head(6, 2);
  const auto inputs = random_inputs(6, 4, 6, 3);
  verify(dense, fuse_mlp(dense, 18, 0), head, inputs, "fuse k=p_I");
  verify(dense, svd_mlp(dense, 6), head, inputs, "svd full rank");
  verify(dense, prune_mlp(dense, 0.0), head, inputs, "prune ratio 0");

  // On the planted fixture clusters have size 4, so the standalone-P model
  // preserves the adam kernel and the sqrt-fold variant the sgd kernel; each
  // is checked through the parameterization built for it.
  const Fixture f = planted_lossless(5);
  const CompressedMlp planted = fuse_mlp(f.teacher, 8, 0);
  const CompressedMlp planted_sgd = fuse_mlp_sgd_variant(f.teacher, 8, 0);
  c.expect(output_error(f.teacher, planted, f.inputs) < 1e-8,
           "fuse planted: output_error");
  c.expect(output_error(f.teacher, planted_sgd, f.inputs) < 1e-8,
           "fuse planted sqrt-fold: output_error");
  const double adam_err =
      kernel_err(f.teacher, planted, f.head, f.inputs, KernelKind::Adam);
  c.expect(adam_err < 1e-7,
           "fuse planted: adam ntk_error " + std::to_string(adam_err));
  const double sgd_err =
      kernel_err(f.teacher, planted_sgd, f.head, f.inputs, KernelKind::Sgd);
  c.expect(sgd_err < 1e-7,
           "fuse planted sqrt-fold: sgd ntk_error " + std::to_string(sgd_err));
  return c;
}

// --------------------------------------------------------------------------
// 2. Analytic gradients vs central finite differences.
Check criterion_gradient_oracle() {
  Check c;
  const double step = 1e-5;

  auto fd_bundle = [&](auto&& value_fn, MlpWeights& m) {
    GradBundle g;
    g.dw1 = Matrix(m.w1.rows, m.w1.cols);
    g.db1.resize(m.b1.size());
    g.dw2 = Matrix(m.w2.rows, m.w2.cols);
    g.db2.resize(m.b2.size());
    auto central = [&](double& param) {
      const double saved = param;
      param = saved + step;
      const double up = value_fn();
      param = saved - step;
      const double dn = value_fn();
      param = saved;
      return (up - dn) / (2.0 * step);
    };
    for (std::size_t i = 0; i < m.w1.data.size(); ++i)
      g.dw1.data[i] = central(m.w1.data[i]);
    for (std::size_t i = 0; i < m.b1.size(); ++i) g.db1[i] = central(m.b1[i]);
    for (std::size_t i = 0; i < m.w2.data.size(); ++i)
      g.dw2.data[i] = central(m.w2.data[i]);
    for (std::size_t i = 0; i < m.b2.size(); ++i) g.db2[i] = central(m.b2[i]);
    return g;
  };

  auto run_instance = [&](std::uint64_t seed, ActKind kind) {
    MlpWeights m = random_mlp(3, 6, 7000 + seed, kind);
    const ScalarHead head = random_head(3, 7500 + seed);
    const Matrix x = seeded_gaussian(3, 3, 8000 + seed, 1.0);
    if (kind == ActKind::Relu) {
      // Keep every pre-activation away from the kink so the finite-difference
      // stencil never crosses it.
      const Matrix pre = add_row_broadcast(matmul(x, m.w1), m.b1);
      for (double v : pre.data)
        if (std::abs(v) < 1e-3) return true;  // skip, replacement seed follows
    }

    const HeadEval he = head_value_and_upstream(m, head, x);
    const GradBundle an = mlp_gradients(m, x, he.upstream);
    const GradBundle fd =
        fd_bundle([&] { return head_value_and_upstream(m, head, x).value; }, m);
    const double rel = rel_vec_error(flatten(fd), flatten(an));
    c.expect(rel < 1e-6, "dense grad rel err " + std::to_string(rel) +
                             " seed " + std::to_string(seed));

    // Fused model gradients through the same oracle.
    CompressedMlp comp = fuse_mlp(m, 3, seed);
    FusedMlp& fview = std::get<FusedMlp>(comp.body);
    if (kind == ActKind::Relu) {
      const Matrix pre = add_row_broadcast(matmul(x, fview.w1t), fview.b1t);
      for (double v : pre.data)
        if (std::abs(v) < 1e-3) return true;
    }
    auto cvalue = [&] {
      return head_from_output(head, forward_compressed(comp, x)).value;
    };
    const Matrix up = head_from_output(head, forward_compressed(comp, x)).upstream;
    const GradBundle can = compressed_gradients(comp, x, up);
    MlpWeights proxy{fview.w1t, fview.b1t, fview.w2t, fview.b2,
                     Activation{kind}};
    GradBundle cfd;
    cfd.dw1 = Matrix(fview.w1t.rows, fview.w1t.cols);
    cfd.db1.resize(fview.b1t.size());
    cfd.dw2 = Matrix(fview.w2t.rows, fview.w2t.cols);
    cfd.db2.resize(fview.b2.size());
    auto central = [&](double& param) {
      const double saved = param;
      param = saved + step;
      const double upv = cvalue();
      param = saved - step;
      const double dnv = cvalue();
      param = saved;
      return (upv - dnv) / (2.0 * step);
    };
    for (std::size_t i = 0; i < fview.w1t.data.size(); ++i)
      cfd.dw1.data[i] = central(fview.w1t.data[i]);
    for (std::size_t i = 0; i < fview.b1t.size(); ++i)
      cfd.db1[i] = central(fview.b1t[i]);
    for (std::size_t i = 0; i < fview.w2t.data.size(); ++i)
      cfd.dw2.data[i] = central(fview.w2t.data[i]);
    for (std::size_t i = 0; i < fview.b2.size(); ++i)
      cfd.db2[i] = central(fview.b2[i]);
    const double crel = rel_vec_error(flatten(cfd), flatten(can));
    c.expect(crel < 1e-6, "fused grad rel err " + std::to_string(crel) +
                              " seed " + std::to_string(seed));
    return false;
  };

  for (ActKind kind : {ActKind::GeluExact, ActKind::Relu}) {
    int done = 0;
    std::uint64_t seed = 0;
    while (done < 50 && seed < 500) {
      if (!run_instance(seed, kind)) ++done;
      ++seed;
    }
    c.expect(done == 50, "only " + std::to_string(done) + " usable instances");
  }
  return c;
}

// --------------------------------------------------------------------------
// Shared term comparison for criteria 3 and 4.
void compare_terms(Check& c, const NtkTerms& t, const NtkTerms& f,
                   const std::string& tag) {
  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max(std::abs(a), 1e-12);
  };
  c.expect(rel(t.w1_term, f.w1_term) < 1e-9, tag + ": w1 term");
  c.expect(rel(t.b1_term, f.b1_term) < 1e-9, tag + ": b1 term");
  c.expect(rel(t.w2_term, f.w2_term) < 1e-9, tag + ": w2 term");
  c.expect(rel(t.b2_term, f.b2_term) < 1e-9, tag + ": b2 term");
}

// 3. Adam kernel terms survive lossless clustering exactly.
Check criterion_adam_preservation() {
  Check c;
  const Fixture f = planted_lossless(11);
  const CompressedMlp comp = fuse_mlp(f.teacher, 8, 1);
  for (std::uint64_t i = 0; i < 10; ++i) {
    const Matrix x = seeded_gaussian(4, 8, 9000 + 2 * i, 1.0);
    const Matrix z = seeded_gaussian(4, 8, 9001 + 2 * i, 1.0);
    compare_terms(c, adam_ntk(f.teacher, f.head, x, z),
                  adam_ntk(comp, f.head, x, z), "pair " + std::to_string(i));
  }
  return c;
}

// 4. SGD kernel terms survive the square-root-fold variant; relu homogeneity.
Check criterion_sgd_preservation() {
  Check c;
  const Fixture f = planted_lossless(13);
  const CompressedMlp comp = fuse_mlp_sgd_variant(f.teacher, 8, 1);
  for (std::uint64_t i = 0; i < 10; ++i) {
    const Matrix x = seeded_gaussian(4, 8, 9100 + 2 * i, 1.0);
    const Matrix z = seeded_gaussian(4, 8, 9101 + 2 * i, 1.0);
    compare_terms(c, sgd_ntk(f.teacher, f.head, x, z),
                  sgd_ntk(comp, f.head, x, z), "pair " + std::to_string(i));
  }

  Activation relu{ActKind::Relu};
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix a(5, 6);
    for (double& v : a.data) v = rng.next_normal();
    Vector d(6);
    for (double& v : d) v = std::abs(rng.next_normal());
    c.expect(frob_distance(relu.value(scale_cols(a, d)),
                           scale_cols(relu.value(a), d)) == 0.0,
             "homogeneity trial " + std::to_string(trial));
  }
  return c;
}

// --------------------------------------------------------------------------
// 5. Output-error bound holds across randomized bias-free trials.
Check criterion_output_bound() {
  Check c;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    MlpWeights teacher = random_mlp(4, 10, 20000 + seed, ActKind::Relu);
    std::fill(teacher.b1.begin(), teacher.b1.end(), 0.0);
    std::fill(teacher.b2.begin(), teacher.b2.end(), 0.0);
    const ClusterAssignment assign =
        cluster_sub_mlps(teacher, 1 + seed % 6, seed);
    const Matrix x = seeded_gaussian(5, 4, 21000 + seed, 1.0);
    const BoundReport r = check_output_bound(teacher, assign, x);
    c.expect(r.measured <= r.bound + 1e-9,
             "trial " + std::to_string(seed) + ": measured " +
                 std::to_string(r.measured) + " bound " +
                 std::to_string(r.bound));
  }
  return c;
}

// --------------------------------------------------------------------------
// 6. Ordering analogue on the default fixture at matched parameter budgets.
// Fused at k=16 stores 2·16·16 + 16 = 528 weights (plus 16 sizes); the rank-t
// factorization stores 162t + 64 weights and the pruned teacher (1-r)·2048,
// so t = 3 and ratio = 0.75 put every method near 560 stored parameters.
// A rank-16 factorization of 16×64 matrices would be exact (not a
// compression), so the budget match governs t.
Check criterion_ordering(std::string* note) {
  Check c;
  const Fixture f = make_fixture(FixtureSpec{});
  std::vector<MethodSpec> methods;
  for (const char* name : {"fuse", "sketch", "ablation", "mmd", "prune", "svd"}) {
    MethodSpec spec;
    spec.method = name;
    spec.k = 16;
    spec.t = 3;
    spec.ratio = 0.75;
    methods.push_back(spec);
  }
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 10; ++s) seeds.push_back(s);
  const BenchReport report =
      run_bench(f.teacher, f.head, f.inputs, methods, seeds, "");

  std::map<std::string, double> mean_adam;
  std::map<std::string, std::vector<double>> per_seed;
  for (const BenchRow& row : report.rows) {
    c.expect(!row.failed, row.method + ": " + row.error);
    if (row.seed == "mean") mean_adam[row.method] = row.ntk_error_adam;
    if (row.seed != "mean" && row.seed != "std")
      per_seed[row.method].push_back(row.ntk_error_adam);
  }

  std::string summary;
  for (const auto& [method, value] : mean_adam)
    summary += method + "=" + std::to_string(value) + " ";
  *note = summary;

  for (const auto& [method, value] : mean_adam) {
    if (method == "fuse") continue;
    c.expect(mean_adam["fuse"] < value,
             "fuse mean adam ntk " + std::to_string(mean_adam["fuse"]) +
                 " not strictly below " + method + " " + std::to_string(value));
  }
  for (const std::string other : {"sketch", "ablation"}) {
    int wins = 0;
    for (std::size_t i = 0; i < 10; ++i)
      if (per_seed["fuse"][i] < per_seed[other][i]) ++wins;
    c.expect(wins >= 9, "fuse beats " + other + " in only " +
                            std::to_string(wins) + "/10 seeds");
  }
  return c;
}

// --------------------------------------------------------------------------
// 7. The two fused parameterizations agree in forward, differ by P in grad.
Check criterion_strategy_equivalence() {
  Check c;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MlpWeights m = random_mlp(5, 14, 30000 + seed, ActKind::GeluExact);
    const CompressedMlp a = fuse_mlp(m, 4, seed, FusedStrategy::StandaloneP);
    const CompressedMlp b = fuse_mlp(m, 4, seed, FusedStrategy::PIntoW2);
    const FusedMlp& fa = std::get<FusedMlp>(a.body);
    const Matrix x = seeded_gaussian(4, 5, 31000 + seed, 1.0);
    c.expect(frob_distance(forward_compressed(a, x), forward_compressed(b, x)) <
                 1e-12,
             "forward mismatch seed " + std::to_string(seed));

    const Matrix g = seeded_gaussian(4, 5, 32000 + seed, 0.5);
    const GradBundle ga = compressed_gradients(a, x, g);
    const GradBundle gb = compressed_gradients(b, x, g);
    c.expect(frob_distance(ga.dw2, scale_rows(gb.dw2, fa.p_diag)) < 1e-10,
             "w2 gradient P relation seed " + std::to_string(seed));
    c.expect(frob_distance(ga.dw1, gb.dw1) < 1e-12,
             "w1 gradient mismatch seed " + std::to_string(seed));
  }
  return c;
}

// --------------------------------------------------------------------------
// 8. Layer-wise tuning reduces the loss without hurting held-out error.
Check criterion_layerwise_tuning() {
  Check c;
  FixtureSpec spec;
  spec.m = 16;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    spec.seed = 40000 + seed;
    const Fixture f = make_fixture(spec);
    const std::vector<Matrix> train(f.inputs.begin(), f.inputs.begin() + 8);
    const std::vector<Matrix> heldout(f.inputs.begin() + 8, f.inputs.end());
    const CompressedMlp student = fuse_mlp(f.teacher, 8, seed);
    TuneConfig cfg;
    cfg.steps = 100;
    cfg.lr = 5e-3;
    const double before = output_error(f.teacher, student, heldout);
    const auto [tuned, traj] = layerwise_tune(f.teacher, student, train, cfg);
    c.expect(traj.values.back() < traj.values.front(),
             "loss not reduced seed " + std::to_string(seed));
    const double after = output_error(f.teacher, tuned, heldout);
    c.expect(after <= before + 1e-9,
             "held-out error rose " + std::to_string(before) + " -> " +
                 std::to_string(after) + " seed " + std::to_string(seed));
  }
  return c;
}

// --------------------------------------------------------------------------
// 9. FLOPs crossover in exact integer arithmetic.
Check criterion_flops() {
  Check c;
  for (std::uint64_t p : {8ULL, 64ULL, 256ULL, 1024ULL}) {
    const FlopsEstimate at = flops_estimate(2 * p, p, 8);
    c.expect(at.attn == at.ffn, "no equality at n=2p for p=" + std::to_string(p));
  }
  for (std::uint64_t p : {8ULL, 64ULL}) {
    for (std::uint64_t n = 1; n < 2 * p; ++n) {
      const FlopsEstimate e = flops_estimate(n, p, 8);
      c.expect(e.ffn > e.attn, "ffn not above attn at n=" + std::to_string(n) +
                                   " p=" + std::to_string(p));
    }
    const FlopsEstimate above = flops_estimate(2 * p + 1, p, 8);
    c.expect(above.attn > above.ffn, "order not flipped above the crossover");
  }
  return c;
}

// --------------------------------------------------------------------------
// 10. Training-dynamics analogue (advisory).
Check criterion_dynamics(std::string* note) {
  Check c;
  FixtureSpec spec;
  spec.p = 8;
  spec.p_inner = 32;
  spec.k_true = 8;
  spec.n = 4;
  spec.m = 16;
  int fused_closer = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    spec.seed = 50000 + seed;
    const Fixture f = make_fixture(spec);
    const ToyDataset data =
        make_toy_dataset(f.teacher, f.head, 16, 4, 51000 + seed);
    TuneConfig cfg;
    cfg.steps = 40;
    cfg.lr = 0.01;
    cfg.optimizer = Optimizer::Adam;

    ToyModel teacher{f.teacher, f.head};
    ToyModel fused{fuse_mlp(f.teacher, 8, seed), f.head};
    ToyModel sketch{sketch_mlp(f.teacher, 8, seed), f.head};
    const LossTrajectory tt = train_toy(teacher, data, cfg, seed);
    const LossTrajectory ft = train_toy(fused, data, cfg, seed);
    const LossTrajectory st = train_toy(sketch, data, cfg, seed);
    if (trajectory_distance(ft, tt) < trajectory_distance(st, tt))
      ++fused_closer;
  }
  *note = std::to_string(fused_closer) + "/10 seeds fused closer";
  c.expect(fused_closer >= 6, "fused trajectory closer in only " +
                                  std::to_string(fused_closer) + "/10 seeds");
  return c;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    std::string name;
    std::function<Check(std::string*)> run;
    double budget_seconds;
    bool advisory{false};
  };
  auto wrap = [](std::function<Check()> fn) {
    return [fn](std::string*) { return fn(); };
  };

  const std::vector<Criterion> criteria = {
      {1, "exact recovery at lossless settings", wrap(criterion_exact_recovery),
       10.0},
      {2, "gradient oracle (central differences)",
       wrap(criterion_gradient_oracle), 30.0},
      {3, "adam kernel preserved under lossless clustering",
       wrap(criterion_adam_preservation), 0.0},
      {4, "sgd kernel preserved by sqrt-fold variant",
       wrap(criterion_sgd_preservation), 0.0},
      {5, "output-error bound (100 randomized trials)",
       wrap(criterion_output_bound), 0.0},
      {6, "adam ntk ordering at matched budgets", criterion_ordering, 300.0},
      {7, "fused strategy equivalence", wrap(criterion_strategy_equivalence),
       0.0},
      {8, "layer-wise tuning", wrap(criterion_layerwise_tuning), 0.0},
      {9, "flops crossover", wrap(criterion_flops), 0.0},
      {10, "training-dynamics analogue (advisory)", criterion_dynamics, 0.0,
       true},
  };

  bool hard_failure = false;
  for (const Criterion& crit : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Check result;
    std::string note;
    try {
      result = crit.run(&note);
    } catch (const std::exception& e) {
      result.ok = false;
      result.detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (crit.budget_seconds > 0.0 && seconds > crit.budget_seconds) {
      result.ok = false;
      result.detail = "runtime " + std::to_string(seconds) + "s over budget " +
                      std::to_string(crit.budget_seconds) + "s";
    }
    const char* verdict =
        result.ok ? "PASS" : (crit.advisory ? "SOFT-FAIL" : "FAIL");
    std::printf("criterion %2d: %-9s %s (%.1fs)%s%s%s%s\n", crit.id, verdict,
                crit.name.c_str(), seconds, note.empty() ? "" : " [",
                note.c_str(), note.empty() ? "" : "]",
                result.ok ? "" : (" :: " + result.detail).c_str());
    if (!result.ok && !crit.advisory) hard_failure = true;
  }
  return hard_failure ? 1 : 0;
}

// Command-line front end: fixture generation, one-shot compression, the
// benchmark harness, layer-wise tuning, toy training, FLOPs estimates, and
// SVG report plots. All commands exit 0 on success and print a single
// machine-readable JSON error line to stderr on failure.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlpfuse/bench.hpp"
#include "mlpfuse/compress.hpp"
#include "mlpfuse/io.hpp"
#include "mlpfuse/ntk.hpp"
#include "mlpfuse/tune.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mlpfuse;

namespace {

struct MethodFlags {
  std::size_t k{16};
  std::size_t t{16};
  double ratio{0.75};
  std::string strategy{"standalone_p"};
  std::size_t steps{200};
  double lr{0.05};
  double bandwidth{0.0};  // 0 -> median heuristic

  // mmd_prefix disambiguates --steps/--lr on commands that also take
  // training-loop flags of the same name.
  void attach(CLI::App* cmd, const std::string& mmd_prefix = "") {
    cmd->add_option("--k", k, "cluster / sketch width");
    cmd->add_option("--t", t, "factorization rank");
    cmd->add_option("--ratio", ratio, "pruned weight fraction");
    cmd->add_option("--strategy", strategy,
                    "fused parameterization: standalone_p | p_into_w2");
    cmd->add_option("--" + mmd_prefix + "steps", steps, "mmd refinement steps");
    cmd->add_option("--" + mmd_prefix + "lr", lr, "mmd refinement learning rate");
    cmd->add_option("--bandwidth", bandwidth,
                    "mmd rbf bandwidth (0 = median heuristic)");
  }

  MethodSpec to_spec(const std::string& method) const {
    MethodSpec spec;
    spec.method = method;
    spec.k = k;
    spec.t = t;
    spec.ratio = ratio;
    spec.strategy = strategy_from_name(strategy);
    spec.mmd.steps = steps;
    spec.mmd.lr = lr;
    if (bandwidth > 0.0) spec.mmd.bandwidth = bandwidth;
    return spec;
  }
};

CompressionMeta meta_for(const MethodSpec& spec, std::uint64_t seed) {
  CompressionMeta meta;
  meta.method = spec.method;
  meta.seed = seed;
  if (spec.method == "fuse") meta.strategy = strategy_name(spec.strategy);
  if (spec.method == "svd") {
    meta.t = spec.t;
  } else if (spec.method == "prune") {
    meta.ratio = spec.ratio;
  } else {
    meta.k = spec.k;
  }
  if (spec.method == "mmd") {
    meta.steps = spec.mmd.steps;
    meta.lr = spec.mmd.lr;
    if (spec.mmd.bandwidth) meta.bandwidth = *spec.mmd.bandwidth;
  }
  return meta;
}

const MlpWeights& dense_model(const LoadedModel& loaded, const std::string& who) {
  const MlpWeights* mlp = std::get_if<MlpWeights>(&loaded.model);
  if (!mlp) throw std::invalid_argument(who + ": dense model manifest required");
  return *mlp;
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void write_trajectory_csv(const fs::path& path, const LossTrajectory& traj) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write trajectory: " + path.string());
  os << "step,loss\n";
  os.precision(12);
  for (std::size_t i = 0; i < traj.values.size(); ++i)
    os << i << "," << traj.values[i] << "\n";
}

// ---------------------------------------------------------------------------
// Minimal SVG emitters for report-style charts.

std::string svg_header(int w, int h) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
     << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return os.str();
}

void write_bar_chart(const fs::path& out, const std::string& title,
                     const std::vector<std::pair<std::string, double>>& bars) {
  if (bars.empty()) throw std::invalid_argument("plot: no data rows found");
  const int w = 640, h = 420, left = 60, bottom = 60, top = 40;
  double max_v = 0.0;
  for (const auto& [_, v] : bars) max_v = std::max(max_v, v);
  if (max_v <= 0.0) max_v = 1.0;
  std::ostringstream os;
  os << svg_header(w, h);
  os << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";
  const double plot_w = w - left - 20, plot_h = h - top - bottom;
  const double band = plot_w / double(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double bh = plot_h * bars[i].second / max_v;
    const double x = left + band * double(i) + band * 0.15;
    os << "<rect x=\"" << x << "\" y=\"" << top + plot_h - bh << "\" width=\""
       << band * 0.7 << "\" height=\"" << bh << "\" fill=\"#4477aa\"/>\n";
    os << "<text x=\"" << x + band * 0.35 << "\" y=\"" << h - bottom + 16
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       << "font-size=\"12\">" << bars[i].first << "</text>\n";
    os << "<text x=\"" << x + band * 0.35 << "\" y=\""
       << top + plot_h - bh - 4 << "\" text-anchor=\"middle\" "
       << "font-family=\"sans-serif\" font-size=\"10\">" << bars[i].second
       << "</text>\n";
  }
  os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\""
     << w - 20 << "\" y2=\"" << top + plot_h
     << "\" stroke=\"black\"/>\n</svg>\n";
  std::ofstream file(out);
  if (!file) throw IoError("cannot write plot: " + out.string());
  file << os.str();
}

void write_line_chart(const fs::path& out, const std::string& title,
                      const Vector& values) {
  if (values.empty()) throw std::invalid_argument("plot: empty trajectory");
  const int w = 640, h = 420, left = 60, bottom = 50, top = 40;
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo < 1e-300) hi = lo + 1.0;
  const double plot_w = w - left - 20, plot_h = h - top - bottom;
  std::ostringstream os;
  os << svg_header(w, h);
  os << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";
  os << "<polyline fill=\"none\" stroke=\"#aa3377\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x =
        left + plot_w * double(i) / double(std::max<std::size_t>(1, values.size() - 1));
    const double y = top + plot_h * (1.0 - (values[i] - lo) / (hi - lo));
    os << x << "," << y << " ";
  }
  os << "\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\""
     << w - 20 << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
     << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n</svg>\n";
  std::ofstream file(out);
  if (!file) throw IoError("cannot write plot: " + out.string());
  file << os.str();
}

// ---------------------------------------------------------------------------

int run(int argc, char** argv) {
  CLI::App app{"NTK-preserving MLP fusion toolkit"};
  app.require_subcommand(1);

  // gen-fixture -------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-fixture",
                                 "generate a planted-cluster teacher fixture");
  FixtureSpec fixture_spec;
  std::string gen_out, gen_act = "relu";
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--p", fixture_spec.p, "model width");
  gen->add_option("--p-inner", fixture_spec.p_inner, "intermediate width");
  gen->add_option("--k-true", fixture_spec.k_true, "planted cluster count");
  gen->add_option("--noise", fixture_spec.noise, "embedding noise scale");
  gen->add_option("--n", fixture_spec.n, "rows per input matrix");
  gen->add_option("--m", fixture_spec.m, "number of input matrices");
  gen->add_option("--seed", fixture_spec.seed, "generation seed");
  gen->add_option("--activation", gen_act, "relu | gelu_exact | gelu_tanh");
  gen->callback([&] {
    fixture_spec.activation = act_from_name(gen_act);
    write_fixture(fixture_spec, gen_out);
    std::cout << "fixture written to " << gen_out << " (hash "
              << fixture_hash(gen_out) << ")\n";
  });

  // compress ----------------------------------------------------------------
  auto* comp_cmd = app.add_subcommand("compress", "one-shot model compression");
  std::string comp_manifest, comp_method, comp_out;
  std::uint64_t comp_seed = 0;
  MethodFlags comp_flags;
  comp_cmd->add_option("--manifest", comp_manifest, "teacher manifest path")
      ->required();
  comp_cmd
      ->add_option("--method", comp_method,
                   "fuse | fuse_sgd | ablation | sketch | svd | mmd | prune")
      ->required();
  comp_cmd->add_option("--out", comp_out, "output directory")->required();
  comp_cmd->add_option("--seed", comp_seed, "compression seed");
  comp_flags.attach(comp_cmd);
  comp_cmd->callback([&] {
    const LoadedModel loaded = load_model(comp_manifest);
    const MlpWeights& teacher = dense_model(loaded, "compress");
    const MethodSpec spec = comp_flags.to_spec(comp_method);
    const CompressedMlp comp = compress_by_method(teacher, spec, comp_seed);
    const fs::path manifest =
        save_model(comp_out, comp, meta_for(spec, comp_seed), loaded.head);
    std::cout << "compressed manifest " << manifest.string() << "\n";
  });

  // bench -------------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "error benchmark campaign");
  std::string bench_fixture, bench_methods = "fuse,sketch,ablation,mmd,prune,svd";
  std::string bench_seeds = "0,1,2,3,4,5,6,7,8,9";
  std::string bench_out = "report.csv", bench_format = "csv";
  MethodFlags bench_flags;
  bench_cmd->add_option("--fixture", bench_fixture, "fixture directory")
      ->required();
  bench_cmd->add_option("--methods", bench_methods, "comma-separated methods");
  bench_cmd->add_option("--seeds", bench_seeds, "comma-separated seeds");
  bench_cmd->add_option("--out", bench_out, "report path");
  bench_cmd->add_option("--format", bench_format, "csv | json");
  bench_flags.attach(bench_cmd);
  bench_cmd->callback([&] {
    const LoadedModel loaded =
        load_model(fs::path(bench_fixture) / "teacher" / "manifest.json");
    const MlpWeights& teacher = dense_model(loaded, "bench");
    if (!loaded.head) throw std::invalid_argument("bench: fixture lacks a head");
    const std::vector<Matrix> inputs =
        load_inputs(fs::path(bench_fixture) / "inputs");
    std::vector<MethodSpec> methods;
    for (const std::string& m : split_list(bench_methods))
      methods.push_back(bench_flags.to_spec(m));
    std::vector<std::uint64_t> seeds;
    for (const std::string& s : split_list(bench_seeds))
      seeds.push_back(std::stoull(s));
    const BenchReport report = run_bench(teacher, *loaded.head, inputs, methods,
                                         seeds, fixture_hash(bench_fixture));
    write_report(report, bench_out, bench_format);
    std::cout << "report written to " << bench_out << "\n";
  });

  // tune --------------------------------------------------------------------
  auto* tune_cmd =
      app.add_subcommand("tune", "layer-wise MSE tuning of a fused student");
  std::string tune_teacher, tune_student, tune_inputs, tune_out;
  TuneConfig tune_cfg;
  std::string tune_opt = "sgd";
  tune_cmd->add_option("--teacher", tune_teacher, "teacher manifest")->required();
  tune_cmd->add_option("--student", tune_student, "fused student manifest")
      ->required();
  tune_cmd->add_option("--inputs", tune_inputs, "inputs directory")->required();
  tune_cmd->add_option("--out", tune_out, "output directory")->required();
  tune_cmd->add_option("--steps", tune_cfg.steps, "gradient steps");
  tune_cmd->add_option("--lr", tune_cfg.lr, "learning rate");
  tune_cmd->add_option("--optimizer", tune_opt, "sgd | adam");
  tune_cmd->callback([&] {
    const LoadedModel teacher_loaded = load_model(tune_teacher);
    const MlpWeights& teacher = dense_model(teacher_loaded, "tune");
    const LoadedModel student_loaded = load_model(tune_student);
    const CompressedMlp* student =
        std::get_if<CompressedMlp>(&student_loaded.model);
    if (!student)
      throw std::invalid_argument("tune: student manifest is not compressed");
    tune_cfg.optimizer = tune_opt == "adam" ? Optimizer::Adam : Optimizer::Sgd;
    const std::vector<Matrix> inputs = load_inputs(tune_inputs);
    const auto [tuned, traj] = layerwise_tune(teacher, *student, inputs, tune_cfg);
    CompressionMeta meta = student_loaded.meta.value_or(CompressionMeta{});
    meta.method = meta.method.empty() ? "fuse" : meta.method;
    meta.steps = tune_cfg.steps;
    meta.lr = tune_cfg.lr;
    const fs::path manifest =
        save_model(tune_out, tuned, meta, student_loaded.head);
    write_trajectory_csv(fs::path(tune_out) / "trajectory.csv", traj);
    std::cout << "tuned manifest " << manifest.string() << " (loss "
              << traj.values.front() << " -> " << traj.values.back() << ")\n";
  });

  // train -------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand(
      "train", "toy binary-classification training on a fixture teacher");
  std::string train_fixture, train_method = "teacher", train_out = "";
  std::string train_opt = "adam";
  std::uint64_t train_seed = 0;
  std::size_t train_count = 16;
  TuneConfig train_cfg;
  train_cfg.steps = 40;
  train_cfg.lr = 0.01;
  MethodFlags train_flags;
  train_cmd->add_option("--fixture", train_fixture, "fixture directory")
      ->required();
  train_cmd->add_option("--model", train_method,
                        "teacher, or a compression method name");
  train_cmd->add_option("--out", train_out, "trajectory CSV path");
  train_cmd->add_option("--steps", train_cfg.steps, "training steps");
  train_cmd->add_option("--lr", train_cfg.lr, "learning rate");
  train_cmd->add_option("--optimizer", train_opt, "sgd | adam");
  train_cmd->add_option("--seed", train_seed, "dataset/compression seed");
  train_cmd->add_option("--count", train_count, "dataset size");
  train_flags.attach(train_cmd, "mmd-");
  train_cmd->callback([&] {
    const LoadedModel loaded =
        load_model(fs::path(train_fixture) / "teacher" / "manifest.json");
    const MlpWeights& teacher = dense_model(loaded, "train");
    if (!loaded.head) throw std::invalid_argument("train: fixture lacks a head");
    train_cfg.optimizer = train_opt == "adam" ? Optimizer::Adam : Optimizer::Sgd;
    const std::vector<Matrix> inputs =
        load_inputs(fs::path(train_fixture) / "inputs");
    const std::size_t n = inputs.empty() ? 4 : inputs[0].rows;
    const ToyDataset data =
        make_toy_dataset(teacher, *loaded.head, train_count, n, train_seed);
    ToyModel model{teacher, *loaded.head};
    if (train_method != "teacher") {
      model.body = compress_by_method(
          teacher, train_flags.to_spec(train_method), train_seed);
    }
    const LossTrajectory traj = train_toy(model, data, train_cfg, train_seed);
    if (!train_out.empty()) write_trajectory_csv(train_out, traj);
    std::cout << "loss " << traj.values.front() << " -> " << traj.values.back()
              << (train_out.empty() ? "" : " (trajectory " + train_out + ")")
              << "\n";
  });

  // flops -------------------------------------------------------------------
  auto* flops_cmd =
      app.add_subcommand("flops", "self-attention vs FFN FLOPs estimate");
  std::uint64_t fl_n = 512, fl_p = 768, fl_h = 12;
  flops_cmd->set_help_flag("--help", "print help");  // frees -h for heads
  flops_cmd->add_option("--n", fl_n, "sequence length")->required();
  flops_cmd->add_option("--p", fl_p, "model width")->required();
  flops_cmd->add_option("--h", fl_h, "attention heads")->required();
  flops_cmd->callback([&] {
    const FlopsEstimate e = flops_estimate(fl_n, fl_p, fl_h);
    std::cout << "attn " << e.attn << "\n";
    std::cout << "ffn  " << e.ffn << "\n";
    std::cout << "ratio ffn/attn "
              << static_cast<double>(e.ffn) / static_cast<double>(e.attn)
              << "\n";
    if (fl_n < 2 * fl_p)
      std::cout << "note: n < 2p, FFN dominates (crossover at n = "
                << 2 * fl_p << ")\n";
    else if (fl_n == 2 * fl_p)
      std::cout << "note: n = 2p, attention and FFN cost match exactly\n";
  });

  // plot --------------------------------------------------------------------
  auto* plot_cmd = app.add_subcommand(
      "plot", "SVG chart from a bench report or loss trajectory CSV");
  std::string plot_in, plot_out = "plot.svg", plot_metric = "ntk_error_adam";
  plot_cmd->add_option("--input", plot_in, "report.csv or trajectory.csv")
      ->required();
  plot_cmd->add_option("--out", plot_out, "SVG path");
  plot_cmd->add_option("--metric", plot_metric,
                       "bench column: output_error | ntk_error_sgd | "
                       "ntk_error_adam");
  plot_cmd->callback([&] {
    std::ifstream in(plot_in);
    if (!in) throw IoError("cannot read " + plot_in);
    std::string line, header;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (header.empty()) {
        header = line;
        continue;
      }
      lines.push_back(line);
    }
    if (header.rfind("step,loss", 0) == 0) {
      Vector values;
      for (const std::string& l : lines) {
        const auto comma = l.find(',');
        values.push_back(std::stod(l.substr(comma + 1)));
      }
      write_line_chart(plot_out, "loss trajectory: " + plot_in, values);
    } else {
      const std::vector<std::string> cols = split_list(header);
      std::size_t metric_col = cols.size();
      for (std::size_t i = 0; i < cols.size(); ++i)
        if (cols[i] == plot_metric) metric_col = i;
      if (metric_col == cols.size())
        throw std::invalid_argument("plot: column not found: " + plot_metric);
      std::vector<std::pair<std::string, double>> bars;
      for (const std::string& l : lines) {
        // params field is quoted and contains commas; strip it first.
        std::string flat = l;
        const auto q1 = flat.find('"');
        const auto q2 = flat.find('"', q1 + 1);
        if (q1 != std::string::npos && q2 != std::string::npos)
          flat = flat.substr(0, q1) + "params" + flat.substr(q2 + 1);
        const std::vector<std::string> fields = split_list(flat);
        if (fields.size() <= metric_col || fields[2] != "mean") continue;
        bars.emplace_back(fields[0], std::stod(fields[metric_col]));
      }
      write_bar_chart(plot_out, plot_metric + " (mean over seeds)", bars);
    }
    std::cout << "plot written to " << plot_out << "\n";
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    json err;
    err["error"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
}

#include "mlpfuse/bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace mlpfuse {

using nlohmann::json;

std::string MethodSpec::params_string() const {
  std::ostringstream os;
  if (method == "fuse") {
    os << "k=" << k << ",strategy=" << strategy_name(strategy);
  } else if (method == "fuse_sgd" || method == "ablation" || method == "sketch") {
    os << "k=" << k;
  } else if (method == "svd") {
    os << "t=" << t;
  } else if (method == "mmd") {
    os << "k=" << k << ",steps=" << mmd.steps << ",lr=" << mmd.lr;
  } else if (method == "prune") {
    os << "ratio=" << ratio;
  }
  return os.str();
}

CompressedMlp compress_by_method(const MlpWeights& teacher, const MethodSpec& spec,
                                 std::uint64_t seed) {
  if (spec.method == "fuse") return fuse_mlp(teacher, spec.k, seed, spec.strategy);
  if (spec.method == "fuse_sgd") return fuse_mlp_sgd_variant(teacher, spec.k, seed);
  if (spec.method == "ablation") return clustering_ablation(teacher, spec.k, seed);
  if (spec.method == "sketch") return sketch_mlp(teacher, spec.k, seed);
  if (spec.method == "svd") return svd_mlp(teacher, spec.t);
  if (spec.method == "mmd") return mmd_mlp(teacher, spec.k, seed, spec.mmd);
  if (spec.method == "prune") return prune_mlp(teacher, spec.ratio);
  throw std::invalid_argument("unknown method: " + spec.method);
}

BenchReport run_bench(const MlpWeights& teacher, const ScalarHead& head,
                      const std::vector<Matrix>& inputs,
                      const std::vector<MethodSpec>& methods,
                      const std::vector<std::uint64_t>& seeds,
                      const std::string& fixture_hash_hex) {
  require(!seeds.empty(), "run_bench: at least one seed required");
  BenchReport report;
  report.seeds = seeds;
  report.fixture_hash = fixture_hash_hex;

  const KernelMatrix k_sgd = kernel_matrix(teacher, head, inputs, KernelKind::Sgd);
  const KernelMatrix k_adam = kernel_matrix(teacher, head, inputs, KernelKind::Adam);

  for (const MethodSpec& spec : methods) {
    for (std::uint64_t seed : seeds) {
      BenchRow row;
      row.method = spec.method;
      row.params = spec.params_string();
      row.seed = std::to_string(seed);
      const auto start = std::chrono::steady_clock::now();
      try {
        const CompressedMlp comp = compress_by_method(teacher, spec, seed);
        row.output_error = output_error(teacher, comp, inputs);
        row.ntk_error_sgd =
            ntk_error(k_sgd, kernel_matrix(comp, head, inputs, KernelKind::Sgd));
        row.ntk_error_adam =
            ntk_error(k_adam, kernel_matrix(comp, head, inputs, KernelKind::Adam));
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
      }
      row.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - start)
                        .count();
      report.rows.push_back(std::move(row));
    }
  }

  // mean ± std summary rows per method, over non-failed seeds.
  for (const MethodSpec& spec : methods) {
    std::vector<const BenchRow*> ok;
    for (const BenchRow& row : report.rows) {
      if (row.method == spec.method && !row.failed && row.seed != "mean" &&
          row.seed != "std")
        ok.push_back(&row);
    }
    if (ok.empty()) continue;
    auto stats = [&](auto getter) {
      double mean = 0.0;
      for (const BenchRow* r : ok) mean += getter(*r);
      mean /= static_cast<double>(ok.size());
      double var = 0.0;
      for (const BenchRow* r : ok) {
        const double d = getter(*r) - mean;
        var += d * d;
      }
      var /= static_cast<double>(ok.size());
      return std::make_pair(mean, std::sqrt(var));
    };
    const auto out = stats([](const BenchRow& r) { return r.output_error; });
    const auto sgd = stats([](const BenchRow& r) { return r.ntk_error_sgd; });
    const auto adam = stats([](const BenchRow& r) { return r.ntk_error_adam; });
    const auto secs = stats([](const BenchRow& r) { return r.seconds; });
    BenchRow mean_row{spec.method, spec.params_string(), "mean",
                      out.first,   sgd.first,            adam.first,
                      secs.first,  false,                ""};
    BenchRow std_row{spec.method, spec.params_string(), "std",
                     out.second,  sgd.second,           adam.second,
                     secs.second, false,                ""};
    report.rows.push_back(std::move(mean_row));
    report.rows.push_back(std::move(std_row));
  }
  return report;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

}  // namespace

std::string report_to_csv(const BenchReport& report) {
  std::ostringstream os;
  os << "# " << BenchReport::kOutputMetric << "\n";
  os << "# " << BenchReport::kNtkMetric << "\n";
  os << "# fixture_hash=" << report.fixture_hash << "\n";
  os << "# seeds=";
  for (std::size_t i = 0; i < report.seeds.size(); ++i)
    os << (i ? "," : "") << report.seeds[i];
  os << "\n";
  // Wall-clock timing is deliberately left out so re-running an identical
  // (fixture, methods, seeds) campaign reproduces the report byte for byte.
  os << "method,params,seed,output_error,ntk_error_sgd,ntk_error_adam,status\n";
  for (const BenchRow& r : report.rows) {
    os << r.method << ",\"" << r.params << "\"," << r.seed << ",";
    if (r.failed) {
      os << ",,,failed:" << r.error << "\n";
    } else {
      os << fmt(r.output_error) << "," << fmt(r.ntk_error_sgd) << ","
         << fmt(r.ntk_error_adam) << ",ok\n";
    }
  }
  return os.str();
}

std::string report_to_json(const BenchReport& report) {
  json j;
  j["metrics"] = {BenchReport::kOutputMetric, BenchReport::kNtkMetric};
  j["fixture_hash"] = report.fixture_hash;
  j["seeds"] = report.seeds;
  json rows = json::array();
  for (const BenchRow& r : report.rows) {
    json row;
    row["method"] = r.method;
    row["params"] = r.params;
    row["seed"] = r.seed;
    if (r.failed) {
      row["status"] = "failed";
      row["error"] = r.error;
    } else {
      row["status"] = "ok";
      row["output_error"] = r.output_error;
      row["ntk_error_sgd"] = r.ntk_error_sgd;
      row["ntk_error_adam"] = r.ntk_error_adam;
    }
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

void write_report(const BenchReport& report, const std::filesystem::path& out,
                  const std::string& format) {
  std::ofstream os(out);
  if (!os) throw IoError("cannot write report: " + out.string());
  if (format == "csv") {
    os << report_to_csv(report);
  } else if (format == "json") {
    os << report_to_json(report);
  } else {
    throw std::invalid_argument("unknown report format: " + format);
  }
}

double trajectory_distance(const LossTrajectory& a, const LossTrajectory& b) {
  require(a.values.size() == b.values.size(),
          "trajectory_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return s / static_cast<double>(a.values.size());
}

}  // namespace mlpfuse

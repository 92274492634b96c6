#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mlpfuse/compress.hpp"
#include "mlpfuse/io.hpp"
#include "mlpfuse/ntk.hpp"
#include "mlpfuse/tune.hpp"

namespace mlpfuse {

// One benchmark cell: a compression method with its hyperparameters.
struct MethodSpec {
  std::string method;  // fuse | fuse_sgd | ablation | sketch | svd | mmd | prune
  std::size_t k{16};
  std::size_t t{16};
  double ratio{0.75};
  FusedStrategy strategy{FusedStrategy::StandaloneP};
  MmdOptions mmd{};

  std::string params_string() const;
};

CompressedMlp compress_by_method(const MlpWeights& teacher, const MethodSpec& spec,
                                 std::uint64_t seed);

struct BenchRow {
  std::string method;
  std::string params;
  std::string seed;  // numeric, or "mean"/"std" for summary rows
  double output_error{0.0};
  double ntk_error_sgd{0.0};
  double ntk_error_adam{0.0};
  double seconds{0.0};
  bool failed{false};
  std::string error;
};

struct BenchReport {
  std::vector<BenchRow> rows;  // per-seed rows then summary rows
  std::vector<std::uint64_t> seeds;
  std::string fixture_hash;
  // Metric definitions recorded verbatim in every report header.
  static constexpr const char* kOutputMetric =
      "output = mean per-sample Frobenius distance";
  static constexpr const char* kNtkMetric =
      "ntk = Frobenius norm of kernel-matrix difference (sgd and adam kinds)";
};

// For each (method, seed): compress the teacher, measure output error and
// both NTK errors against the teacher kernels over the fixture inputs.
// Failures are recorded per row; the run continues.
BenchReport run_bench(const MlpWeights& teacher, const ScalarHead& head,
                      const std::vector<Matrix>& inputs,
                      const std::vector<MethodSpec>& methods,
                      const std::vector<std::uint64_t>& seeds,
                      const std::string& fixture_hash_hex);

std::string report_to_csv(const BenchReport& report);
std::string report_to_json(const BenchReport& report);
void write_report(const BenchReport& report, const std::filesystem::path& out,
                  const std::string& format);

// Mean squared distance between two loss trajectories.
double trajectory_distance(const LossTrajectory& a, const LossTrajectory& b);

}  // namespace mlpfuse

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "mlpfuse/compress.hpp"
#include "mlpfuse/mlp.hpp"

namespace mlpfuse {

// Binary tensor container: magic "NTKF", u32 version = 1, u32 ndim,
// ndim × u32 dims, then row-major little-endian float64 payload.
struct Tensor {
  std::vector<std::uint32_t> dims;
  Vector data;
};

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

Tensor tensor_from_matrix(const Matrix& m);
Tensor tensor_from_vector(const Vector& v);
Matrix matrix_from_tensor(const Tensor& t);
Vector vector_from_tensor(const Tensor& t);

// Compression metadata recorded in compressed-model manifests.
struct CompressionMeta {
  std::string method;
  std::optional<std::size_t> k;
  std::optional<std::size_t> t;
  std::optional<double> ratio;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::optional<std::size_t> steps;
  std::optional<double> lr;
  std::optional<double> bandwidth;
};

// A model directory: manifest.json plus TensorFiles referenced by it.
struct LoadedModel {
  std::variant<MlpWeights, CompressedMlp> model;
  std::optional<ScalarHead> head;
  std::optional<CompressionMeta> meta;
};

std::filesystem::path save_model(const std::filesystem::path& dir,
                                 const MlpWeights& mlp,
                                 const std::optional<ScalarHead>& head = {});
std::filesystem::path save_model(const std::filesystem::path& dir,
                                 const CompressedMlp& comp,
                                 const CompressionMeta& meta,
                                 const std::optional<ScalarHead>& head = {});
LoadedModel load_model(const std::filesystem::path& manifest_path);

// Evaluation inputs: inputs_000.ntk ... in a directory.
void save_inputs(const std::filesystem::path& dir,
                 const std::vector<Matrix>& inputs);
std::vector<Matrix> load_inputs(const std::filesystem::path& dir);

// FNV-1a over the bytes of every tensor file in the directory (sorted by
// name); identifies a fixture in benchmark reports.
std::string fixture_hash(const std::filesystem::path& dir);

struct FixtureSpec {
  std::size_t p{16};
  std::size_t p_inner{64};
  std::size_t k_true{16};
  double noise{0.05};
  std::size_t n{8};
  std::size_t m{32};
  std::uint64_t seed{0};
  ActKind activation{ActKind::Relu};
};

struct Fixture {
  MlpWeights teacher;
  ScalarHead head;
  std::vector<Matrix> inputs;
};

// Teacher with planted cluster structure: k_true random centroid sub-MLPs,
// each replicated, plus per-entry Gaussian noise. noise = 0 is the lossless
// fixture.
Fixture make_fixture(const FixtureSpec& spec);

// Writes teacher manifest + tensors and the input set under out_dir.
void write_fixture(const FixtureSpec& spec, const std::filesystem::path& out_dir);

}  // namespace mlpfuse

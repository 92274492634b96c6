#include "mlpfuse/io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mlpfuse/rng.hpp"

namespace mlpfuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'N', 'T', 'K', 'F'};
constexpr std::uint32_t kVersion = 1;

void write_u32_le(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32_le(std::istream& is) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

void write_f64_le(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

double read_f64_le(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

void save_tensor(const fs::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(kMagic, 4);
  write_u32_le(os, kVersion);
  write_u32_le(os, static_cast<std::uint32_t>(t.dims.size()));
  std::size_t count = 1;
  for (std::uint32_t d : t.dims) {
    write_u32_le(os, d);
    count *= d;
  }
  require(count == t.data.size(), "save_tensor: payload/dims mismatch");
  for (double v : t.data) write_f64_le(os, v);
  if (!os) throw IoError("write failure: " + path.string());
}

Tensor load_tensor(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("bad magic in tensor file: " + path.string());
  const std::uint32_t version = read_u32_le(is);
  if (version != kVersion)
    throw IoError("unsupported tensor version in: " + path.string());
  const std::uint32_t ndim = read_u32_le(is);
  Tensor t;
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    t.dims.push_back(read_u32_le(is));
    count *= t.dims.back();
  }
  t.data.resize(count);
  for (double& v : t.data) v = read_f64_le(is);
  if (!is) throw IoError("truncated tensor file: " + path.string());
  return t;
}

Tensor tensor_from_matrix(const Matrix& m) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)};
  t.data = m.data;
  return t;
}

Tensor tensor_from_vector(const Vector& v) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(v.size())};
  t.data = v;
  return t;
}

Matrix matrix_from_tensor(const Tensor& t) {
  require(t.dims.size() == 2, "matrix_from_tensor: ndim != 2");
  Matrix m(t.dims[0], t.dims[1]);
  m.data = t.data;
  return m;
}

Vector vector_from_tensor(const Tensor& t) {
  require(t.dims.size() == 1, "vector_from_tensor: ndim != 1");
  return t.data;
}

// ---------------------------------------------------------------------------
// Manifests

namespace {

void put_meta(json& j, const CompressionMeta& meta) {
  json c;
  c["method"] = meta.method;
  if (meta.k) c["k"] = *meta.k;
  if (meta.t) c["t"] = *meta.t;
  if (meta.ratio) c["ratio"] = *meta.ratio;
  if (meta.seed) c["seed"] = *meta.seed;
  if (meta.strategy) c["strategy"] = *meta.strategy;
  if (meta.steps) c["steps"] = *meta.steps;
  if (meta.lr) c["lr"] = *meta.lr;
  if (meta.bandwidth) c["bandwidth"] = *meta.bandwidth;
  j["compression"] = c;
}

CompressionMeta get_meta(const json& c) {
  CompressionMeta meta;
  meta.method = c.at("method").get<std::string>();
  if (c.contains("k")) meta.k = c["k"].get<std::size_t>();
  if (c.contains("t")) meta.t = c["t"].get<std::size_t>();
  if (c.contains("ratio")) meta.ratio = c["ratio"].get<double>();
  if (c.contains("seed")) meta.seed = c["seed"].get<std::uint64_t>();
  if (c.contains("strategy")) meta.strategy = c["strategy"].get<std::string>();
  if (c.contains("steps")) meta.steps = c["steps"].get<std::size_t>();
  if (c.contains("lr")) meta.lr = c["lr"].get<double>();
  if (c.contains("bandwidth")) meta.bandwidth = c["bandwidth"].get<double>();
  return meta;
}

void save_named(const fs::path& dir, json& files, const std::string& name,
                const Tensor& t) {
  const std::string fname = name + ".ntk";
  save_tensor(dir / fname, t);
  files[name] = fname;
}

Tensor load_named(const fs::path& dir, const json& files, const std::string& name) {
  if (!files.contains(name))
    throw IoError("manifest missing tensor entry: " + name);
  return load_tensor(dir / files[name].get<std::string>());
}

void write_manifest(const fs::path& dir, const json& j) {
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cannot write manifest in: " + dir.string());
  os << j.dump(2) << "\n";
}

}  // namespace

std::filesystem::path save_model(const fs::path& dir, const MlpWeights& mlp,
                                 const std::optional<ScalarHead>& head) {
  fs::create_directories(dir);
  json j;
  j["p"] = mlp.p();
  j["p_I"] = mlp.p_inner();
  j["activation"] = act_name(mlp.act.kind);
  json files;
  save_named(dir, files, "w1", tensor_from_matrix(mlp.w1));
  save_named(dir, files, "b1", tensor_from_vector(mlp.b1));
  save_named(dir, files, "w2", tensor_from_matrix(mlp.w2));
  save_named(dir, files, "b2", tensor_from_vector(mlp.b2));
  if (head) save_named(dir, files, "head", tensor_from_vector(head->r));
  j["files"] = files;
  write_manifest(dir, j);
  return dir / "manifest.json";
}

std::filesystem::path save_model(const fs::path& dir, const CompressedMlp& comp,
                                 const CompressionMeta& meta,
                                 const std::optional<ScalarHead>& head) {
  fs::create_directories(dir);
  json j;
  j["p"] = comp.p();
  j["activation"] = act_name(comp.act.kind);
  json files;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FusedMlp>) {
          save_named(dir, files, "w1t", tensor_from_matrix(m.w1t));
          save_named(dir, files, "b1t", tensor_from_vector(m.b1t));
          save_named(dir, files, "w2t", tensor_from_matrix(m.w2t));
          save_named(dir, files, "p_diag", tensor_from_vector(m.p_diag));
          save_named(dir, files, "b2", tensor_from_vector(m.b2));
          j["strategy"] = strategy_name(m.strategy);
          j["variant"] = "fused";
        } else if constexpr (std::is_same_v<T, SgdFusedMlp>) {
          save_named(dir, files, "w1c", tensor_from_matrix(m.w1c));
          save_named(dir, files, "b1c", tensor_from_vector(m.b1c));
          save_named(dir, files, "w2c", tensor_from_matrix(m.w2c));
          save_named(dir, files, "b2", tensor_from_vector(m.b2));
          j["variant"] = "sgd_fused";
        } else if constexpr (std::is_same_v<T, AblationMlp>) {
          save_named(dir, files, "w1a", tensor_from_matrix(m.w1a));
          save_named(dir, files, "b1a", tensor_from_vector(m.b1a));
          save_named(dir, files, "w2a", tensor_from_matrix(m.w2a));
          save_named(dir, files, "b2", tensor_from_vector(m.b2));
          j["variant"] = "ablation";
        } else if constexpr (std::is_same_v<T, ScaledDenseMlp>) {
          save_named(dir, files, "w1s", tensor_from_matrix(m.w1s));
          save_named(dir, files, "b1s", tensor_from_vector(m.b1s));
          save_named(dir, files, "w2s", tensor_from_matrix(m.w2s));
          save_named(dir, files, "b2", tensor_from_vector(m.b2));
          j["out_scale"] = m.out_scale;
          j["variant"] = "scaled_dense";
        } else if constexpr (std::is_same_v<T, FactoredMlp>) {
          save_named(dir, files, "u1", tensor_from_matrix(m.f1.u));
          save_named(dir, files, "s1", tensor_from_vector(m.f1.s));
          save_named(dir, files, "v1", tensor_from_matrix(m.f1.v));
          save_named(dir, files, "u2", tensor_from_matrix(m.f2.u));
          save_named(dir, files, "s2", tensor_from_vector(m.f2.s));
          save_named(dir, files, "v2", tensor_from_matrix(m.f2.v));
          save_named(dir, files, "b1", tensor_from_vector(m.b1));
          save_named(dir, files, "b2", tensor_from_vector(m.b2));
          j["variant"] = "factored";
        } else {
          save_named(dir, files, "w1", tensor_from_matrix(m.w1));
          save_named(dir, files, "b1", tensor_from_vector(m.b1));
          save_named(dir, files, "w2", tensor_from_matrix(m.w2));
          save_named(dir, files, "b2", tensor_from_vector(m.b2));
          save_named(dir, files, "m1", tensor_from_matrix(m.m1));
          save_named(dir, files, "m2", tensor_from_matrix(m.m2));
          j["variant"] = "masked";
        }
      },
      comp.body);
  if (head) save_named(dir, files, "head", tensor_from_vector(head->r));
  j["files"] = files;
  put_meta(j, meta);
  write_manifest(dir, j);
  return dir / "manifest.json";
}

LoadedModel load_model(const fs::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw IoError("cannot open manifest: " + manifest_path.string());
  json j;
  is >> j;
  const fs::path dir = manifest_path.parent_path();
  const json& files = j.at("files");

  LoadedModel out;
  if (files.contains("head")) {
    out.head = ScalarHead{vector_from_tensor(load_named(dir, files, "head"))};
  }

  if (!j.contains("compression")) {
    MlpWeights mlp;
    mlp.w1 = matrix_from_tensor(load_named(dir, files, "w1"));
    mlp.b1 = vector_from_tensor(load_named(dir, files, "b1"));
    mlp.w2 = matrix_from_tensor(load_named(dir, files, "w2"));
    mlp.b2 = vector_from_tensor(load_named(dir, files, "b2"));
    mlp.act = Activation{act_from_name(j.at("activation").get<std::string>())};
    mlp.validate();
    require(mlp.p() == j.at("p").get<std::size_t>(), "manifest: p mismatch");
    require(mlp.p_inner() == j.at("p_I").get<std::size_t>(),
            "manifest: p_I mismatch");
    out.model = std::move(mlp);
    return out;
  }

  out.meta = get_meta(j.at("compression"));
  const Activation act{act_from_name(j.at("activation").get<std::string>())};
  const std::string variant = j.at("variant").get<std::string>();
  CompressedMlp comp;
  comp.act = act;
  if (variant == "fused") {
    FusedMlp m;
    m.w1t = matrix_from_tensor(load_named(dir, files, "w1t"));
    m.b1t = vector_from_tensor(load_named(dir, files, "b1t"));
    m.w2t = matrix_from_tensor(load_named(dir, files, "w2t"));
    m.p_diag = vector_from_tensor(load_named(dir, files, "p_diag"));
    m.b2 = vector_from_tensor(load_named(dir, files, "b2"));
    m.strategy = strategy_from_name(j.at("strategy").get<std::string>());
    comp.body = std::move(m);
  } else if (variant == "sgd_fused") {
    SgdFusedMlp m;
    m.w1c = matrix_from_tensor(load_named(dir, files, "w1c"));
    m.b1c = vector_from_tensor(load_named(dir, files, "b1c"));
    m.w2c = matrix_from_tensor(load_named(dir, files, "w2c"));
    m.b2 = vector_from_tensor(load_named(dir, files, "b2"));
    comp.body = std::move(m);
  } else if (variant == "ablation") {
    AblationMlp m;
    m.w1a = matrix_from_tensor(load_named(dir, files, "w1a"));
    m.b1a = vector_from_tensor(load_named(dir, files, "b1a"));
    m.w2a = matrix_from_tensor(load_named(dir, files, "w2a"));
    m.b2 = vector_from_tensor(load_named(dir, files, "b2"));
    comp.body = std::move(m);
  } else if (variant == "scaled_dense") {
    ScaledDenseMlp m;
    m.w1s = matrix_from_tensor(load_named(dir, files, "w1s"));
    m.b1s = vector_from_tensor(load_named(dir, files, "b1s"));
    m.w2s = matrix_from_tensor(load_named(dir, files, "w2s"));
    m.b2 = vector_from_tensor(load_named(dir, files, "b2"));
    m.out_scale = j.at("out_scale").get<double>();
    comp.body = std::move(m);
  } else if (variant == "factored") {
    FactoredMlp m;
    m.f1.u = matrix_from_tensor(load_named(dir, files, "u1"));
    m.f1.s = vector_from_tensor(load_named(dir, files, "s1"));
    m.f1.v = matrix_from_tensor(load_named(dir, files, "v1"));
    m.f2.u = matrix_from_tensor(load_named(dir, files, "u2"));
    m.f2.s = vector_from_tensor(load_named(dir, files, "s2"));
    m.f2.v = matrix_from_tensor(load_named(dir, files, "v2"));
    m.b1 = vector_from_tensor(load_named(dir, files, "b1"));
    m.b2 = vector_from_tensor(load_named(dir, files, "b2"));
    comp.body = std::move(m);
  } else if (variant == "masked") {
    MaskedMlp m;
    m.w1 = matrix_from_tensor(load_named(dir, files, "w1"));
    m.b1 = vector_from_tensor(load_named(dir, files, "b1"));
    m.w2 = matrix_from_tensor(load_named(dir, files, "w2"));
    m.b2 = vector_from_tensor(load_named(dir, files, "b2"));
    m.m1 = matrix_from_tensor(load_named(dir, files, "m1"));
    m.m2 = matrix_from_tensor(load_named(dir, files, "m2"));
    comp.body = std::move(m);
  } else {
    throw IoError("unknown compressed variant: " + variant);
  }
  out.model = std::move(comp);
  return out;
}

void save_inputs(const fs::path& dir, const std::vector<Matrix>& inputs) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "inputs_%03zu.ntk", i);
    save_tensor(dir / name, tensor_from_matrix(inputs[i]));
  }
}

std::vector<Matrix> load_inputs(const fs::path& dir) {
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".ntk" &&
        entry.path().filename().string().starts_with("inputs_"))
      paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw IoError("no input tensors in: " + dir.string());
  std::vector<Matrix> out;
  for (const auto& p : paths) out.push_back(matrix_from_tensor(load_tensor(p)));
  return out;
}

std::string fixture_hash(const fs::path& dir) {
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ntk")
      paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&](unsigned char byte) {
    h ^= byte;
    h *= 0x100000001B3ULL;
  };
  for (const auto& p : paths) {
    for (char ch : p.filename().string()) mix(static_cast<unsigned char>(ch));
    std::ifstream is(p, std::ios::binary);
    char buf[4096];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
      for (std::streamsize i = 0; i < is.gcount(); ++i)
        mix(static_cast<unsigned char>(buf[i]));
      if (!is) break;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

Fixture make_fixture(const FixtureSpec& spec) {
  require(spec.k_true >= 1 && spec.k_true <= spec.p_inner,
          "make_fixture: k_true out of range");
  require(spec.noise >= 0.0, "make_fixture: noise must be >= 0");
  Rng rng(spec.seed);

  const std::size_t d = 2 * spec.p + 1;
  const double centroid_std = 1.0 / std::sqrt(static_cast<double>(spec.p));
  Matrix centroids(spec.k_true, d);
  for (double& v : centroids.data) v = centroid_std * rng.next_normal();

  Matrix emb(spec.p_inner, d);
  for (std::size_t i = 0; i < spec.p_inner; ++i) {
    const std::size_t c = i % spec.k_true;
    for (std::size_t j = 0; j < d; ++j)
      emb(i, j) = centroids(c, j) + spec.noise * rng.next_normal();
  }

  Vector b2(spec.p);
  for (double& v : b2) v = centroid_std * rng.next_normal();

  Fixture fx;
  fx.teacher =
      weights_from_embeddings(emb, spec.p, b2, Activation{spec.activation});
  fx.head.r.resize(spec.p);
  for (double& v : fx.head.r) v = rng.next_normal();
  for (std::size_t i = 0; i < spec.m; ++i) {
    Matrix x(spec.n, spec.p);
    for (double& v : x.data) v = rng.next_normal();
    fx.inputs.push_back(std::move(x));
  }
  return fx;
}

void write_fixture(const FixtureSpec& spec, const fs::path& out_dir) {
  const Fixture fx = make_fixture(spec);
  fs::create_directories(out_dir);
  save_model(out_dir / "teacher", fx.teacher, fx.head);
  save_inputs(out_dir / "inputs", fx.inputs);
  json j;
  j["p"] = spec.p;
  j["p_I"] = spec.p_inner;
  j["k_true"] = spec.k_true;
  j["noise"] = spec.noise;
  j["n"] = spec.n;
  j["m"] = spec.m;
  j["seed"] = spec.seed;
  j["activation"] = act_name(spec.activation);
  j["hash"] = fixture_hash(out_dir);
  std::ofstream os(out_dir / "fixture.json");
  if (!os) throw IoError("cannot write fixture.json in: " + out_dir.string());
  os << j.dump(2) << "\n";
}

}  // namespace mlpfuse

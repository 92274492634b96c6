// Python bindings for the core operations: forward/gradients, every
// compressor, NTK kernels and errors, layer-wise tuning, and fixture plumbing.
// Matrices cross the boundary as 2-D float64 numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mlpfuse/bench.hpp"
#include "mlpfuse/compress.hpp"
#include "mlpfuse/io.hpp"
#include "mlpfuse/ntk.hpp"
#include "mlpfuse/rng.hpp"
#include "mlpfuse/svd.hpp"
#include "mlpfuse/tune.hpp"

namespace py = pybind11;
using namespace mlpfuse;

namespace {

Matrix matrix_from_numpy(const py::array_t<double>& arr) {
  const auto buf = arr.request();
  if (buf.ndim != 2) throw std::invalid_argument("expected a 2-D array");
  Matrix m(static_cast<std::size_t>(buf.shape[0]),
           static_cast<std::size_t>(buf.shape[1]));
  const auto view = arr.unchecked<2>();
  for (py::ssize_t i = 0; i < buf.shape[0]; ++i)
    for (py::ssize_t j = 0; j < buf.shape[1]; ++j)
      m(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = view(i, j);
  return m;
}

py::array_t<double> numpy_from_matrix(const Matrix& m) {
  py::array_t<double> arr({m.rows, m.cols});
  auto view = arr.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j)
      view(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j)) = m(i, j);
  return arr;
}

std::vector<Matrix> matrices_from_numpy(const std::vector<py::array_t<double>>& arrs) {
  std::vector<Matrix> out;
  out.reserve(arrs.size());
  for (const auto& a : arrs) out.push_back(matrix_from_numpy(a));
  return out;
}

MlpWeights make_weights(const py::array_t<double>& w1, const Vector& b1,
                        const py::array_t<double>& w2, const Vector& b2,
                        const std::string& activation) {
  MlpWeights m{matrix_from_numpy(w1), b1, matrix_from_numpy(w2), b2,
               Activation{act_from_name(activation)}};
  m.validate();
  return m;
}

}  // namespace

PYBIND11_MODULE(_mlpfuse, m) {
  m.doc() = "NTK-preserving MLP fusion core";

  py::register_exception<NumericFailure>(m, "NumericFailure");
  py::register_exception<UnsupportedActivation>(m, "UnsupportedActivation");
  py::register_exception<IoError>(m, "IoError");

  py::class_<MlpWeights>(m, "MlpWeights")
      .def(py::init(&make_weights), py::arg("w1"), py::arg("b1"), py::arg("w2"),
           py::arg("b2"), py::arg("activation") = "relu")
      .def_property_readonly("w1",
                             [](const MlpWeights& w) { return numpy_from_matrix(w.w1); })
      .def_property_readonly("b1", [](const MlpWeights& w) { return w.b1; })
      .def_property_readonly("w2",
                             [](const MlpWeights& w) { return numpy_from_matrix(w.w2); })
      .def_property_readonly("b2", [](const MlpWeights& w) { return w.b2; })
      .def_property_readonly(
          "activation", [](const MlpWeights& w) { return act_name(w.act.kind); })
      .def_property_readonly("p", &MlpWeights::p)
      .def_property_readonly("p_inner", &MlpWeights::p_inner);

  py::class_<ScalarHead>(m, "ScalarHead")
      .def(py::init([](const Vector& r) { return ScalarHead{r}; }), py::arg("r"))
      .def_property_readonly("r", [](const ScalarHead& h) { return h.r; });

  py::class_<CompressedMlp>(m, "CompressedMlp")
      .def_property_readonly("p", &CompressedMlp::p)
      .def_property_readonly("inner_dim", &CompressedMlp::inner_dim)
      .def_property_readonly("variant", [](const CompressedMlp& c) {
        const char* names[] = {"fused",        "sgd_fused", "ablation",
                               "scaled_dense", "factored",  "masked"};
        return std::string(names[c.body.index()]);
      });

  py::class_<GradBundle>(m, "GradBundle")
      .def_property_readonly("dw1",
                             [](const GradBundle& g) { return numpy_from_matrix(g.dw1); })
      .def_property_readonly("db1", [](const GradBundle& g) { return g.db1; })
      .def_property_readonly("dw2",
                             [](const GradBundle& g) { return numpy_from_matrix(g.dw2); })
      .def_property_readonly("db2", [](const GradBundle& g) { return g.db2; });

  py::class_<NtkTerms>(m, "NtkTerms")
      .def_readonly("w1_term", &NtkTerms::w1_term)
      .def_readonly("b1_term", &NtkTerms::b1_term)
      .def_readonly("w2_term", &NtkTerms::w2_term)
      .def_readonly("b2_term", &NtkTerms::b2_term)
      .def_readonly("total", &NtkTerms::total);

  py::class_<BoundReport>(m, "BoundReport")
      .def_readonly("epsilon", &BoundReport::epsilon)
      .def_readonly("c1", &BoundReport::c1)
      .def_readonly("c2", &BoundReport::c2)
      .def_readonly("cx", &BoundReport::cx)
      .def_readonly("lipschitz", &BoundReport::lipschitz)
      .def_readonly("bound", &BoundReport::bound)
      .def_readonly("measured", &BoundReport::measured);

  m.def("seeded_gaussian",
        [](std::size_t rows, std::size_t cols, std::uint64_t seed, double std_dev) {
          return numpy_from_matrix(seeded_gaussian(rows, cols, seed, std_dev));
        },
        py::arg("rows"), py::arg("cols"), py::arg("seed"), py::arg("std") = 1.0);

  m.def("forward",
        [](const MlpWeights& w, const py::array_t<double>& x) {
          return numpy_from_matrix(forward(w, matrix_from_numpy(x)));
        },
        py::arg("mlp"), py::arg("x"));
  m.def("forward_compressed",
        [](const CompressedMlp& c, const py::array_t<double>& x) {
          return numpy_from_matrix(forward_compressed(c, matrix_from_numpy(x)));
        },
        py::arg("comp"), py::arg("x"));
  m.def("head_value",
        [](const MlpWeights& w, const ScalarHead& h, const py::array_t<double>& x) {
          return head_value_and_upstream(w, h, matrix_from_numpy(x)).value;
        },
        py::arg("mlp"), py::arg("head"), py::arg("x"));
  m.def("mlp_gradients",
        [](const MlpWeights& w, const py::array_t<double>& x,
           const py::array_t<double>& g) {
          return mlp_gradients(w, matrix_from_numpy(x), matrix_from_numpy(g));
        },
        py::arg("mlp"), py::arg("x"), py::arg("g"));
  m.def("sub_mlp_embeddings", [](const MlpWeights& w) {
    return numpy_from_matrix(sub_mlp_embeddings(w));
  });
  m.def("flops_estimate", [](std::uint64_t n, std::uint64_t p, std::uint64_t h) {
    const FlopsEstimate e = flops_estimate(n, p, h);
    return py::make_tuple(e.attn, e.ffn);
  });

  m.def("kmeans",
        [](const py::array_t<double>& points, std::size_t k, std::uint64_t seed) {
          const KmeansResult r = kmeans(matrix_from_numpy(points), k, seed);
          return py::make_tuple(r.labels, numpy_from_matrix(r.centroids),
                                r.objective);
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 0);

  m.def("fuse_mlp",
        [](const MlpWeights& w, std::size_t k, std::uint64_t seed,
           const std::string& strategy) {
          return fuse_mlp(w, k, seed, strategy_from_name(strategy));
        },
        py::arg("mlp"), py::arg("k"), py::arg("seed") = 0,
        py::arg("strategy") = "standalone_p");
  m.def("fuse_mlp_sgd_variant", &fuse_mlp_sgd_variant, py::arg("mlp"),
        py::arg("k"), py::arg("seed") = 0);
  m.def("clustering_ablation", &clustering_ablation, py::arg("mlp"),
        py::arg("k"), py::arg("seed") = 0);
  m.def("sketch_mlp", &sketch_mlp, py::arg("mlp"), py::arg("k"),
        py::arg("seed") = 0);
  m.def("svd_mlp", &svd_mlp, py::arg("mlp"), py::arg("t"));
  m.def("prune_mlp", &prune_mlp, py::arg("mlp"), py::arg("ratio"));
  m.def("mmd_mlp",
        [](const MlpWeights& w, std::size_t k, std::uint64_t seed,
           std::size_t steps, double lr, std::optional<double> bandwidth) {
          MmdOptions opts;
          opts.steps = steps;
          opts.lr = lr;
          opts.bandwidth = bandwidth;
          return mmd_mlp(w, k, seed, opts);
        },
        py::arg("mlp"), py::arg("k"), py::arg("seed") = 0,
        py::arg("steps") = 200, py::arg("lr") = 0.05,
        py::arg("bandwidth") = std::nullopt);

  m.def("sgd_ntk",
        [](const MlpWeights& w, const ScalarHead& h, const py::array_t<double>& x,
           const py::array_t<double>& z) {
          return sgd_ntk(w, h, matrix_from_numpy(x), matrix_from_numpy(z));
        });
  m.def("adam_ntk",
        [](const MlpWeights& w, const ScalarHead& h, const py::array_t<double>& x,
           const py::array_t<double>& z) {
          return adam_ntk(w, h, matrix_from_numpy(x), matrix_from_numpy(z));
        });
  m.def("kernel_matrix",
        [](const MlpWeights& w, const ScalarHead& h,
           const std::vector<py::array_t<double>>& inputs, const std::string& kind) {
          const KernelKind kk = kind == "adam" ? KernelKind::Adam : KernelKind::Sgd;
          return numpy_from_matrix(
              kernel_matrix(w, h, matrices_from_numpy(inputs), kk).entries);
        },
        py::arg("mlp"), py::arg("head"), py::arg("inputs"), py::arg("kind") = "sgd");
  m.def("kernel_matrix_compressed",
        [](const CompressedMlp& c, const ScalarHead& h,
           const std::vector<py::array_t<double>>& inputs, const std::string& kind) {
          const KernelKind kk = kind == "adam" ? KernelKind::Adam : KernelKind::Sgd;
          return numpy_from_matrix(
              kernel_matrix(c, h, matrices_from_numpy(inputs), kk).entries);
        },
        py::arg("comp"), py::arg("head"), py::arg("inputs"), py::arg("kind") = "sgd");
  m.def("output_error",
        [](const MlpWeights& w, const CompressedMlp& c,
           const std::vector<py::array_t<double>>& inputs) {
          return output_error(w, c, matrices_from_numpy(inputs));
        });

  m.def("layerwise_tune",
        [](const MlpWeights& teacher, const CompressedMlp& student,
           const std::vector<py::array_t<double>>& inputs, std::size_t steps,
           double lr, const std::string& optimizer) {
          TuneConfig cfg;
          cfg.steps = steps;
          cfg.lr = lr;
          cfg.optimizer = optimizer == "adam" ? Optimizer::Adam : Optimizer::Sgd;
          auto [tuned, traj] =
              layerwise_tune(teacher, student, matrices_from_numpy(inputs), cfg);
          return py::make_tuple(tuned, traj.values);
        },
        py::arg("teacher"), py::arg("student"), py::arg("inputs"),
        py::arg("steps") = 100, py::arg("lr") = 1e-2, py::arg("optimizer") = "sgd");
  m.def("check_output_bound",
        [](const MlpWeights& teacher, std::size_t k, std::uint64_t seed,
           const py::array_t<double>& x) {
          return check_output_bound(teacher, cluster_sub_mlps(teacher, k, seed),
                                    matrix_from_numpy(x));
        },
        py::arg("teacher"), py::arg("k"), py::arg("seed"), py::arg("x"));

  m.def("truncated_svd",
        [](const py::array_t<double>& a, std::size_t t) {
          const SvdFactors f = truncated_svd(matrix_from_numpy(a), t);
          return py::make_tuple(numpy_from_matrix(f.u), f.s, numpy_from_matrix(f.v));
        },
        py::arg("a"), py::arg("t"));

  m.def("make_fixture",
        [](std::size_t p, std::size_t p_inner, std::size_t k_true, double noise,
           std::size_t n, std::size_t fixture_m, std::uint64_t seed,
           const std::string& activation) {
          FixtureSpec spec{p, p_inner, k_true, noise, n, fixture_m, seed,
                           act_from_name(activation)};
          Fixture f = make_fixture(spec);
          std::vector<py::array_t<double>> inputs;
          for (const Matrix& x : f.inputs) inputs.push_back(numpy_from_matrix(x));
          return py::make_tuple(f.teacher, f.head, inputs);
        },
        py::arg("p") = 16, py::arg("p_inner") = 64, py::arg("k_true") = 16,
        py::arg("noise") = 0.05, py::arg("n") = 8, py::arg("m") = 32,
        py::arg("seed") = 0, py::arg("activation") = "relu");
  m.def("write_fixture",
        [](const std::filesystem::path& out_dir, std::size_t p,
           std::size_t p_inner, std::size_t k_true, double noise, std::size_t n,
           std::size_t fixture_m, std::uint64_t seed, const std::string& activation) {
          FixtureSpec spec{p, p_inner, k_true, noise, n, fixture_m, seed,
                           act_from_name(activation)};
          write_fixture(spec, out_dir);
        },
        py::arg("out_dir"), py::arg("p") = 16, py::arg("p_inner") = 64,
        py::arg("k_true") = 16, py::arg("noise") = 0.05, py::arg("n") = 8,
        py::arg("m") = 32, py::arg("seed") = 0, py::arg("activation") = "relu");
  m.def("fixture_hash", &fixture_hash, py::arg("dir"));
}

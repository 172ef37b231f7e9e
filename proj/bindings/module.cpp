#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tsen/analysis.hpp"
#include "tsen/checkpoint.hpp"
#include "tsen/dataset.hpp"
#include "tsen/graph.hpp"
#include "tsen/model.hpp"
#include "tsen/train.hpp"

namespace py = pybind11;
using namespace tsen;

namespace {

// Thin ownership wrapper so python holds a whole model as one object.
struct PyModel {
  ModelParams params;

  static PyModel create(const std::string& variant, int feature_dim,
                        int class_count, std::uint64_t seed, int num_layers,
                        int hidden_dim, int num_heads) {
    ModelConfig config;
    config.variant = variant_from_string(variant);
    config.num_layers = num_layers;
    config.hidden_dim = hidden_dim;
    config.num_heads = num_heads;
    return PyModel{init_params(config, feature_dim, class_count, seed)};
  }

  Matrix logits(const Matrix& corr, double threshold) const {
    const Graph g = build_graph(corr, threshold, 0);
    return forward(g, params, /*training=*/false).value();
  }

  Matrix representation(const Matrix& corr, double threshold) const {
    const Graph g = build_graph(corr, threshold, 0);
    return forward_full(g, params, /*training=*/false).representation.value();
  }

  int predict_class(const Matrix& corr, double threshold) const {
    const Graph g = build_graph(corr, threshold, 0);
    return predict(forward(g, params, /*training=*/false));
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> names;
    params.for_each(
        [&](const std::string& name, const Tensor&) { names.push_back(name); });
    return names;
  }
};

}  // namespace

PYBIND11_MODULE(_tsen, m) {
  m.doc() = "Graph-transformer (TSEN) core operations";

  m.def("normalized_laplacian", &normalized_laplacian, py::arg("adjacency"),
        "I - D^{-1/2} A D^{-1/2} with the isolated-node convention");
  m.def("binarize", &binarize, py::arg("corr"), py::arg("threshold"),
        "Symmetric binary adjacency via the strict > threshold rule");
  m.def("gelu", &gelu_scalar, py::arg("x"), "Exact Gaussian-CDF GELU");
  m.def("lr_schedule", &lr_schedule, py::arg("base_lr"), py::arg("warmup_steps"),
        py::arg("step"), "Linear warmup into inverse-sqrt decay");
  m.def(
      "cka",
      [](const Matrix& x, const Matrix& y, const std::string& kernel,
         double rbf_multiplier) {
        return cka(x, y, cka_kernel_from_string(kernel), rbf_multiplier);
      },
      py::arg("x"), py::arg("y"), py::arg("kernel") = "linear",
      py::arg("rbf_multiplier") = 1.0,
      "Centered kernel alignment between representation matrices");
  m.def(
      "generate_synthetic",
      [](int n_graphs, int n_nodes, double signal, std::uint64_t seed) {
        const Dataset data = generate_synthetic(n_graphs, n_nodes, signal, seed);
        std::vector<std::pair<Matrix, int>> out;
        out.reserve(data.size());
        for (const Graph& g : data.graphs) out.emplace_back(g.features, g.label);
        return out;
      },
      py::arg("n_graphs"), py::arg("n_nodes"), py::arg("signal"),
      py::arg("seed"),
      "Synthetic correlation matrices as (matrix, label) pairs");

  py::class_<PyModel>(m, "Model")
      .def(py::init(&PyModel::create), py::arg("variant") = "TSEN",
           py::arg("feature_dim") = 50, py::arg("class_count") = 2,
           py::arg("seed") = 0, py::arg("num_layers") = 2,
           py::arg("hidden_dim") = 64, py::arg("num_heads") = 4)
      .def("logits", &PyModel::logits, py::arg("corr"), py::arg("threshold") = 0.2)
      .def("representation", &PyModel::representation, py::arg("corr"),
           py::arg("threshold") = 0.2)
      .def("predict", &PyModel::predict_class, py::arg("corr"),
           py::arg("threshold") = 0.2)
      .def("param_names", &PyModel::param_names)
      .def("save", [](const PyModel& self,
                      const std::string& path) { save_checkpoint(self.params, path); })
      .def_static("load", [](const std::string& path) {
        return PyModel{load_checkpoint(path)};
      });
}

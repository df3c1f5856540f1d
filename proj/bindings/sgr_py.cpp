#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>

#include "sgr/checkpoint.hpp"
#include "sgr/data.hpp"
#include "sgr/gradcheck_suite.hpp"
#include "sgr/metrics.hpp"
#include "sgr/model.hpp"
#include "sgr/pool.hpp"
#include "sgr/spectral_graph.hpp"

namespace py = pybind11;

namespace {

using Array64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Array32 = py::array_t<float, py::array::c_style | py::array::forcecast>;

sgr::Tensor64 to_tensor(const Array64& array) {
  sgr::Shape shape;
  for (py::ssize_t d = 0; d < array.ndim(); ++d) shape.push_back(array.shape(d));
  std::vector<double> data(array.data(), array.data() + array.size());
  return sgr::Tensor64(std::move(shape), std::move(data));
}

py::array from_tensor(const sgr::Tensor64& tensor) {
  std::vector<py::ssize_t> shape(tensor.shape().begin(), tensor.shape().end());
  py::array_t<double> out(shape);
  std::copy(tensor.raw(), tensor.raw() + tensor.size(), out.mutable_data());
  return out;
}

sgr::Activation parse_activation(const std::string& name) {
  if (name == "relu") return sgr::Activation::relu;
  if (name == "identity") return sgr::Activation::identity;
  throw sgr::ParameterError("activation must be 'relu' or 'identity', got '" + name + "'");
}

sgr::ModelKind parse_kind(const std::string& name) {
  if (name == "sgr") return sgr::ModelKind::sgr;
  if (name == "encoder-only") return sgr::ModelKind::encoder_only;
  throw sgr::ParameterError("kind must be 'sgr' or 'encoder-only', got '" + name + "'");
}

sgr::GruParamIds bind_gru(sgr::GraphD& rec, const Array64& wz, const Array64& uz,
                          const Array64& wr, const Array64& ur, const Array64& wo,
                          const Array64& uo) {
  sgr::GruParamIds p;
  p.wz = rec.leaf(to_tensor(wz));
  p.uz = rec.leaf(to_tensor(uz));
  p.wr = rec.leaf(to_tensor(wr));
  p.ur = rec.leaf(to_tensor(ur));
  p.wo = rec.leaf(to_tensor(wo));
  p.uo = rec.leaf(to_tensor(uo));
  return p;
}

sgr::Tensor patch_tensor(const Array32& patch, const sgr::ModelConfig& cfg) {
  sgr::Shape shape;
  for (py::ssize_t d = 0; d < patch.ndim(); ++d) shape.push_back(patch.shape(d));
  if (shape.size() == 3)
    shape.insert(shape.begin(), 1);  // accept [B, p, p] as well as [1, B, p, p]
  std::vector<float> data(patch.data(), patch.data() + patch.size());
  sgr::Tensor t(std::move(shape), std::move(data));
  if (t.rank() != 4 || t.extent(0) != 1 || t.extent(1) != cfg.bands ||
      t.extent(2) != cfg.patch || t.extent(3) != cfg.patch)
    throw sgr::DimensionError("patch must have shape [bands, patch, patch]");
  return t;
}

class PyModel {
 public:
  PyModel(sgr::ModelConfig cfg, uint64_t seed) : model_(cfg, seed) {}
  PyModel(sgr::ModelConfig cfg, sgr::ParamSet<float> params)
      : model_(cfg, std::move(params)) {}

  py::array logits(const Array32& patch) const {
    const sgr::Tensor out = model_.logits(patch_tensor(patch, model_.config()));
    const std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(out.size())};
    py::array_t<float> result(shape);
    std::copy(out.raw(), out.raw() + out.size(), result.mutable_data());
    return result;
  }

  int64_t predict(const Array32& patch) const {
    return model_.predict(patch_tensor(patch, model_.config()));
  }

  int64_t parameter_count() const { return model_.params().scalar_count(); }
  int64_t node_count() const { return model_.config().node_count(); }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    for (int64_t i = 0; i < model_.params().count(); ++i)
      names.push_back(model_.params().name(i));
    return names;
  }

  void save_checkpoint(const std::string& path) const {
    sgr::save_checkpoint(model_.params(), path);
  }

  const sgr::SgrModel& model() const { return model_; }

 private:
  sgr::SgrModel model_;
};

sgr::ModelConfig make_config(int64_t bands, int64_t classes, int64_t patch,
                             int64_t features, int64_t knn_k, int64_t levels,
                             double pool_ratio, int64_t gcn_layers_per_level,
                             const std::string& kind) {
  sgr::ModelConfig cfg;
  cfg.bands = bands;
  cfg.classes = classes;
  cfg.patch = patch;
  cfg.features = features;
  cfg.knn_k = knn_k;
  cfg.levels = levels;
  cfg.pool_ratio = pool_ratio;
  cfg.gcn_layers_per_level = gcn_layers_per_level;
  cfg.kind = parse_kind(kind);
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Spectral graph reasoning primitives for hyperspectral classification";

  py::register_exception<sgr::DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<sgr::ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<sgr::IngestionError>(m, "IngestionError", PyExc_IOError);
  py::register_exception<sgr::StructureError>(m, "StructureError", PyExc_RuntimeError);

  py::class_<sgr::SpectralGraph>(m, "Graph")
      .def_readonly("n", &sgr::SpectralGraph::n)
      .def_property_readonly("degrees",
                             [](const sgr::SpectralGraph& g) { return g.degrees; })
      .def("edges",
           [](const sgr::SpectralGraph& g) {
             py::array_t<int64_t> out({static_cast<py::ssize_t>(g.edges.size()),
                                       static_cast<py::ssize_t>(2)});
             auto view = out.mutable_unchecked<2>();
             for (size_t e = 0; e < g.edges.size(); ++e) {
               view(static_cast<py::ssize_t>(e), 0) = g.edges[e].first;
               view(static_cast<py::ssize_t>(e), 1) = g.edges[e].second;
             }
             return out;
           })
      .def("has_edge", &sgr::SpectralGraph::has_edge)
      .def("laplacian",
           [](const sgr::SpectralGraph& g) {
             return from_tensor(sgr::normalized_laplacian<double>(g));
           })
      .def("edge_list_text", [](const sgr::SpectralGraph& g) {
        std::ostringstream out;
        sgr::dump_edges(g, out);
        return out.str();
      });

  m.def(
      "knn_graph",
      [](const Array64& features, int64_t k) { return sgr::knn_graph(to_tensor(features), k); },
      py::arg("features"), py::arg("k"),
      "Cosine-distance KNN graph over feature rows, symmetrized by union");

  m.def(
      "gcn_layer",
      [](const sgr::SpectralGraph& g, const Array64& x, const Array64& w,
         const std::string& activation) {
        sgr::GraphD rec;
        const sgr::NodeId out = sgr::gcn_layer(rec, g, rec.leaf(to_tensor(x)),
                                               rec.leaf(to_tensor(w)),
                                               parse_activation(activation));
        return from_tensor(rec.value(out));
      },
      py::arg("graph"), py::arg("features"), py::arg("weight"),
      py::arg("activation") = "relu");

  m.def(
      "message_passing",
      [](const sgr::SpectralGraph& g, const Array64& h, const Array64& theta) {
        sgr::GraphD rec;
        const sgr::NodeId out =
            sgr::message_passing(rec, g, rec.leaf(to_tensor(h)), rec.leaf(to_tensor(theta)));
        return from_tensor(rec.value(out));
      },
      py::arg("graph"), py::arg("features"), py::arg("theta"));

  m.def(
      "topk_pool",
      [](const sgr::SpectralGraph& g, const Array64& x, const Array64& w, int64_t k) {
        sgr::GraphD rec;
        const sgr::LevelRecord level =
            sgr::topk_pool(rec, g, rec.leaf(to_tensor(x)), rec.leaf(to_tensor(w)), k);
        return py::make_tuple(from_tensor(rec.value(level.pooled)), level.indices,
                              from_tensor(rec.value(level.scores)), level.pooled_graph);
      },
      py::arg("graph"), py::arg("features"), py::arg("projection"), py::arg("k"),
      "Returns (pooled features, kept indices, gate scores, pooled graph)");

  m.def(
      "graph_unpool",
      [](const Array64& coarse, const std::vector<int64_t>& indices,
         const sgr::SpectralGraph& graph, const Array64& theta) {
        sgr::GraphD rec;
        sgr::LevelRecord level;
        level.graph_before_pool = graph;
        level.indices = indices;
        const sgr::NodeId out =
            sgr::graph_unpool(rec, rec.leaf(to_tensor(coarse)), level, rec.leaf(to_tensor(theta)));
        return from_tensor(rec.value(out));
      },
      py::arg("coarse"), py::arg("indices"), py::arg("graph"), py::arg("theta"));

  m.def(
      "gru_step",
      [](const Array64& x, const Array64& h_prev, const Array64& wz, const Array64& uz,
         const Array64& wr, const Array64& ur, const Array64& wo, const Array64& uo) {
        sgr::GraphD rec;
        const sgr::GruParamIds p = bind_gru(rec, wz, uz, wr, ur, wo, uo);
        const sgr::NodeId out =
            sgr::gru_step(rec, rec.leaf(to_tensor(x)), rec.leaf(to_tensor(h_prev)), p);
        return from_tensor(rec.value(out));
      },
      py::arg("x"), py::arg("h_prev"), py::arg("wz"), py::arg("uz"), py::arg("wr"),
      py::arg("ur"), py::arg("wo"), py::arg("uo"));

  m.def(
      "metrics",
      [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& confusion) {
        if (confusion.ndim() != 2 || confusion.shape(0) != confusion.shape(1))
          throw sgr::ParameterError("confusion matrix must be square");
        const int64_t classes = confusion.shape(0);
        std::vector<int64_t> data(confusion.data(), confusion.data() + confusion.size());
        const sgr::MetricsReport report = sgr::metrics_from_confusion(data, classes);
        py::dict out;
        out["oa"] = report.oa;
        out["aa"] = report.aa;
        out["kappa"] = report.kappa;
        out["per_class"] = report.per_class;
        out["warnings"] = report.warnings;
        return out;
      },
      py::arg("confusion"),
      "OA, AA, and Cohen's kappa (x100) from a rows-are-truth confusion matrix");

  m.def(
      "synth_cube",
      [](int64_t classes, int64_t bands, int64_t height, int64_t width, double noise,
         uint64_t seed) {
        sgr::SynthSpec spec;
        spec.classes = classes;
        spec.bands = bands;
        spec.height = height;
        spec.width = width;
        spec.noise = noise;
        spec.seed = seed;
        const auto [cube, labels] = sgr::synth_cube(spec);
        py::array_t<float> cube_array({static_cast<py::ssize_t>(bands),
                                       static_cast<py::ssize_t>(height),
                                       static_cast<py::ssize_t>(width)});
        std::copy(cube.values.begin(), cube.values.end(), cube_array.mutable_data());
        py::array_t<uint16_t> label_array(
            {static_cast<py::ssize_t>(height), static_cast<py::ssize_t>(width)});
        std::copy(labels.ids.begin(), labels.ids.end(), label_array.mutable_data());
        return py::make_tuple(cube_array, label_array);
      },
      py::arg("classes") = 4, py::arg("bands") = 48, py::arg("height") = 64,
      py::arg("width") = 64, py::arg("noise") = sgr::SynthSpec{}.noise,
      py::arg("seed") = sgr::SynthSpec{}.seed,
      "Seeded synthetic cube (band-sequential) and fully labeled class map");

  m.def(
      "gradcheck",
      [](const std::string& scale) {
        sgr::GradCheckScale s;
        if (scale == "tiny")
          s = sgr::GradCheckScale::tiny;
        else if (scale == "small")
          s = sgr::GradCheckScale::small;
        else if (scale == "full")
          s = sgr::GradCheckScale::full;
        else
          throw sgr::ParameterError("scale must be tiny, small, or full");
        return sgr::worst_error(sgr::run_gradcheck_suite(s));
      },
      py::arg("scale") = "tiny",
      "Max relative error of analytic gradients against central differences");

  py::class_<PyModel>(m, "Model")
      .def(py::init([](int64_t bands, int64_t classes, int64_t patch, int64_t features,
                       int64_t knn_k, int64_t levels, double pool_ratio,
                       int64_t gcn_layers_per_level, const std::string& kind,
                       uint64_t seed) {
             return PyModel(make_config(bands, classes, patch, features, knn_k, levels,
                                        pool_ratio, gcn_layers_per_level, kind),
                            seed);
           }),
           py::arg("bands"), py::arg("classes"), py::arg("patch") = 7,
           py::arg("features") = 8, py::arg("knn_k") = 10, py::arg("levels") = 2,
           py::arg("pool_ratio") = 0.5, py::arg("gcn_layers_per_level") = 1,
           py::arg("kind") = "sgr", py::arg("seed") = 1)
      .def_static(
          "from_checkpoint",
          [](const std::string& path, int64_t bands, int64_t classes, int64_t patch,
             int64_t features, int64_t knn_k, int64_t levels, double pool_ratio,
             int64_t gcn_layers_per_level, const std::string& kind) {
            return PyModel(make_config(bands, classes, patch, features, knn_k, levels,
                                       pool_ratio, gcn_layers_per_level, kind),
                           sgr::load_checkpoint(path));
          },
          py::arg("path"), py::arg("bands"), py::arg("classes"), py::arg("patch") = 7,
          py::arg("features") = 8, py::arg("knn_k") = 10, py::arg("levels") = 2,
          py::arg("pool_ratio") = 0.5, py::arg("gcn_layers_per_level") = 1,
          py::arg("kind") = "sgr")
      .def("logits", &PyModel::logits, py::arg("patch"))
      .def("predict", &PyModel::predict, py::arg("patch"))
      .def("save_checkpoint", &PyModel::save_checkpoint, py::arg("path"))
      .def_property_readonly("parameter_count", &PyModel::parameter_count)
      .def_property_readonly("node_count", &PyModel::node_count)
      .def_property_readonly("parameter_names", &PyModel::parameter_names);
}

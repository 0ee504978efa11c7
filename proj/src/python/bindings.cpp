#include "lastomo/cli.hpp"
#include "lastomo/container.hpp"
#include "lastomo/errors.hpp"
#include "lastomo/evaluation.hpp"
#include "lastomo/image_io.hpp"
#include "lastomo/pipeline.hpp"
#include "lastomo/spectroscopy.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <sstream>

namespace py = pybind11;
using namespace lastomo;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

py::dict blob_dict(const GaussianBlob& b) {
  py::dict d;
  d["x_c"] = b.x_c;
  d["y_c"] = b.y_c;
  d["sigma_x"] = b.sigma_x;
  d["sigma_y"] = b.sigma_y;
  d["scale"] = b.scale;
  d["temp_amp"] = b.temp_amp;
  d["conc_amp"] = b.conc_amp;
  return d;
}

py::dict sample_dict(const Sample& s) {
  py::dict d;
  d["index"] = s.index;
  d["a1"] = s.a1;
  d["a2"] = s.a2;
  d["t"] = s.t;
  py::list blobs;
  for (const auto& b : s.blobs) blobs.append(blob_dict(b));
  d["blobs"] = blobs;
  return d;
}

// Owns the pipeline so models can keep a pointer to its pseudo-inverse.
struct PyPipeline {
  std::shared_ptr<Pipeline> pipe;
};

struct PyModel {
  std::shared_ptr<Pipeline> pipe;
  Checkpoint ck;

  const PseudoInverse* pinv() const { return &pipe->pinv(); }
};

PyPipeline make_pipeline(const std::string& config_path, std::optional<std::uint64_t> seed) {
  PipelineConfig cfg = load_config(config_path);
  if (seed) cfg.seed = *seed;
  return {std::make_shared<Pipeline>(cfg)};
}

py::tuple cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_lastomo, m) {
  m.doc() = "Hierarchical TDLAS temperature imaging core";

  py::register_exception<Error>(m, "LastomoError");

  py::class_<PyModel>(m, "Model")
      .def_property_readonly("arch", [](const PyModel& s) { return std::string(to_string(s.ck.model.spec.arch)); })
      .def_property_readonly("n_parameters", [](const PyModel& s) { return s.ck.model.n_parameters(); })
      .def(
          "infer",
          [](const PyModel& s, const Eigen::VectorXd& a1, const Eigen::VectorXd& a2) {
            return infer(s.ck.model, a1, a2, s.pinv());
          },
          py::arg("a1"), py::arg("a2"), "Hierarchical temperature vector (1964) for one frame.")
      .def(
          "infer_batch",
          [](const PyModel& s, const RowMatrix& a1, const RowMatrix& a2) {
            return RowMatrix(infer_batch(s.ck.model, a1, a2, s.pinv()));
          },
          py::arg("a1"), py::arg("a2"));

  py::class_<PyPipeline>(m, "Pipeline")
      .def(py::init(&make_pipeline), py::arg("config"), py::arg("seed") = py::none())
      .def_property_readonly("seed", [](const PyPipeline& s) { return s.pipe->config().seed; })
      .def_property_readonly("n_roi", [](const PyPipeline& s) { return s.pipe->mesh().n_roi(); })
      .def_property_readonly("n_background", [](const PyPipeline& s) { return s.pipe->mesh().n_background(); })
      .def_property_readonly("n_exterior_pixels",
                             [](const PyPipeline& s) { return s.pipe->mesh().n_exterior_pixels(); })
      .def_property_readonly("fingerprint", [](const PyPipeline& s) { return s.pipe->fingerprint(); })
      .def_property_readonly("sensitivity", [](const PyPipeline& s) { return s.pipe->sensitivity().L; },
                             "Chord lengths in cm, beams x cells.")
      .def_property_readonly("pinv", [](const PyPipeline& s) { return s.pipe->pinv().matrix; })
      .def(
          "draw_sample",
          [](const PyPipeline& s, std::uint64_t seed, int n_blobs) {
            return sample_dict(draw_sample(seed, s.pipe->config().phantom, n_blobs, s.pipe->forward_model()));
          },
          py::arg("seed"), py::arg("n_blobs") = 1)
      .def(
          "pre_reconstruct",
          [](const PyPipeline& s, const Eigen::VectorXd& a1, const Eigen::VectorXd& a2) {
            const auto c = pre_reconstruct(a1, a2, s.pipe->pinv(), s.pipe->mesh().roi_dim());
            return py::make_tuple(RowMatrix(c[0]), RowMatrix(c[1]));
          },
          py::arg("a1"), py::arg("a2"))
      .def(
          "vector_to_image",
          [](const PyPipeline& s, const Eigen::VectorXd& t) { return RowMatrix(vector_to_image(t, s.pipe->mesh())); },
          py::arg("t"))
      .def(
          "rasterize",
          [](const PyPipeline& s, const RowMatrix& img) { return rasterize(img, s.pipe->mesh()); }, py::arg("image"))
      .def(
          "load_model",
          [](const PyPipeline& s, const std::string& path) {
            Checkpoint ck = checkpoint_from_container(load_container(path, ContainerKind::Checkpoint));
            if (ck.geometry_fingerprint != s.pipe->fingerprint()) {
              throw ConfigError("checkpoint '" + path + "' was trained on a different geometry");
            }
            return PyModel{s.pipe, std::move(ck)};
          },
          py::arg("path"));

  m.def(
      "add_noise",
      [](const Eigen::VectorXd& a, double snr_db, std::uint64_t seed) {
        Rng rng(seed);
        return add_noise(a, snr_db, rng);
      },
      py::arg("absorbance"), py::arg("snr_db"), py::arg("seed"));
  m.def("noise_sigma", &noise_sigma, py::arg("absorbance"), py::arg("snr_db"));
  m.def(
      "loss_l2", [](const RowMatrix& p, const RowMatrix& t) { return loss_l2(p, t); }, py::arg("predictions"),
      py::arg("targets"));
  m.def("spearman", &spearman);
  m.def("parse_snr_list", &parse_snr_list);
  m.def(
      "network_layers",
      [](const std::string& arch) {
        py::list out;
        for (const auto& l : make_spec(parse_arch(arch)).layers) {
          if (l.kind == LayerKind::InputReshape || l.kind == LayerKind::Flatten) continue;
          py::dict d;
          d["name"] = l.name;
          d["kind"] = std::string(to_string(l.kind));
          d["input"] = l.in.str();
          d["output"] = l.out.str();
          d["weight"] = l.weight_str();
          out.append(d);
        }
        return out;
      },
      py::arg("arch"), "Layer table rows of one architecture.");
  m.def("run_cli", &cli, py::arg("args"), "Runs the command line in-process; returns (code, stdout, stderr).");
}

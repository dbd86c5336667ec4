#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "bisic/codec.hpp"
#include "bisic/data.hpp"
#include "bisic/metrics.hpp"
#include "bisic/selftest.hpp"
#include "bisic/training.hpp"

namespace py = pybind11;
using namespace bisic;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> to_image(const Array& a, const char* what) {
  if (a.ndim() != 3 || a.shape(0) != 3) {
    throw ShapeError(std::string(what) + " must have shape (3, H, W)");
  }
  Tensor<float> t(Shape{3, a.shape(1), a.shape(2)});
  std::copy(a.data(), a.data() + a.size(), t.values().begin());
  return t;
}

Array to_array(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array a(shape);
  std::copy(t.values().begin(), t.values().end(), a.mutable_data());
  return a;
}

Tensor<float> stereo(const Array& left, const Array& right) {
  StereoPair p{to_image(left, "left"), to_image(right, "right"), "python", std::nullopt};
  if (p.left.shape() != p.right.shape()) throw ShapeError("left and right differ in shape");
  return to_batch(std::vector<StereoPair>{p});
}

py::tuple split(const Tensor<float>& batch) {
  const auto p = from_batch(batch, 0);
  return py::make_tuple(to_array(p.left), to_array(p.right));
}

ModelConfig config_from(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  for (const auto& [k, v] : kv) c.set(k, v);
  c.validate();
  return c;
}

struct PyModel {
  std::shared_ptr<Model<float>> model;
  Metadata metadata;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bidirectional stereo image codec";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", base.ptr());
  py::register_exception<CoderError>(m, "CoderError", base.ptr());
  py::register_exception<TrainingFault>(m, "TrainingFault", base.ptr());
  py::register_exception<OverlapError>(m, "OverlapError", base.ptr());

  m.def(
      "synthetic_pair",
      [](uint64_t seed, int height, int width, int disparity, double noise, double occlusion) {
        SyntheticSpec s{seed, height, width, disparity, noise, occlusion};
        const auto p = generate_synthetic_pair(s);
        return py::make_tuple(to_array(p.left), to_array(p.right));
      },
      py::arg("seed"), py::arg("height") = 64, py::arg("width") = 64, py::arg("disparity") = 8,
      py::arg("noise") = 0.02, py::arg("occlusion") = 0.05,
      "Correlated stereo pair as two float32 arrays of shape (3, H, W) in [0, 1].");

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const std::map<std::string, std::string>& config, uint64_t seed) {
             return PyModel{std::make_shared<Model<float>>(config_from(config), seed), {}};
           }),
           py::arg("config") = std::map<std::string, std::string>{}, py::arg("seed") = 0)
      .def_static(
          "load",
          [](const std::string& path) {
            auto ck = load_checkpoint(path);
            return PyModel{std::shared_ptr<Model<float>>(std::move(ck.model)), ck.metadata};
          },
          py::arg("path"))
      .def("save", [](const PyModel& self, const std::string& path,
                      const Metadata& metadata) { save_checkpoint(*self.model, metadata, path); },
           py::arg("path"), py::arg("metadata") = Metadata{})
      .def_property_readonly("config", [](const PyModel& self) { return self.model->config().to_map(); })
      .def_readonly("metadata", &PyModel::metadata)
      .def(
          "compress",
          [](const PyModel& self, const Array& left, const Array& right) {
            const auto x = stereo(left, right);
            std::vector<uint8_t> bytes;
            {
              py::gil_scoped_release release;
              bytes = codec::compress(*self.model, x).bytes;
            }
            return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
          },
          py::arg("left"), py::arg("right"))
      .def(
          "decompress",
          [](const PyModel& self, const py::bytes& data) {
            const std::string s = data;
            Tensor<float> x_hat;
            {
              py::gil_scoped_release release;
              x_hat = codec::decompress(*self.model, std::span(reinterpret_cast<const uint8_t*>(s.data()), s.size()))
                          .x_hat;
            }
            return split(x_hat);
          },
          py::arg("data"), "Unclamped reconstruction of both views.")
      .def(
          "quantized_reconstruction",
          [](const PyModel& self, const Array& left, const Array& right) {
            return split(codec::quantized_reconstruction(*self.model, stereo(left, right)));
          },
          py::arg("left"), py::arg("right"))
      .def(
          "rd_loss",
          [](const PyModel& self, const Array& left, const Array& right, double lambda,
             const std::string& distortion, uint64_t seed) {
            std::mt19937_64 rng(seed);
            const auto v = rd_loss(*self.model, Var<float>::constant(stereo(left, right)), lambda,
                                   parse_distortion(distortion), rng)
                               .values();
            return std::map<std::string, double>{{"L", v.L}, {"D", v.D}, {"R_y", v.R_y}, {"R_z", v.R_z}};
          },
          py::arg("left"), py::arg("right"), py::arg("lambda_") = 512.0, py::arg("distortion") = "mse",
          py::arg("seed") = 0)
      .def(
          "train",
          [](PyModel& self, const std::vector<std::pair<Array, Array>>& pairs,
             const std::map<std::string, std::string>& options) {
            TrainConfig cfg;
            for (const auto& [k, v] : options) cfg.set(k, v);
            std::vector<StereoPair> data;
            for (const auto& [l, r] : pairs) data.push_back({to_image(l, "left"), to_image(r, "right"), "python", {}});
            TrainResult res;
            {
              py::gil_scoped_release release;
              res = train(*self.model, data, cfg, self.metadata);
            }
            py::list rows;
            for (const auto& r : res.log) {
              py::dict d;
              d["step"] = r.step;
              d["L"] = r.L;
              d["D"] = r.D;
              d["R_y"] = r.R_y;
              d["R_z"] = r.R_z;
              d["lr"] = r.lr;
              rows.append(d);
            }
            return rows;
          },
          py::arg("pairs"), py::arg("options") = std::map<std::string, std::string>{},
          "Trains in place; options are training keys such as lambda or steps. Returns the loss log.");

  m.def(
      "psnr",
      [](const Array& x, const Array& y) { return eval::psnr(to_image(x, "x"), to_image(y, "y")); },
      py::arg("x"), py::arg("y"));
  m.def(
      "ms_ssim",
      [](const Array& x, const Array& y) { return eval::ms_ssim(to_image(x, "x"), to_image(y, "y")); },
      py::arg("x"), py::arg("y"));
  m.def(
      "bpp",
      [](const py::bytes& data) {
        const std::string s = data;
        const auto b = eval::bpp(std::span(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
        return py::make_tuple(b.left, b.right, b.avg);
      },
      py::arg("data"), "Bits per pixel of a .bsic stream as (left, right, average).");
  using Vec = std::vector<double>;
  m.def(
      "bd_rate",
      [](const Vec& rr, const Vec& qr, const Vec& rt, const Vec& qt) { return eval::bd_rate(rr, qr, rt, qt); },
      py::arg("rate_ref"), py::arg("quality_ref"), py::arg("rate_test"), py::arg("quality_test"),
      "Average rate difference in percent at equal quality.");
  m.def(
      "bd_quality",
      [](const Vec& rr, const Vec& qr, const Vec& rt, const Vec& qt) { return eval::bd_quality(rr, qr, rt, qt); },
      py::arg("rate_ref"), py::arg("quality_ref"), py::arg("rate_test"), py::arg("quality_test"));
  m.def(
      "selftest",
      [](bool quick, uint64_t seed) {
        py::list out;
        for (const auto& c : selftest::run(quick, seed)) out.append(py::make_tuple(c.name, c.pass, c.detail));
        return out;
      },
      py::arg("quick") = true, py::arg("seed") = 0);
}

// Python bindings: model lifecycle, image coding against numpy arrays,
// toy training, curve comparison, and the invariant suite.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <iostream>
#include <sstream>

#include "hcfs/bdrate.h"
#include "hcfs/selftest.h"
#include "hcfs/train.h"

namespace py = pybind11;
using Scalar = float;

namespace {

hcfs::ModelConfig config_from(const py::object& config) {
  if (py::isinstance<py::str>(config)) {
    std::string name = config.cast<std::string>();
    if (name == "desk") return hcfs::ModelConfig::desk();
    if (name == "micro") return hcfs::ModelConfig::micro();
    if (name == "full") return hcfs::ModelConfig::full();
    throw py::value_error("unknown model preset '" + name +
                          "' (try desk, micro, full)");
  }
  hcfs::ModelConfig cfg = hcfs::ModelConfig::desk();
  py::dict d = config.cast<py::dict>();
  auto get = [&](const char* key, int& field) {
    if (d.contains(key)) field = d[key].cast<int>();
  };
  get("c", cfg.c);
  get("m", cfg.m);
  get("cz", cfg.cz);
  get("hyper", cfg.hyper);
  get("slices", cfg.slices);
  get("state_dim", cfg.state_dim);
  get("u", cfg.u);
  get("heads", cfg.heads);
  get("afmm_win", cfg.afmm_win);
  get("entropy_win", cfg.entropy_win);
  cfg.validate();
  return cfg;
}

py::dict config_to_dict(const hcfs::ModelConfig& cfg) {
  py::dict d;
  d["c"] = cfg.c;
  d["m"] = cfg.m;
  d["cz"] = cfg.cz;
  d["hyper"] = cfg.hyper;
  d["slices"] = cfg.slices;
  d["state_dim"] = cfg.state_dim;
  d["u"] = cfg.u;
  d["heads"] = cfg.heads;
  d["afmm_win"] = cfg.afmm_win;
  d["entropy_win"] = cfg.entropy_win;
  return d;
}

hcfs::ImageBuffer image_from_array(
    const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>&
        arr) {
  if (arr.ndim() != 3 || arr.shape(2) != 3)
    throw py::value_error("image must have shape (height, width, 3)");
  hcfs::ImageBuffer img;
  img.height = int(arr.shape(0));
  img.width = int(arr.shape(1));
  img.rgb.resize(size_t(3) * img.width * img.height);
  std::memcpy(img.rgb.data(), arr.data(), img.rgb.size());
  return img;
}

py::array_t<uint8_t> image_to_array(const hcfs::ImageBuffer& img) {
  py::array_t<uint8_t> arr({img.height, img.width, 3});
  std::memcpy(arr.mutable_data(), img.rgb.data(), img.rgb.size());
  return arr;
}

hcfs::RdCurve curve_from(const std::vector<std::pair<double, double>>& pts,
                         const char* label) {
  hcfs::RdCurve c;
  c.label = label;
  for (auto [bpp, psnr] : pts) c.points.push_back({bpp, psnr});
  return c;
}

struct PyModel {
  hcfs::Model<Scalar> model;

  explicit PyModel(hcfs::Model<Scalar> m) : model(std::move(m)) {}

  py::bytes encode(const py::array_t<
                   uint8_t, py::array::c_style | py::array::forcecast>& arr) {
    hcfs::ImageBuffer img = image_from_array(arr);
    std::vector<uint8_t> bytes;
    {
      py::gil_scoped_release release;
      bytes = hcfs::write_container(hcfs::encode_image(model, img));
    }
    return py::bytes(reinterpret_cast<const char*>(bytes.data()),
                     bytes.size());
  }

  py::array_t<uint8_t> decode(const py::bytes& blob) {
    std::string s = blob;
    std::vector<uint8_t> bytes(s.begin(), s.end());
    hcfs::ImageBuffer img;
    {
      py::gil_scoped_release release;
      img = hcfs::decode_image(model, hcfs::read_container(bytes));
    }
    return image_to_array(img);
  }

  py::dict eval(const py::array_t<
                uint8_t, py::array::c_style | py::array::forcecast>& arr) {
    hcfs::ImageBuffer img = image_from_array(arr);
    hcfs::EvalResult r;
    {
      py::gil_scoped_release release;
      r = hcfs::eval_image(model, img);
    }
    py::dict d;
    d["bpp"] = r.bpp;
    d["psnr"] = r.psnr;
    d["mse"] = r.mse;
    d["bytes"] = r.bytes;
    d["width"] = r.width;
    d["height"] = r.height;
    return d;
  }
};

}  // namespace

PYBIND11_MODULE(_hcfs, m) {
  m.doc() =
      "Learned image codec: hybrid conv + state-space transforms with a "
      "channel-wise conditional entropy model and a range-coded container.";
  m.attr("__version__") = "0.1.0";

  py::register_exception<hcfs::FormatError>(m, "FormatError",
                                            PyExc_ValueError);
  py::register_exception<hcfs::IoError>(m, "IoError", PyExc_OSError);

  py::class_<PyModel>(m, "Model")
      .def_static(
          "random",
          [](const py::object& config, uint64_t seed) {
            return PyModel(hcfs::Model<Scalar>(config_from(config), seed));
          },
          py::arg("config") = py::str("desk"), py::arg("seed") = 0,
          "Freshly initialized model from a preset name or config dict.")
      .def_static(
          "load",
          [](const std::string& path) {
            return PyModel(hcfs::load_model<Scalar>(path));
          },
          py::arg("path"), "Load a checkpoint written by save().")
      .def(
          "save",
          [](PyModel& self, const std::string& path) {
            hcfs::save_model(path, self.model);
          },
          py::arg("path"))
      .def("encode", &PyModel::encode, py::arg("image"),
           "Compress an (H, W, 3) uint8 array into a container blob.")
      .def("decode", &PyModel::decode, py::arg("blob"),
           "Decompress a container blob into an (H, W, 3) uint8 array.")
      .def("eval", &PyModel::eval, py::arg("image"),
           "Encode + decode; returns bpp / psnr / mse / bytes / size.")
      .def_property_readonly(
          "config", [](PyModel& self) { return config_to_dict(self.model.cfg); })
      .def_property(
          "lambda_index",
          [](PyModel& self) { return self.model.lambda_index; },
          [](PyModel& self, int v) {
            if (v < 0 || v >= int(hcfs::kLambdas.size()))
              throw py::value_error("lambda_index out of range");
            self.model.lambda_index = v;
          })
      .def("__repr__", [](PyModel& self) {
        std::ostringstream os;
        os << "Model(c=" << self.model.cfg.c << ", m=" << self.model.cfg.m
           << ", slices=" << self.model.cfg.slices
           << ", lambda_index=" << self.model.lambda_index << ")";
        return os.str();
      });

  m.def(
      "train_toy",
      [](PyModel& model, int steps, int lambda_index, int images,
         int image_size, uint64_t seed, double lr, double clip_norm) {
        hcfs::TrainConfig tc;
        tc.model = model.model.cfg;
        tc.steps = steps;
        tc.lambda_index = lambda_index;
        tc.images = images;
        tc.image_size = image_size;
        tc.seed = seed;
        tc.lr = lr;
        tc.clip_norm = clip_norm;
        std::vector<hcfs::TraceRow> rows;
        {
          py::gil_scoped_release release;
          rows = hcfs::train_toy(model.model, tc);
        }
        py::list out;
        for (const auto& r : rows) {
          py::dict d;
          d["step"] = r.step;
          d["loss"] = r.loss;
          d["rate_y"] = r.rate_y;
          d["rate_z"] = r.rate_z;
          d["distortion"] = r.distortion;
          out.append(d);
        }
        return out;
      },
      py::arg("model"), py::arg("steps") = 500, py::arg("lambda_index") = 3,
      py::arg("images") = 64, py::arg("image_size") = 64, py::arg("seed") = 7,
      py::arg("lr") = 1e-4, py::arg("clip_norm") = 1.0,
      "Train in place on synthetic textures; returns the per-step trace.");

  m.def(
      "bd_rate",
      [](const std::vector<std::pair<double, double>>& anchor,
         const std::vector<std::pair<double, double>>& test) {
        return hcfs::bd_rate_percent(curve_from(anchor, "anchor"),
                                     curve_from(test, "test"));
      },
      py::arg("anchor"), py::arg("test"),
      "Average rate difference (percent) between two (bpp, psnr) curves.");

  m.def("psnr_from_mse", &hcfs::psnr_from_mse, py::arg("mse"),
        "PSNR in dB for a mean squared error on the 8-bit scale.");

  m.def(
      "selftest",
      []() {
        py::gil_scoped_release release;
        return hcfs::run_selftest(std::cout);
      },
      "Run the built-in invariant suite; returns the number of failures.");

  m.def("lambdas", [] {
    return std::vector<double>(hcfs::kLambdas.begin(), hcfs::kLambdas.end());
  });
}

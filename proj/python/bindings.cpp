#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "rarunet/arch.hpp"
#include "rarunet/checkpoint.hpp"
#include "rarunet/config.hpp"
#include "rarunet/dataset.hpp"
#include "rarunet/gradsuite.hpp"
#include "rarunet/metrics.hpp"
#include "rarunet/noise.hpp"
#include "rarunet/train.hpp"

namespace py = pybind11;
using namespace rarunet;

namespace {

using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

BinaryMask to_mask(const MaskArray& a) {
  if (a.ndim() != 2) throw py::value_error("mask must be a 2-D array");
  BinaryMask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  const std::uint8_t* src = a.data();
  for (std::size_t i = 0; i < m.size(); ++i) m.bits[i] = src[i] != 0;
  return m;
}

py::array_t<bool> from_mask(const BinaryMask& m) {
  py::array_t<bool> out({m.height, m.width});
  bool* dst = out.mutable_data();
  for (std::size_t i = 0; i < m.size(); ++i) dst[i] = m.bits[i] != 0;
  return out;
}

ArchConfig arch_with(bool residual_encoders, bool residual_skips, bool attention, int base_channels) {
  ArchConfig a;
  a.use_residual_encoders = residual_encoders;
  a.use_residual_skips = residual_skips;
  a.use_attention_decoders = attention;
  a.base_channels = base_channels;
  return a;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  for (std::size_t i = 0; i < MetricReport::kFields.size(); ++i) {
    const auto& v = r.values[i];
    d[py::str(std::string(MetricReport::kFields[i]))] = v ? py::cast(*v) : py::none();
  }
  return d;
}

/// Float image stack of shape (N, H, W) or (H, W) through the network.
py::array_t<float> predict(const Model<float>& model,
                           py::array_t<float, py::array::c_style | py::array::forcecast> images) {
  const bool single = images.ndim() == 2;
  if (!single && images.ndim() != 3) throw py::value_error("images must have shape (N, H, W) or (H, W)");
  const int n = single ? 1 : static_cast<int>(images.shape(0));
  const int h = static_cast<int>(images.shape(single ? 0 : 1)), w = static_cast<int>(images.shape(single ? 1 : 2));
  Tensor<float> x = Tensor<float>::zeros({n, 1, h, w});
  std::memcpy(x.data().data(), images.data(), x.numel() * sizeof(float));
  Tensor<float> probs;
  {
    py::gil_scoped_release release;
    probs = model.predict(x);
  }
  std::vector<py::ssize_t> shape = single ? std::vector<py::ssize_t>{h, w} : std::vector<py::ssize_t>{n, h, w};
  py::array_t<float> out(shape);
  std::memcpy(out.mutable_data(), probs.values().data(), probs.numel() * sizeof(float));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "RAR-U-Net segmentation with adaptive denoising learning";

  py::register_exception<Error>(m, "RarunetError", PyExc_ValueError);

  m.def("schedule_n", &schedule_n, py::arg("t"), py::arg("alpha"), py::arg("beta"), py::arg("x"), py::arg("y"),
        py::arg("h1") = 0.1, py::arg("h2") = 0.5, "Samples excluded at epoch t.");

  m.def("evaluate", [](const MaskArray& pred, const MaskArray& gt) { return report_dict(evaluate(to_mask(pred), to_mask(gt))); },
        py::arg("pred"), py::arg("gt"), "Twelve metrics; undefined ones are None.");
  m.def("overlap_alpha", [](const MaskArray& gt, const MaskArray& noisy) { return overlap_alpha(to_mask(gt), to_mask(noisy)); },
        py::arg("gt"), py::arg("noisy"));

  m.def("erode", [](const MaskArray& mask, int iterations) { return from_mask(erode(to_mask(mask), iterations)); },
        py::arg("mask"), py::arg("iterations") = 1);
  m.def("dilate", [](const MaskArray& mask, int iterations) { return from_mask(dilate(to_mask(mask), iterations)); },
        py::arg("mask"), py::arg("iterations") = 1);
  m.def("elastic_deform",
        [](const MaskArray& mask, double sigma_e, double magnitude, std::uint64_t seed) {
          return from_mask(elastic_deform(to_mask(mask), sigma_e, magnitude, seed));
        },
        py::arg("mask"), py::arg("sigma_e"), py::arg("magnitude"), py::arg("seed"));
  m.def("calibrate",
        [](const MaskArray& mask, const std::string& kind, double alpha_target, std::uint64_t seed, double tolerance,
           double sigma_e) {
          const Calibration c =
              calibrate(to_mask(mask), NoiseSpec{parse_noise_kind(kind), alpha_target, tolerance, seed, sigma_e});
          py::dict d;
          d["mask"] = from_mask(c.mask);
          d["alpha_achieved"] = c.alpha_achieved;
          d["intensity"] = c.intensity;
          d["infeasible"] = c.infeasible;
          return d;
        },
        py::arg("mask"), py::arg("kind"), py::arg("alpha_target"), py::arg("seed") = 0, py::arg("tolerance") = 0.03,
        py::arg("sigma_e") = 4.0);

  m.def("param_count",
        [](bool residual_encoders, bool residual_skips, bool attention, int base_channels) {
          return param_count(arch_with(residual_encoders, residual_skips, attention, base_channels));
        },
        py::arg("residual_encoders") = true, py::arg("residual_skips") = true, py::arg("attention") = true,
        py::arg("base_channels") = 32);

  py::class_<Model<float>>(m, "Model")
      .def(py::init([](bool residual_encoders, bool residual_skips, bool attention, int base_channels,
                       std::uint64_t seed) {
             return build_model<float>(arch_with(residual_encoders, residual_skips, attention, base_channels), seed);
           }),
           py::arg("residual_encoders") = true, py::arg("residual_skips") = true, py::arg("attention") = true,
           py::arg("base_channels") = 32, py::arg("seed") = 0)
      .def_property_readonly("param_count", &Model<float>::param_count)
      .def_property_readonly("config", [](const Model<float>& model) { return arch_to_json(model.config()); })
      .def("predict", &predict, py::arg("images"), "Foreground probabilities for images in [0, 1].")
      .def("save", [](const Model<float>& model, const std::string& path, int epoch, double val_dice,
                      std::uint64_t seed) { save_checkpoint(path, model, CheckpointMeta{epoch, val_dice, seed}); },
           py::arg("path"), py::arg("epoch") = 0, py::arg("val_dice") = 0.0, py::arg("seed") = 0);

  m.def("load_checkpoint",
        [](const std::string& path) {
          Checkpoint c = load_checkpoint(path);
          py::dict meta;
          meta["epoch"] = c.meta.epoch;
          meta["val_dice"] = c.meta.val_dice;
          meta["seed"] = c.meta.seed;
          return py::make_tuple(std::move(c.model), meta);
        },
        py::arg("path"), "Returns (Model, meta dict).");

  m.def("gen_synth",
        [](int n, int size, std::uint64_t seed, const std::string& out) {
          return gen_synth(n, size, seed, out).records.size();
        },
        py::arg("n"), py::arg("size"), py::arg("seed"), py::arg("out"), "Writes a synthetic dataset; returns the sample count.");
  m.def("corrupt",
        [](const std::string& manifest_path, double beta, double alpha, const std::vector<std::string>& kinds,
           std::uint64_t seed, double sigma_e) {
          Manifest manifest = load_manifest(manifest_path);
          std::vector<NoiseKind> parsed;
          for (const auto& k : kinds) parsed.push_back(parse_noise_kind(k));
          const auto records = corrupt_dataset(manifest, beta, alpha, parsed, seed, sigma_e);
          save_manifest(manifest, manifest_path);
          py::list out;
          for (const auto& r : records) {
            if (!r.corrupted) continue;
            py::dict d;
            d["sample_id"] = r.sample_id;
            d["kind"] = std::string(to_string(*r.kind));
            d["alpha_achieved"] = r.alpha_achieved;
            d["infeasible"] = r.infeasible;
            out.append(d);
          }
          return out;
        },
        py::arg("manifest"), py::arg("beta"), py::arg("alpha"),
        py::arg("kinds") = std::vector<std::string>{"erosion", "dilation", "elastic"}, py::arg("seed") = 0,
        py::arg("sigma_e") = 4.0, "Corrupts training masks in place; returns the corrupted records.");

  m.def("gradcheck",
        [](bool include_model) {
          std::vector<std::pair<std::string, double>> out;
          for (const auto& o : run_gradient_suite(include_model)) out.emplace_back(o.name, o.max_rel_error);
          return out;
        },
        py::arg("include_model") = false, "(check name, max relative error) pairs.");
}

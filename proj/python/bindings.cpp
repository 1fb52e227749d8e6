// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dmkd/attention.hpp"
#include "dmkd/dataset.hpp"
#include "dmkd/distill.hpp"
#include "dmkd/errors.hpp"
#include "dmkd/gradcheck.hpp"
#include "dmkd/masking.hpp"
#include "dmkd/ops.hpp"
#include "dmkd/rng.hpp"

namespace py = pybind11;
using dmkd::Tensor;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a, bool requires_grad = false) {
  dmkd::Shape shape(a.shape(), a.shape() + a.ndim());
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

Array to_array(const dmkd::Shape& shape, std::span<const double> data) {
  std::vector<py::ssize_t> dims(shape.begin(), shape.end());
  Array out(dims);
  std::memcpy(out.mutable_data(), data.data(), data.size() * sizeof(double));
  return out;
}

Array to_array(const Tensor& t) { return to_array(t.shape(), t.data()); }

Array grad_array(const Tensor& t) {
  if (!t.has_grad()) return to_array(Tensor::zeros(t.shape()));
  return to_array(t.shape(), t.grad());
}

py::array_t<int> to_int_array(const std::vector<int>& v) {
  py::array_t<int> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(int));
  return out;
}

double scalar_grad(const Tensor& t) { return t.has_grad() ? t.grad()[0] : 0.0; }

// Head with its channel counts; Python never handles the Rng.
struct PyHead {
  dmkd::DistillHead head;
  std::size_t student_channels;
  std::size_t teacher_channels;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dual masked knowledge distillation core.";

  auto base = py::register_exception<dmkd::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<dmkd::ShapeMismatch>(m, "ShapeMismatch", base.ptr());
  py::register_exception<dmkd::NonPositiveTemperature>(m, "NonPositiveTemperature", base.ptr());
  py::register_exception<dmkd::ThresholdOutOfRange>(m, "ThresholdOutOfRange", base.ptr());
  py::register_exception<dmkd::NonBinaryInput>(m, "NonBinaryInput", base.ptr());
  py::register_exception<dmkd::CheckpointInvalid>(m, "CheckpointInvalid", base.ptr());
  py::register_exception<dmkd::ConfigError>(m, "ConfigError", base.ptr());

  m.def("variants", [] {
    std::vector<std::string> names;
    for (auto v : {dmkd::Variant::kDual, dmkd::Variant::kSpatialOnly, dmkd::Variant::kChannelOnly,
                   dmkd::Variant::kRandomMask, dmkd::Variant::kNoMask, dmkd::Variant::kBaselineFitNet})
      names.emplace_back(dmkd::variant_name(v));
    return names;
  });

  py::class_<dmkd::DistillConfig>(m, "DistillConfig")
      .def(py::init<>())
      .def_readwrite("tau_s", &dmkd::DistillConfig::tau_s)
      .def_readwrite("tau_c", &dmkd::DistillConfig::tau_c)
      .def_readwrite("temperature", &dmkd::DistillConfig::temperature)
      .def_readwrite("gamma", &dmkd::DistillConfig::gamma)
      .def_readwrite("alpha_init", &dmkd::DistillConfig::alpha_init)
      .def_readwrite("beta_init", &dmkd::DistillConfig::beta_init)
      .def_readwrite("random_mask_ratio", &dmkd::DistillConfig::random_mask_ratio)
      .def_readwrite("seed", &dmkd::DistillConfig::seed)
      .def_property(
          "variant", [](const dmkd::DistillConfig& c) { return std::string(dmkd::variant_name(c.variant)); },
          [](dmkd::DistillConfig& c, const std::string& name) { c.variant = dmkd::parse_variant(name); })
      .def("validate", &dmkd::DistillConfig::validate);

  py::class_<PyHead>(m, "DistillHead")
      .def(py::init([](std::size_t cs, std::size_t ct, const dmkd::DistillConfig& cfg, std::uint64_t seed) {
             auto rng = dmkd::make_rng(seed, dmkd::RngStream::kBlocksInit);
             return PyHead{dmkd::DistillHead::make(cs, ct, cfg, rng), cs, ct};
           }),
           py::arg("student_channels"), py::arg("teacher_channels"),
           py::arg("config") = dmkd::DistillConfig{}, py::arg("seed") = 0)
      .def_readonly("student_channels", &PyHead::student_channels)
      .def_readonly("teacher_channels", &PyHead::teacher_channels)
      .def_property(
          "alpha", [](const PyHead& h) { return h.head.fusion.alpha.item(); },
          [](PyHead& h, double v) { h.head.fusion.alpha.mutable_data()[0] = v; })
      .def_property(
          "beta", [](const PyHead& h) { return h.head.fusion.beta.item(); },
          [](PyHead& h, double v) { h.head.fusion.beta.mutable_data()[0] = v; })
      .def("num_parameters", [](const PyHead& h) {
        return dmkd::count_parameters(h.head.all_parameters());
      });

  m.def("spatial_attention",
        [](const Array& f, double t) { return to_array(dmkd::spatial_attention(to_tensor(f), t)); },
        py::arg("teacher"), py::arg("temperature") = 0.5);
  m.def("channel_attention",
        [](const Array& f, double t) { return to_array(dmkd::channel_attention(to_tensor(f), t)); },
        py::arg("teacher"), py::arg("temperature") = 0.5);
  m.def("threshold_mask",
        [](const Array& a, double tau) { return to_array(dmkd::threshold_mask(to_tensor(a), tau)); },
        py::arg("attention"), py::arg("tau"));
  m.def(
      "make_masks",
      [](const Array& f, double tau_s, double tau_c, double t) {
        const auto masks = dmkd::make_masks(dmkd::compute_attention(to_tensor(f), t), tau_s, tau_c);
        return py::make_tuple(to_array(masks.spatial), to_array(masks.channel));
      },
      py::arg("teacher"), py::arg("tau_s") = 0.55, py::arg("tau_c") = 0.65, py::arg("temperature") = 0.5);
  m.def("apply_mask",
        [](const Array& f, const Array& mask) { return to_array(dmkd::apply_mask(to_tensor(f), to_tensor(mask))); },
        py::arg("feature"), py::arg("mask"));
  m.def("mask_ratio", [](const Array& mask) { return dmkd::mask_ratio(to_tensor(mask)); }, py::arg("mask"));
  m.def(
      "conv2d",
      [](const Array& x, const Array& w, std::optional<Array> b) {
        return to_array(dmkd::conv2d(to_tensor(x), to_tensor(w), b ? to_tensor(*b) : Tensor()));
      },
      py::arg("x"), py::arg("weight"), py::arg("bias") = py::none());

  m.def(
      "dmkd_forward",
      [](const Array& student, const Array& teacher, PyHead& head, const dmkd::DistillConfig& cfg,
         std::uint64_t mask_seed) {
        cfg.validate();
        Tensor s = to_tensor(student, true);
        dmkd::LevelPair level{s, to_tensor(teacher), 0};
        auto rng = dmkd::make_rng(mask_seed, dmkd::RngStream::kRandomMask);
        for (auto& p : head.head.all_parameters()) p.clear_grad();
        const auto out = dmkd::dmkd_forward(level, cfg, head.head, &rng);
        dmkd::backward(out.loss);
        py::dict d;
        d["loss"] = out.loss.item();
        d["reconstruction"] = to_array(out.reconstruction.detach());
        d["spatial_mask"] = to_array(out.masks.spatial);
        d["channel_mask"] = to_array(out.masks.channel);
        d["mask_ratio_s"] = out.mask_ratio_s;
        d["mask_ratio_c"] = out.mask_ratio_c;
        d["student_grad"] = grad_array(s);
        d["alpha_grad"] = scalar_grad(head.head.fusion.alpha);
        d["beta_grad"] = scalar_grad(head.head.fusion.beta);
        for (auto& p : head.head.all_parameters()) p.clear_grad();
        return d;
      },
      py::arg("student"), py::arg("teacher"), py::arg("head"), py::arg("config") = dmkd::DistillConfig{},
      py::arg("mask_seed") = 0);

  m.def(
      "generate_dataset",
      [](std::uint64_t seed, std::size_t n_train, std::size_t n_test) {
        const auto ds = dmkd::generate_dataset(seed, n_train, n_test);
        py::dict d;
        d["train_images"] = to_array(ds.train_images);
        d["train_labels"] = to_int_array(ds.train_labels);
        d["test_images"] = to_array(ds.test_images);
        d["test_labels"] = to_int_array(ds.test_labels);
        return d;
      },
      py::arg("seed") = 0, py::arg("n_train") = 1024, py::arg("n_test") = 256);

  m.def(
      "gradcheck",
      [](std::vector<std::uint64_t> seeds) {
        py::list out;
        for (const auto& r : dmkd::run_gradcheck_seeds(seeds)) {
          py::dict d;
          d["name"] = r.name;
          d["max_rel_error"] = r.max_rel_error;
          d["tolerance"] = r.tolerance;
          d["passed"] = r.passed;
          out.append(d);
        }
        return out;
      },
      py::arg("seeds") = std::vector<std::uint64_t>{0});
}

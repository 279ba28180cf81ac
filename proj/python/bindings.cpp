#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ctrec/inference.hpp"
#include "ctrec/losses.hpp"
#include "ctrec/manifest.hpp"
#include "ctrec/metrics.hpp"
#include "ctrec/synthgen.hpp"
#include "ctrec/trainer.hpp"

namespace py = pybind11;
using namespace ctrec;

namespace {

Image8 image_from_numpy(const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3) throw std::invalid_argument("image must be HxWxC");
    Image8 img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
               static_cast<int>(a.shape(2)));
    std::copy(a.data(), a.data() + a.size(), img.px.begin());
    return img;
}

py::array_t<uint8_t> image_to_numpy(const Image8& img) {
    py::array_t<uint8_t> a({img.height, img.width, img.channels});
    std::copy(img.px.begin(), img.px.end(), a.mutable_data());
    return a;
}

Tensor tensor_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = static_cast<int>(a.shape(i));
    std::vector<real> data(a.data(), a.data() + a.size());
    return Tensor::from(std::move(shape), std::move(data));
}

py::array_t<double> tensor_to_numpy(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> a(shape);
    std::copy(t.data(), t.data() + t.size(), a.mutable_data());
    return a;
}

CountTable counts_from_list(const std::vector<std::array<int, 2>>& rows) {
    return CountTable(rows.begin(), rows.end());
}

}  // namespace

PYBIND11_MODULE(_ctrec, m) {
    m.doc() = "core operations of the camera-trap recognition toolkit";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<ContractViolation>(m, "ContractViolation");

    m.def(
        "detect_domain",
        [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& img,
           int tolerance) { return std::string(to_string(detect_domain(image_from_numpy(img), tolerance))); },
        py::arg("image"), py::arg("tolerance") = 0);

    m.def(
        "make_night",
        [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& img,
           double brightness) { return image_to_numpy(make_night(image_from_numpy(img), brightness)); },
        py::arg("image"), py::arg("brightness") = 1.0);

    m.def(
        "focal_loss",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& logits, int y,
           double gamma) {
            return focal_loss(Var(tensor_from_numpy(logits)), y, gamma).value()[0];
        },
        py::arg("logits"), py::arg("class_y"), py::arg("gamma") = 5.0,
        "frame-summed focal classification loss for (3,C) logits");

    m.def(
        "warp",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& map,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& flow) {
            return tensor_to_numpy(warp(Var(tensor_from_numpy(map)), tensor_from_numpy(flow)).value());
        },
        py::arg("map"), py::arg("flow"), "backward bilinear warp; flow is (2,h,w) in pixels");

    m.def(
        "ssim",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b, int window) {
            LossConfig cfg;
            cfg.ssim_window = window;
            return ssim(Var(tensor_from_numpy(a)), Var(tensor_from_numpy(b)), cfg).value()[0];
        },
        py::arg("a"), py::arg("b"), py::arg("window") = 3);

    m.def(
        "photometric_loss",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b, double alpha,
           int window) {
            LossConfig cfg;
            cfg.alpha = alpha;
            cfg.ssim_window = window;
            return photometric_loss(Var(tensor_from_numpy(a)), Var(tensor_from_numpy(b)), cfg)
                .value()[0];
        },
        py::arg("a"), py::arg("b"), py::arg("alpha") = 0.85, py::arg("window") = 3);

    m.def(
        "downscale_flow",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& flow, int h,
           int w) { return tensor_to_numpy(downscale_flow(tensor_from_numpy(flow), h, w)); },
        py::arg("flow"), py::arg("target_h"), py::arg("target_w"));

    m.def(
        "scaled_lr",
        [](double lr_full, const std::vector<std::array<int, 2>>& counts) {
            const LearningRates lr = scaled_lr(lr_full, counts_from_list(counts));
            py::dict d;
            d["full"] = lr.full;
            d["day"] = lr.day;
            d["night"] = lr.night;
            return d;
        },
        py::arg("lr_full"), py::arg("counts"),
        "Linear Scaling Rule learning rates from per-class domain counts");

    m.def("scale_sub_logits", &scale_sub_logits, py::arg("logits"), py::arg("sqnorm_sub"),
          py::arg("sqnorm_full"));
    m.def("fuse", &fuse, py::arg("full_logits"), py::arg("sub_logits"));
    m.def("argmax_logits", &argmax_logits, py::arg("logits"));

    m.def(
        "shot_split", [](int count) { return std::string(to_string(shot_split(count))); },
        py::arg("train_count"));
    m.def(
        "imbalanced_classes",
        [](const std::vector<std::array<int, 2>>& counts) {
            return imbalanced_classes(counts_from_list(counts));
        },
        py::arg("counts"));

    m.def(
        "flo_roundtrip",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& flow,
           const std::string& path) {
            flo_write(path, tensor_from_numpy(flow));
            return tensor_to_numpy(flo_read(path));
        },
        py::arg("flow"), py::arg("path"), "write then re-read a Middlebury .flo file");
}

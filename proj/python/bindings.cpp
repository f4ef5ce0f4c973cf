// Python bindings for the core operations.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dlaseg/adversarial.hpp"
#include "dlaseg/checkpoint.hpp"
#include "dlaseg/dla.hpp"
#include "dlaseg/metrics.hpp"
#include "dlaseg/render.hpp"

namespace py = pybind11;
using namespace dlaseg;

namespace {

Tensor tensor_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> a) {
    std::vector<std::size_t> dims(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) dims[i] = static_cast<std::size_t>(a.shape(i));
    Tensor t(dims);
    std::copy(a.data(), a.data() + t.size(), t.data.begin());
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
    py::array_t<double> a(shape);
    std::copy(t.data.begin(), t.data.end(), a.mutable_data());
    return a;
}

py::array_t<std::uint8_t> array_from_labels(const LabelMap& m) {
    py::array_t<std::uint8_t> a(std::vector<py::ssize_t>{py::ssize_t(m.h), py::ssize_t(m.w)});
    std::copy(m.v.begin(), m.v.end(), a.mutable_data());
    return a;
}

LabelMap labels_from_array(py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> a) {
    if (a.ndim() != 2) throw ContractError("label map must be 2-D");
    LabelMap m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + m.v.size(), m.v.begin());
    return m;
}

}  // namespace

PYBIND11_MODULE(_dlaseg, mod) {
    mod.doc() = "Direction-aware additive kernels for floor-plan segmentation";

    mod.def("materialize_dla",
            [](py::array_t<double, py::array::c_style | py::array::forcecast> params) {
                if (params.ndim() != 3 || params.shape(2) != 6)
                    throw ContractError("params must have shape [D, C, 6]");
                DLAKernel k(static_cast<std::size_t>(params.shape(0)),
                            static_cast<std::size_t>(params.shape(1)));
                std::copy(params.data(), params.data() + k.params.size(),
                          k.params.data.begin());
                return array_from_tensor(materialize(k).weights);
            },
            py::arg("params"),
            "Expand [D, C, 6] additive parameters to dense [D, C, 3, 3] weights");

    mod.def("conv2d",
            [](py::array_t<double> x, py::array_t<double> w, py::array_t<double> b,
               std::size_t pad, std::size_t stride) {
                ConvKernel k;
                k.weights = tensor_from_array(w);
                Tensor bias = tensor_from_array(b);
                k.bias.assign(bias.data.begin(), bias.data.end());
                k.pad_h = k.pad_w = pad;
                k.stride = stride;
                return array_from_tensor(conv2d(tensor_from_array(x), k));
            },
            py::arg("x"), py::arg("weights"), py::arg("bias"), py::arg("pad") = 1,
            py::arg("stride") = 1);

    mod.def("fold_batchnorm",
            [](py::array_t<double> w, py::array_t<double> b, py::array_t<double> mean,
               py::array_t<double> std, py::array_t<double> scale,
               py::array_t<double> shift, double eps) {
                ConvKernel k;
                k.weights = tensor_from_array(w);
                Tensor bias = tensor_from_array(b);
                k.bias.assign(bias.data.begin(), bias.data.end());
                k.pad_h = k.pad_w = k.weights.dims[2] / 2;
                BatchNormParams bn;
                auto vec = [](py::array_t<double> a) {
                    Tensor t = tensor_from_array(a);
                    return std::vector<double>(t.data.begin(), t.data.end());
                };
                bn.mean = vec(mean);
                bn.std = vec(std);
                bn.scale = vec(scale);
                bn.shift = vec(shift);
                bn.epsilon = eps;
                ConvKernel folded = fold_batchnorm(k, bn);
                return py::make_tuple(array_from_tensor(folded.weights),
                                      py::cast(folded.bias));
            },
            py::arg("weights"), py::arg("bias"), py::arg("mean"), py::arg("std"),
            py::arg("scale"), py::arg("shift"), py::arg("eps") = 1e-5);

    mod.def("apply_patch_noise",
            [](py::array_t<double> probs, std::size_t patch, double gstd, double uhw,
               double gprob, std::uint64_t seed) {
                NoiseConfig cfg;
                cfg.patch_size = patch;
                cfg.gaussian_std = gstd;
                cfg.uniform_halfwidth = uhw;
                cfg.gaussian_prob = gprob;
                cfg.seed = seed;
                std::mt19937_64 rng(seed);
                return array_from_tensor(apply_patch_noise(tensor_from_array(probs), cfg, rng));
            },
            py::arg("probs"), py::arg("patch_size") = 8, py::arg("gaussian_std") = 0.1,
            py::arg("uniform_halfwidth") = 0.1, py::arg("gaussian_prob") = 0.5,
            py::arg("seed") = 0);

    mod.def("loss_seg",
            [](py::array_t<double> probs, py::array_t<double> onehot) {
                return loss_seg(tensor_from_array(probs), tensor_from_array(onehot));
            },
            py::arg("probs"), py::arg("one_hot"));

    mod.def("segmentation_metrics",
            [](py::array_t<std::uint8_t> pred, py::array_t<std::uint8_t> gt,
               std::size_t num_classes) {
                ClassCounts c(num_classes);
                c.accumulate(labels_from_array(pred), labels_from_array(gt));
                py::dict out;
                out["overall_accuracy"] = c.overall_accuracy();
                out["mean_iou"] = c.mean_iou();
                py::list accs;
                for (std::size_t i = 0; i < num_classes; ++i) {
                    auto a = c.class_accuracy(i);
                    accs.append(a ? py::cast(*a) : py::none());
                }
                out["class_accuracy"] = accs;
                return out;
            },
            py::arg("pred"), py::arg("gt"), py::arg("num_classes"));

    mod.def("generate_floorplan",
            [](std::size_t height, std::size_t width, std::uint64_t seed) {
                FloorPlanSpec spec;
                spec.height = height;
                spec.width = width;
                spec.seed = seed;
                FloorPlanSample s = generate_floorplan(spec, 0);
                return py::make_tuple(array_from_tensor(s.image),
                                      array_from_labels(s.boundary),
                                      array_from_labels(s.room));
            },
            py::arg("height") = 64, py::arg("width") = 64, py::arg("seed") = 0,
            "Generate one synthetic sample: (image [3,H,W], boundary [H,W], room [H,W])");

    mod.def("one_hot",
            [](py::array_t<std::uint8_t> labels, std::size_t num_classes) {
                return array_from_tensor(one_hot(labels_from_array(labels), num_classes));
            },
            py::arg("labels"), py::arg("num_classes"));

    mod.attr("BOUNDARY_CLASSES") = kBoundaryClasses;
    mod.attr("ROOM_CLASSES") = kRoomClasses;
}

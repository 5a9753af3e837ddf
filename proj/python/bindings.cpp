#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fdl/cam.hpp"
#include "fdl/checkpoint.hpp"
#include "fdl/cli.hpp"
#include "fdl/data.hpp"
#include "fdl/distance.hpp"
#include "fdl/feature.hpp"
#include "fdl/trainer.hpp"
#include "fdl/verify.hpp"

namespace py = pybind11;
using namespace fdl;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const DoubleArray& arr) {
    Shape shape;
    for (py::ssize_t d = 0; d < arr.ndim(); ++d)
        shape.push_back(static_cast<int>(arr.shape(d)));
    std::vector<double> values(arr.data(), arr.data() + arr.size());
    return Tensor(std::move(shape), std::move(values));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape;
    for (int e : t.shape()) shape.push_back(e);
    py::array_t<double> arr(shape);
    std::copy(t.data(), t.data() + t.size(), arr.mutable_data());
    return arr;
}

DistanceSpec make_spec(const std::string& kind, double alpha, double beta, double epsilon) {
    DistanceSpec spec;
    spec.kind = distance_kind_from_string(kind);
    spec.alpha = alpha;
    spec.beta = beta;
    spec.epsilon = epsilon;
    return spec;
}

/// Checkpointed base model exposed to python for inference and Grad-CAM.
struct PyModel {
    LayerGraph model;

    static PyModel load(const std::string& path) {
        return {model_from_checkpoint(load_checkpoint(path))};
    }

    std::vector<py::ssize_t> input_shape() const {
        return {model.input_shape()[0], model.input_shape()[1], model.input_shape()[2]};
    }

    py::tuple predict(const DoubleArray& image) const {
        Tensor img = tensor_from_array(image);
        Graph g;
        Tensor logits = model.forward(g, img).logits;
        Graph g2;
        Tensor probs = g2.softmax(logits);
        int cls = 0;
        for (std::size_t i = 1; i < probs.size(); ++i)
            if (probs[i] > probs[static_cast<std::size_t>(cls)]) cls = static_cast<int>(i);
        return py::make_tuple(cls, array_from_tensor(probs));
    }

    py::array_t<double> last_conv(const DoubleArray& image) const {
        Tensor img = tensor_from_array(image);
        Graph g;
        return array_from_tensor(model.forward(g, img).last_conv);
    }

    py::array_t<double> cam(const DoubleArray& image, int class_id) const {
        return array_from_tensor(grad_cam(model, tensor_from_array(image), class_id).values);
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "CNN ensembles trained under a feature distance loss";

    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

    m.def(
        "aggregate",
        [](const DoubleArray& maps) {
            Graph g;
            return array_from_tensor(aggregate(g, tensor_from_array(maps)));
        },
        py::arg("feature_maps"), "Channel-wise pointwise sum of an [h,w,d] activation.");

    m.def(
        "mask",
        [](const DoubleArray& aggregation) {
            Graph g;
            double tau = 0.0;
            Tensor masked = mask(g, tensor_from_array(aggregation), &tau);
            return py::make_tuple(array_from_tensor(masked), tau);
        },
        py::arg("aggregation"),
        "Mean-threshold mask; returns (masked map, tau).");

    m.def(
        "represent",
        [](const DoubleArray& maps) {
            Graph g;
            FeatureRepresentation rep = represent(g, tensor_from_array(maps));
            return py::make_tuple(array_from_tensor(rep.vector), rep.tau);
        },
        py::arg("feature_maps"),
        "Vectorized global feature representation of an [h,w,d] activation.");

    m.def(
        "pair_loss",
        [](const DoubleArray& vi, const DoubleArray& vj, const std::string& kind, double alpha,
           double beta, double epsilon) {
            return pair_loss_value(tensor_from_array(vi).flattened(),
                                   tensor_from_array(vj).flattened(),
                                   make_spec(kind, alpha, beta, epsilon));
        },
        py::arg("vi"), py::arg("vj"), py::arg("kind") = "cosine_plus_euclidean",
        py::arg("alpha") = 1.0, py::arg("beta") = 10.0, py::arg("epsilon") = 1e-8,
        "Pairwise feature-distance loss between two representations.");

    m.def(
        "pairwise_report",
        [](const std::vector<DoubleArray>& reps, const std::string& kind, double alpha,
           double beta, double epsilon) {
            std::vector<Tensor> tensors;
            tensors.reserve(reps.size());
            for (const auto& r : reps) tensors.push_back(tensor_from_array(r).flattened());
            auto mat = pairwise_report(tensors, make_spec(kind, alpha, beta, epsilon));
            py::ssize_t n = static_cast<py::ssize_t>(tensors.size());
            py::array_t<double> out({n, n});
            std::copy(mat.begin(), mat.end(), out.mutable_data());
            return out;
        },
        py::arg("reps"), py::arg("kind") = "cosine_plus_euclidean", py::arg("alpha") = 1.0,
        py::arg("beta") = 10.0, py::arg("epsilon") = 1e-8,
        "Symmetric matrix of pair losses (diagonal alpha+beta).");

    m.def(
        "overlap",
        [](const std::vector<DoubleArray>& maps, double q) {
            std::vector<HeatMap> hms;
            for (const auto& a : maps) {
                HeatMap hm;
                hm.values = tensor_from_array(a);
                hms.push_back(std::move(hm));
            }
            return overlap(hms, q);
        },
        py::arg("maps"), py::arg("q") = 0.75,
        "Mean pairwise IoU of top-quantile heatmap regions.");

    m.def(
        "two_patch",
        [](int n_per_class, int image_size, std::uint64_t seed) {
            Dataset ds = make_two_patch(n_per_class, image_size, seed);
            py::list images;
            for (const auto& img : ds.images) images.append(array_from_tensor(img));
            py::dict out;
            out["images"] = images;
            out["labels"] = ds.labels;
            out["train_idx"] = ds.train_idx;
            out["val_idx"] = ds.val_idx;
            out["test_idx"] = ds.test_idx;
            return out;
        },
        py::arg("n_per_class"), py::arg("image_size") = 16, py::arg("seed") = 0,
        "Synthetic two-glyph diversity dataset with 60/20/20 splits.");

    py::class_<PyModel>(m, "Model")
        .def_static("load", &PyModel::load, py::arg("checkpoint_path"))
        .def_property_readonly("input_shape", &PyModel::input_shape)
        .def("predict", &PyModel::predict, py::arg("image"),
             "Returns (class, softmax probabilities).")
        .def("last_conv", &PyModel::last_conv, py::arg("image"))
        .def("cam", &PyModel::cam, py::arg("image"), py::arg("class_id"),
             "Grad-CAM heatmap in [0,1].");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) { return run_cli(args); },
        py::arg("args"),
        "Invoke the command-line pipeline (train/fuse/eval/cam/verify); returns the exit code.");

    m.def("verify", []() {
        auto results = verify::run_fast_checks();
        py::list out;
        for (const auto& r : results) out.append(py::make_tuple(r.name, r.pass, r.detail));
        return out;
    }, "Run the embedded fast self-checks; returns [(name, pass, detail)].");
}

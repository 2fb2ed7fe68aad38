#include <cmath>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "uqlab/errors.hpp"
#include "uqlab/harness.hpp"
#include "uqlab/io.hpp"

namespace py = pybind11;
using namespace uqlab;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const DoubleArray& a) {
    if (a.ndim() != 1) throw DimensionError("expected a one-dimensional array");
    return {a.data(), a.data() + a.size()};
}

std::vector<int> to_labels(const IntArray& a) {
    if (a.ndim() != 1) throw DimensionError("expected a one-dimensional array");
    return {a.data(), a.data() + a.size()};
}

// Rows from an (n, 2) probability array; uncertainty is the entropy.
PredictionSet from_probs(const DoubleArray& probs, const IntArray& labels) {
    if (probs.ndim() != 2 || probs.shape(1) != 2) throw DimensionError("probs must have shape (n, 2)");
    const auto y = to_labels(labels);
    if (y.size() != static_cast<std::size_t>(probs.shape(0))) {
        throw DimensionError("probs and labels differ in length");
    }
    PredictionSet p{"python", "python", 0, true, {}};
    auto v = probs.unchecked<2>();
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double p0 = v(i, 0), p1 = v(i, 1);
        if (!(p0 >= 0 && p1 >= 0 && std::abs(p0 + p1 - 1.0) <= 1e-9)) {
            throw DataError("row " + std::to_string(i) + ": probabilities must be non-negative and sum to 1");
        }
        if (y[i] != 0 && y[i] != 1) throw DataError("row " + std::to_string(i) + ": label must be 0 or 1");
        PredictionRow r;
        r.sample_id = i;
        r.label = y[i];
        r.probs = {p0, p1};
        r.uncertainty = entropy(r.probs);
        p.rows.push_back(r);
    }
    return p;
}

DoubleArray matrix_to_array(const Matrix& m) {
    DoubleArray out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

py::dict result_dict(const ExperimentResult& r) {
    py::dict d;
    d["metrics_csv"] = metrics_csv(r.report);
    d["metrics_table"] = metrics_table(r.report);
    d["fraction_retained_csv"] = fraction_retained_csv(r);
    d["threshold_accuracy_csv"] = threshold_accuracy_csv(r);
    py::dict transfer;
    for (const auto& m : r.transfer) transfer[py::str(m.method)] = transfer_csv(m);
    d["transfer_csv"] = transfer;
    d["predictions"] = r.predictions;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Uncertainty-estimation benchmark core";

    auto error = py::register_exception<Error>(m, "UqlabError", PyExc_RuntimeError);
    py::register_exception<DimensionError>(m, "DimensionError", error);
    py::register_exception<ParameterError>(m, "ParameterError", error);
    auto data_error = py::register_exception<DataError>(m, "DataError", error);
    py::register_exception<NumericalError>(m, "NumericalError", error);
    py::register_exception<ConfigError>(m, "ConfigError", error);
    py::register_exception<StateError>(m, "StateError", error);
    py::register_exception<IoError>(m, "IoError", error);
    py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", data_error);
    py::register_exception<ParseError>(m, "ParseError", data_error);
    py::register_exception<VersionError>(m, "VersionError", data_error);

    m.def("softmax", [](double z0, double z1) { return softmax(Logits{z0, z1}); });
    m.def("entropy", [](double p0, double p1) { return entropy(Probs{p0, p1}); });
    m.def("derive_seed", &derive_seed, py::arg("base"), py::arg("label"), py::arg("index") = 0);

    m.def(
        "two_moons",
        [](std::size_t n, double noise, std::uint64_t seed, std::size_t dim) {
            Rng rng(seed);
            const auto d = make_two_moons(n, noise, rng, dim);
            return py::make_tuple(matrix_to_array(d.features), py::cast(d.labels));
        },
        py::arg("n"), py::arg("noise") = 0.1, py::arg("seed") = 0, py::arg("dim") = 2);

    m.def(
        "ece", [](const DoubleArray& probs, const IntArray& labels, std::size_t bins) {
            return ece(from_probs(probs, labels), bins);
        },
        py::arg("probs"), py::arg("labels"), py::arg("bins") = kDefaultBins);
    m.def(
        "mce", [](const DoubleArray& probs, const IntArray& labels, std::size_t bins) {
            return mce(from_probs(probs, labels), bins);
        },
        py::arg("probs"), py::arg("labels"), py::arg("bins") = kDefaultBins);
    m.def(
        "average_precision",
        [](const DoubleArray& scores, const IntArray& labels) {
            return average_precision(to_vector(scores), to_labels(labels));
        },
        py::arg("scores"), py::arg("labels"));
    m.def(
        "auroc_ood",
        [](const DoubleArray& id, const DoubleArray& ood) { return auroc_ood(to_vector(id), to_vector(ood)); },
        py::arg("scores_id"), py::arg("scores_ood"));
    m.def(
        "youden_threshold",
        [](const DoubleArray& id, const DoubleArray& ood) {
            const auto d = youden_threshold(to_vector(id), to_vector(ood));
            return py::make_tuple(d.threshold, d.j);
        },
        py::arg("scores_id"), py::arg("scores_ood"));

    py::class_<PredictionSet>(m, "PredictionSet")
        .def_readonly("method", &PredictionSet::method)
        .def_readonly("tag", &PredictionSet::tag)
        .def_readonly("seed", &PredictionSet::seed)
        .def("__len__", &PredictionSet::size)
        .def("uncertainties", [](const PredictionSet& p) { return py::array(py::cast(p.uncertainties())); })
        .def("positive_probs", [](const PredictionSet& p) { return py::array(py::cast(p.positive_probs())); })
        .def("labels", [](const PredictionSet& p) { return py::array(py::cast(p.labels())); })
        .def("accuracy", [](const PredictionSet& p) { return accuracy(p); })
        .def("ece", [](const PredictionSet& p, std::size_t bins) { return ece(p, bins); },
             py::arg("bins") = kDefaultBins)
        .def("__eq__", [](const PredictionSet& a, const PredictionSet& b) { return a == b; })
        .def("__repr__", [](const PredictionSet& p) {
            return "<PredictionSet " + p.method + " " + p.tag + " seed " + std::to_string(p.seed) + " n=" +
                   std::to_string(p.size()) + ">";
        });

    m.def("load_predictions", &load_predictions, py::arg("path"));
    m.def(
        "save_predictions",
        [](const std::vector<PredictionSet>& sets, const std::filesystem::path& path) {
            save_predictions(sets, path);
        },
        py::arg("sets"), py::arg("path"));

    m.def("default_config", [] { return config_to_json(ExperimentConfig{}); });
    m.def(
        "run_experiment",
        [](const std::string& config_json, const std::optional<std::filesystem::path>& report_dir) {
            const auto cfg = parse_config(config_json);
            ExperimentResult r;
            {
                py::gil_scoped_release release;
                r = run_experiment(cfg);
                if (report_dir) emit_report(r, *report_dir);
            }
            return result_dict(r);
        },
        py::arg("config_json"), py::arg("report_dir") = std::nullopt);
}

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rebar/cli.hpp"
#include "rebar/config.hpp"
#include "rebar/contrastive.hpp"
#include "rebar/data.hpp"
#include "rebar/errors.hpp"
#include "rebar/evaluation.hpp"
#include "rebar/masking.hpp"
#include "rebar/measure.hpp"
#include "rebar/rebar_net.hpp"

namespace py = pybind11;
using namespace rebar;

namespace {

using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

Mask to_mask(const BoolArray& a, MaskKind kind = MaskKind::transient) {
    if (a.ndim() != 1) throw SizeError("mask must be one-dimensional");
    Mask m;
    m.kind = kind;
    m.flags.assign(a.data(), a.data() + a.size());
    return m;
}

py::array_t<bool> from_mask(const Mask& m) {
    py::array_t<bool> out(static_cast<py::ssize_t>(m.flags.size()));
    auto v = out.mutable_unchecked<1>();
    for (std::size_t i = 0; i < m.flags.size(); ++i) v(static_cast<py::ssize_t>(i)) = m.flags[i] != 0;
    return out;
}

}  // namespace

PYBIND11_MODULE(_rebar, m) {
    m.doc() = "Learned time-series distance via masked cross-attention reconstruction.";

    auto base = py::register_exception<Error>(m, "RebarError", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<ConsistencyError>(m, "ConsistencyError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<SizeError>(m, "SizeError", base.ptr());
    py::register_exception<NotFoundError>(m, "NotFoundError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<MissingArtifactError>(m, "MissingArtifactError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    m.def("run_cli", &run_cli, py::arg("args"), py::call_guard<py::gil_scoped_release>(),
          "Run one command line and return its exit code.");
    m.attr("OUTPUT_ROOT_ENV") = kOutputRootEnv;

    py::class_<TimeSeriesDataset>(m, "Dataset")
        .def_readonly("num_classes", &TimeSeriesDataset::num_classes)
        .def_readonly("class_names", &TimeSeriesDataset::class_names)
        .def_property_readonly("channels", &TimeSeriesDataset::channels)
        .def_property_readonly("series_ids",
                               [](const TimeSeriesDataset& d) {
                                   std::vector<std::string> ids;
                                   for (const auto& s : d.series) ids.push_back(s.series_id);
                                   return ids;
                               })
        .def("values", [](const TimeSeriesDataset& d, const std::string& id) { return FloatMatrix(d.find(id).values); })
        .def("labels", [](const TimeSeriesDataset& d, const std::string& id) { return d.find(id).labels; })
        .def("split", [](const TimeSeriesDataset& d, const std::string& id) {
            d.find(id);
            return std::string(to_string(d.split_assignment.at(id)));
        })
        .def("save", [](const TimeSeriesDataset& d, const std::filesystem::path& dir) { save_dataset(d, dir); })
        .def("__len__", [](const TimeSeriesDataset& d) { return d.series.size(); });

    m.def("load_dataset", &load_dataset, py::arg("path"));
    m.def(
        "generate_synthetic",
        [](int num_series, Eigen::Index series_length, int num_classes, double noise_std, std::uint64_t seed) {
            SyntheticConfig c;
            c.num_series = num_series;
            c.series_length = series_length;
            c.num_classes = num_classes;
            c.noise_std = noise_std;
            c.seed = seed;
            return generate_synthetic(c);
        },
        py::arg("num_series") = 10, py::arg("series_length") = 3000, py::arg("num_classes") = 3,
        py::arg("noise_std") = 0.1, py::arg("seed") = 0);

    m.def(
        "extended_mask",
        [](Eigen::Index T, Eigen::Index n, std::uint64_t seed) {
            Rng rng(seed);
            return from_mask(make_extended_mask(T, n, rng));
        },
        py::arg("T"), py::arg("n"), py::arg("seed") = 0);
    m.def(
        "transient_mask",
        [](Eigen::Index T, Eigen::Index n, std::uint64_t seed) {
            Rng rng(seed);
            return from_mask(make_transient_mask(T, n, rng));
        },
        py::arg("T"), py::arg("n"), py::arg("seed") = 0);

    py::class_<RebarModel>(m, "RebarModel")
        .def_property_readonly("receptive_field", [](const RebarModel& r) { return r.config().receptive_field(); })
        .def_property_readonly("in_channels", [](const RebarModel& r) { return r.config().in_channels; })
        .def(
            "reconstruct",
            [](const RebarModel& r, const Matrix& query, const BoolArray& mask, const Matrix& key) {
                return rebar_forward(apply_mask(query, to_mask(mask)), key, r).values;
            },
            py::arg("query"), py::arg("mask"), py::arg("key"))
        .def(
            "attention",
            [](const RebarModel& r, const Matrix& query, const BoolArray& mask, const Matrix& key) {
                return rebar_forward(apply_mask(query, to_mask(mask)), key, r).attention;
            },
            py::arg("query"), py::arg("mask"), py::arg("key"), "Attention rows per head, [T_q x T_k] each.")
        .def(
            "distance",
            [](const RebarModel& r, const Matrix& anchor, const Matrix& cand, const BoolArray& mask) {
                return rebar_distance(anchor, cand, to_mask(mask), r);
            },
            py::arg("anchor"), py::arg("candidate"), py::arg("mask"))
        .def("save", [](const RebarModel& r, const std::filesystem::path& p) { save_rebar_model(r, p); });
    m.def(
        "random_rebar_model",
        [](Eigen::Index in_channels, std::uint64_t seed) {
            RebarConfig c;
            c.in_channels = in_channels;
            c.seed = seed;
            return RebarModel(c);
        },
        py::arg("in_channels") = 1, py::arg("seed") = 0);
    m.def("load_rebar_model", py::overload_cast<const std::filesystem::path&>(&load_rebar_model), py::arg("path"));

    py::class_<Encoder>(m, "Encoder")
        .def_property_readonly("embed_dim", [](const Encoder& e) { return e.config().embed_dim; })
        .def("encode", [](const Encoder& e, const Matrix& x) { return Matrix(encode(x, e)); }, py::arg("x"))
        .def("save", [](const Encoder& e, const std::filesystem::path& p) { save_encoder(e, p); });
    m.def(
        "random_encoder",
        [](Eigen::Index in_channels, std::uint64_t seed) {
            EncoderConfig c;
            c.in_channels = in_channels;
            c.seed = seed;
            return Encoder(c);
        },
        py::arg("in_channels") = 1, py::arg("seed") = 0);
    m.def("load_encoder", &load_encoder, py::arg("path"));

    m.def("sliding_mse_distance", py::overload_cast<const Matrix&, const Matrix&>(&sliding_mse_distance),
          py::arg("anchor"), py::arg("candidate"));
    m.def("receptive_field", py::overload_cast<int, int>(&receptive_field), py::arg("kernel"), py::arg("layers"));
    m.def("adjusted_rand_index", [](std::vector<int> a, std::vector<int> b) { return adjusted_rand_index(a, b); });
    m.def("normalized_mutual_info",
          [](std::vector<int> a, std::vector<int> b) { return normalized_mutual_info(a, b); });
    m.def("auroc", [](std::vector<double> s, std::vector<int> y) { return auroc(s, y); }, py::arg("scores"),
          py::arg("positive"));
    m.def("average_precision", [](std::vector<double> s, std::vector<int> y) { return average_precision(s, y); },
          py::arg("scores"), py::arg("positive"));
    m.def("kmeans", &kmeans_cluster, py::arg("x"), py::arg("k"), py::arg("seed") = 0);

    m.def(
        "canonical_config",
        [](const std::string& ini_text, const std::vector<std::string>& overrides) {
            return parse_run_config(ini_text, overrides).to_ini();
        },
        py::arg("ini_text"), py::arg("overrides") = std::vector<std::string>{},
        "Parse, override and validate a run config; returns the canonical INI text.");
}

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "fracsynth/analysis.hpp"
#include "fracsynth/blockshape.hpp"
#include "fracsynth/cli.hpp"
#include "fracsynth/error.hpp"
#include "fracsynth/imaging.hpp"
#include "fracsynth/metrics.hpp"
#include "fracsynth/traces.hpp"

namespace py = pybind11;
using namespace fracsynth;

namespace {

using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

std::vector<std::uint8_t> flat(const U8& a) { return {a.data(), a.data() + a.size()}; }

py::dict metric_dict(const MetricReport& m) {
    py::dict d;
    d["iou"] = m.iou;
    d["dice"] = m.dice;
    d["precision"] = m.precision;
    d["recall"] = m.recall;
    return d;
}

ConfusionCounts confusion_of(const U8& pred, const U8& label) {
    if (pred.ndim() != label.ndim()) throw ValidationError("prediction and label ranks differ");
    for (py::ssize_t i = 0; i < pred.ndim(); ++i)
        if (pred.shape(i) != label.shape(i)) throw ValidationError("prediction and label shapes differ");
    return confusion(flat(pred), flat(label));
}

U8 to_array(const Image& img) {
    std::vector<py::ssize_t> shape{img.height, img.width};
    if (img.channels > 1) shape.push_back(img.channels);
    U8 out(shape);
    std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of fracsynth: metrics, topology, block shapes, PNG I/O and the CLI.";
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<GenerationError>(m, "GenerationError", PyExc_RuntimeError);

    m.def("version", &version_string);

    m.def(
        "thickness",
        [](double length, double t_min, double t_max) {
            TraceStyle s;
            s.t_min = t_min;
            s.t_max = t_max;
            s.validate();
            return thickness(length, s);
        },
        py::arg("length"), py::arg("t_min") = 0.01, py::arg("t_max") = 0.10);

    m.def(
        "confusion",
        [](const U8& pred, const U8& label) {
            auto c = confusion_of(pred, label);
            py::dict d;
            d["tp"] = c.tp;
            d["fp"] = c.fp;
            d["fn"] = c.fn;
            d["tn"] = c.tn;
            return d;
        },
        py::arg("pred"), py::arg("label"), "Pixel counts with joint (0) as the positive class.");
    m.def(
        "metrics", [](const U8& pred, const U8& label) { return metric_dict(metric_report(confusion_of(pred, label))); },
        py::arg("pred"), py::arg("label"));
    m.def(
        "binarize",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> prob, double threshold) {
            if (prob.ndim() != 2) throw ValidationError("probability map must be 2-D");
            std::span<const double> v(prob.data(), static_cast<std::size_t>(prob.size()));
            return to_array(binarize(v, static_cast<int>(prob.shape(1)), static_cast<int>(prob.shape(0)), threshold));
        },
        py::arg("prob"), py::arg("threshold") = 0.5);

    m.def(
        "topology",
        [](const std::vector<std::vector<std::array<double, 2>>>& lines) {
            std::vector<Polyline2> ls;
            for (const auto& l : lines) {
                Polyline2 p;
                for (const auto& q : l) p.push_back({q[0], q[1]});
                ls.push_back(std::move(p));
            }
            auto s = topology_summary(classify_nodes(ls));
            py::dict d;
            d["n_i"] = s.n_i;
            d["n_x"] = s.n_x;
            d["n_y"] = s.n_y;
            d["n_lines"] = s.n_lines;
            d["c_l"] = s.c_l;
            return d;
        },
        py::arg("lines"), "I/X/Y census of 2-D polylines.");

    m.def(
        "sample_blocks",
        [](std::size_t n, std::uint64_t seed) {
            auto pop = sample_parallelepipeds(n, SamplingRanges{}, seed);
            py::array_t<double> out({static_cast<py::ssize_t>(pop.size()), py::ssize_t(6)});
            auto r = out.mutable_unchecked<2>();
            for (std::size_t i = 0; i < pop.size(); ++i) {
                const auto& p = pop[i];
                double row[6] = {p.edges[0], p.edges[1], p.edges[2], p.alpha12, p.alpha13, p.alpha23};
                for (int k = 0; k < 6; ++k) r(i, k) = row[k];
            }
            return out;
        },
        py::arg("n"), py::arg("seed"), "Rows of (a1, a2, a3, alpha12, alpha13, alpha23).");
    m.def(
        "classify_block",
        [](std::array<double, 3> edges, std::array<double, 3> angles) {
            Parallelepiped p;
            std::sort(edges.begin(), edges.end());
            p.edges = edges;
            p.alpha12 = angles[0], p.alpha13 = angles[1], p.alpha23 = angles[2];
            p.validate();
            auto c = classify(p);
            return py::make_tuple(to_string(c.palmstrom), c.singh);
        },
        py::arg("edges"), py::arg("angles") = std::array<double, 3>{90, 90, 90});

    m.def("read_png", [](const std::string& path) { return to_array(read_png(path)); }, py::arg("path"));
    m.def(
        "write_png",
        [](const std::string& path, const U8& a) {
            if (a.ndim() != 2 && !(a.ndim() == 3 && a.shape(2) == 3))
                throw ValidationError("expected an HxW or HxWx3 uint8 array");
            Image img{static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), a.ndim() == 2 ? 1 : 3, flat(a)};
            write_png(path, img);
        },
        py::arg("path"), py::arg("array"));

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = run_cli(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a fracsynth subcommand in-process; returns (exit_code, stdout, stderr).");
}

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pinchlab/divisor.hpp"
#include "pinchlab/factor.hpp"

namespace py = pybind11;
using namespace pinchlab;

PYBIND11_MODULE(_core, m) {
    m.doc() = "numerical laboratory for conic metrics on the 2-sphere";

    py::register_exception<pinch_error>(m, "PinchError");

    py::class_<Vec2>(m, "Vec2")
        .def(py::init<double, double>())
        .def_readwrite("x", &Vec2::x)
        .def_readwrite("y", &Vec2::y)
        .def("__repr__", [](const Vec2& v) {
            return "Vec2(" + std::to_string(v.x) + ", " + std::to_string(v.y) + ")";
        });

    py::enum_<Criticality>(m, "Criticality")
        .value("subcritical", Criticality::subcritical)
        .value("critical", Criticality::critical)
        .value("supercritical", Criticality::supercritical);

    py::class_<Classification>(m, "Classification")
        .def_readonly("kind", &Classification::kind)
        .def_readonly("total", &Classification::total)
        .def_readonly("beta1", &Classification::beta1)
        .def_readonly("alpha", &Classification::alpha)
        .def_readonly("chi", &Classification::chi)
        .def_readonly("note", &Classification::note)
        .def("__repr__",
             [](const Classification& c) { return "<Classification " + to_string(c.kind) + ">"; });

    py::class_<ConicPoint>(m, "ConicPoint")
        .def(py::init<Vec2, double>())
        .def_static("at_infinity", &ConicPoint::at_infinity)
        .def_readonly("position", &ConicPoint::position)
        .def_readonly("infinite", &ConicPoint::infinite)
        .def_readonly("beta", &ConicPoint::beta);

    py::class_<ConicDivisor>(m, "ConicDivisor")
        .def(py::init<>())
        .def(py::init<std::vector<ConicPoint>>())
        .def_static("from_weights", &ConicDivisor::from_weights)
        .def_static("from_json", &ConicDivisor::from_json)
        .def("points", &ConicDivisor::points)
        .def("total", &ConicDivisor::total)
        .def("beta1", &ConicDivisor::beta1)
        .def("alpha", &ConicDivisor::alpha)
        .def("chi", &ConicDivisor::chi)
        .def("classify", &ConicDivisor::classify)
        .def("rho0", &ConicDivisor::rho0)
        .def("to_json", &ConicDivisor::to_json);

    py::class_<ConformalFactor, std::shared_ptr<ConformalFactor>>(m, "ConformalFactor")
        .def("value", [](const ConformalFactor& f, double x, double y) {
            return f.value({x, y});
        })
        .def("curvature", [](const ConformalFactor& f, double x, double y) {
            return f.curvature({x, y});
        })
        .def("laplacian", [](const ConformalFactor& f, double x, double y) {
            return f.laplacian({x, y});
        })
        .def("divisor", &ConformalFactor::divisor);

    py::class_<RadialBranch, ConformalFactor, std::shared_ptr<RadialBranch>>(m, "RadialBranch")
        .def(py::init<double, double, double>(), py::arg("a"), py::arg("lambda_"), py::arg("c"))
        .def("value_r", &RadialBranch::value_r)
        .def("slope_r", &RadialBranch::slope_r)
        .def("area_to", &RadialBranch::area_to)
        .def("mass_to", &RadialBranch::mass_to)
        .def("area_total", &RadialBranch::area_total)
        .def("mass_total", &RadialBranch::mass_total);

    py::enum_<GluedFootball::Normalization>(m, "Normalization")
        .value("unit_inner", GluedFootball::Normalization::unit_inner)
        .value("boundary_zero", GluedFootball::Normalization::boundary_zero);

    py::class_<GluedFootball, ConformalFactor, std::shared_ptr<GluedFootball>>(m, "GluedFootball")
        .def(py::init<double, double, GluedFootball::Normalization>(), py::arg("alpha"),
             py::arg("beta"), py::arg("norm") = GluedFootball::Normalization::unit_inner)
        .def("value_r", &GluedFootball::value_r)
        .def("curvature_r", &GluedFootball::curvature_r)
        .def("area_to", &GluedFootball::area_to)
        .def("mass_to", &GluedFootball::mass_to)
        .def("area_total", &GluedFootball::area_total)
        .def("mass_total", &GluedFootball::mass_total);

    py::class_<Rescaled, ConformalFactor, std::shared_ptr<Rescaled>>(m, "Rescaled")
        .def(py::init([](std::shared_ptr<const ConformalFactor> base, double lambda, double kx,
                         double ky, double c) {
                 return std::make_shared<Rescaled>(std::move(base), lambda, Vec2{kx, ky}, c);
             }),
             py::arg("base"), py::arg("lambda_"), py::arg("kx") = 0.0, py::arg("ky") = 0.0,
             py::arg("c") = 0.0);

    py::class_<PinchingReport>(m, "PinchingReport")
        .def_readonly("k_min", &PinchingReport::k_min)
        .def_readonly("k_max", &PinchingReport::k_max)
        .def_readonly("rho", &PinchingReport::rho)
        .def_readonly("rho0", &PinchingReport::rho0)
        .def_readonly("classification", &PinchingReport::classification)
        .def_readonly("n_samples", &PinchingReport::n_samples);

    m.def(
        "measure_pinching",
        [](const ConformalFactor& f) { return measure_pinching(f); },
        "sample curvature extremes of a conformal factor");
}

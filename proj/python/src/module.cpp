// Python bindings for the main qdspin operations.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qdspin/config.hpp"
#include "qdspin/errors.hpp"
#include "qdspin/experiments.hpp"
#include "qdspin/fitting.hpp"
#include "qdspin/polarization.hpp"

namespace py = pybind11;
using namespace qdspin;

namespace {

py::array_t<double> array(const std::vector<double>& v) { return py::array_t<double>(v.size(), v.data()); }

DataSeries series_of(const std::vector<double>& x, const std::vector<double>& y,
                     const std::optional<std::vector<double>>& sigma) {
    DataSeries d{x, y, sigma};
    d.validate();
    return d;
}

py::dict fit_dict(const FitResult& f) {
    py::dict params, errors;
    for (std::size_t i = 0; i < f.names.size(); ++i) {
        params[py::str(f.names[i])] = f.params[i];
        errors[py::str(f.names[i])] = f.uncertainties[i];
    }
    py::dict out;
    out["model"] = f.model;
    out["params"] = params;
    out["uncertainties"] = errors;
    out["chi2_reduced"] = f.chi2_reduced;
    out["converged"] = f.converged;
    out["iterations"] = f.iterations;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Quantum-dot spin Ramsey simulation core";

    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<FitError>(m, "FitError", PyExc_RuntimeError);

    py::enum_<Geometry>(m, "Geometry").value("Voigt", Geometry::Voigt).value("Faraday", Geometry::Faraday);
    py::enum_<SimulationMode>(m, "SimulationMode")
        .value("Effective", SimulationMode::Effective)
        .value("FullIntegration", SimulationMode::FullIntegration);

    py::class_<GFactors>(m, "GFactors")
        .def(py::init<>())
        .def_readwrite("electron_inplane", &GFactors::electron_inplane)
        .def_readwrite("hole_inplane", &GFactors::hole_inplane)
        .def_readwrite("electron_longitudinal", &GFactors::electron_longitudinal)
        .def_readwrite("hole_longitudinal", &GFactors::hole_longitudinal);

    py::class_<SystemParams>(m, "SystemParams")
        .def(py::init<>())
        .def_readwrite("geometry", &SystemParams::geometry)
        .def_readwrite("field_tesla", &SystemParams::field_tesla)
        .def_readwrite("g", &SystemParams::g)
        .def_readwrite("impurity", &SystemParams::impurity)
        .def_readwrite("gamma_decay", &SystemParams::gamma_decay)
        .def_readwrite("kappa_spinflip", &SystemParams::kappa_spinflip)
        .def_readwrite("gamma_line", &SystemParams::gamma_line)
        .def_readwrite("resonant_rabi", &SystemParams::resonant_rabi)
        .def_readwrite("repump", &SystemParams::repump)
        .def_property_readonly("larmor_ghz",
                               [](const SystemParams& s) { return s.diagram().ground_splitting / (2.0 * kPi); });

    py::class_<RotationLaserSideEffects>(m, "SideEffects")
        .def(py::init<>())
        .def_static("none", &RotationLaserSideEffects::none)
        .def_readwrite("trion_excitation_prob", &RotationLaserSideEffects::trion_excitation_prob)
        .def_readwrite("added_spinflip_rate", &RotationLaserSideEffects::added_spinflip_rate)
        .def_readwrite("repump_broadening_factor", &RotationLaserSideEffects::repump_broadening_factor);

    py::class_<RamseyConfig>(m, "RamseyConfig")
        .def(py::init<>())
        .def_readwrite("system", &RamseyConfig::system)
        .def_readwrite("delays", &RamseyConfig::delays)
        .def_readwrite("mode", &RamseyConfig::mode)
        .def_readwrite("ensemble_size", &RamseyConfig::ensemble_size)
        .def_readwrite("side_effects", &RamseyConfig::side_effects)
        .def_readwrite("threads", &RamseyConfig::threads)
        .def("set_overhauser",
             [](RamseyConfig& c, double t2star_ns, std::uint64_t seed) {
                 c.overhauser = OverhauserModel::from_t2star(t2star_ns, seed);
             },
             py::arg("t2star_ns"), py::arg("seed"));

    py::class_<RamseyTrace>(m, "RamseyTrace")
        .def_property_readonly("delays", [](const RamseyTrace& t) { return array(t.delays); })
        .def_property_readonly("signal", [](const RamseyTrace& t) { return array(t.signal); })
        .def_property_readonly("stderr", [](const RamseyTrace& t) { return array(t.signal_stderr); })
        .def_readonly("init_fidelity", &RamseyTrace::init_fidelity)
        .def_readonly("ensemble_size", &RamseyTrace::ensemble_size);

    m.def("linear_grid", &linear_grid, py::arg("start"), py::arg("stop"), py::arg("n"));
    m.def("run_ramsey", &run_ramsey, py::arg("config"), py::call_guard<py::gil_scoped_release>());
    m.def("with_noise", &with_noise, py::arg("trace"), py::arg("fraction"), py::arg("seed"));
    m.def("ramsey_contrast", py::overload_cast<const RamseyTrace&>(&ramsey_contrast), py::arg("trace"));

    m.def("pumping_fidelity",
          [](const SystemParams& s, const RotationLaserSideEffects& side, double duration) {
              return pumping_fidelity(s, side, duration);
          },
          py::arg("system"), py::arg("side_effects"),
          py::arg("duration") = std::numeric_limits<double>::infinity());
    m.def("simulate_pumping",
          [](const SystemParams& s, const RotationLaserSideEffects& side, double duration) {
              const PumpingResult r = simulate_pumping(s, side, duration);
              py::dict out;
              out["init_fidelity"] = r.init_fidelity;
              out["collected_counts"] = r.collected_counts;
              out["pumping_rate"] = r.pumping_rate;
              out["rabi_resolved"] = r.rabi_resolved;
              return out;
          },
          py::arg("system"), py::arg("side_effects"), py::arg("duration") = 50.0);
    m.def("rotation_fidelity",
          [](const SystemParams& s, const RotationLaserSideEffects& side) {
              return rotation_fidelity(default_rotation_pulse(), s.diagram(), side);
          },
          py::arg("system"), py::arg("side_effects"), "Fidelity of the default pi/2 pulse (effective mode).");

    m.def("fit_gauss_cosine",
          [](const std::vector<double>& x, const std::vector<double>& y,
             const std::optional<std::vector<double>>& sigma, bool background_subtract) {
              GaussCosineFitOptions o;
              o.background_subtract = background_subtract;
              return fit_dict(fit_gauss_cosine(series_of(x, y, sigma), o));
          },
          py::arg("x"), py::arg("y"), py::arg("sigma") = py::none(), py::arg("background_subtract") = false);
    m.def("extract_g_factor", &extract_g_factor, py::arg("larmor_ghz"), py::arg("field_tesla"));

    m.def("contrast_scan",
          [](double impurity, double step_deg, double input_angle_deg, bool default_transfer, unsigned threads) {
              const ContrastMap map =
                  contrast_scan(JonesVector::linear(input_angle_deg * kPi / 180.0),
                                default_transfer ? default_transfer_matrix() : JonesMatrix::identity(), impurity,
                                step_deg * kPi / 180.0, PlateOrder::HalfThenQuarter, threads);
              py::array_t<double> ratio({map.hwp_steps, map.qwp_steps});
              auto r = ratio.mutable_unchecked<2>();
              for (std::size_t i = 0; i < map.hwp_steps; ++i)
                  for (std::size_t j = 0; j < map.qwp_steps; ++j) r(i, j) = map.entries[i * map.qwp_steps + j].ratio;
              py::dict out;
              out["ratio"] = ratio;
              for (auto [key, target] : {std::pair{"optimum_plus", ContrastTarget::MaximizeRplus},
                                         std::pair{"optimum_minus", ContrastTarget::MaximizeRminus}}) {
                  const OptimalSetting o = optimal_setting(map, target);
                  out[key] = py::make_tuple(o.setting.hwp_angle * 180.0 / kPi, o.setting.qwp_angle * 180.0 / kPi,
                                            o.ratio);
              }
              return out;
          },
          py::arg("impurity"), py::arg("step_deg") = 1.0, py::arg("input_angle_deg") = 0.0,
          py::arg("default_transfer") = true, py::arg("threads") = 0u);

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def_static("parse", &ExperimentConfig::parse, py::arg("text"), py::arg("source") = "<config>")
        .def_static("load", &ExperimentConfig::load, py::arg("path"))
        .def("set", &ExperimentConfig::set, py::arg("key"), py::arg("value"), py::arg("line") = 0)
        .def("serialize", &ExperimentConfig::serialize)
        .def("ramsey", &ExperimentConfig::ramsey)
        .def("system", &ExperimentConfig::system);
}

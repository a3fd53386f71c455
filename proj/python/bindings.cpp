#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "coldscatter/angular.hpp"
#include "coldscatter/errors.hpp"
#include "coldscatter/microdipole.hpp"
#include "coldscatter/protocols.hpp"
#include "coldscatter/scenario.hpp"

namespace py = pybind11;
using namespace coldscatter;

namespace {

angular::HalfInt hi(double v) { return angular::HalfInt::from_double(v); }

py::dict table_dict(const scenario::Table& t) {
    py::list rows;
    for (const auto& r : t.rows) {
        py::dict d;
        d["sweep"] = r.sweep;
        d["value"] = r.value;
        d["stat_err"] = r.err;
        if (t.has_order) d["order"] = r.order;
        if (t.has_channel) d["channel"] = r.channel;
        rows.append(d);
    }
    py::dict d;
    d["name"] = t.name;
    d["sweep_var"] = t.sweep_var;
    d["sweep_unit"] = t.sweep_unit;
    d["value_name"] = t.value_name;
    d["value_unit"] = t.value_unit;
    d["rows"] = rows;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "coldscatter engine bindings";
    m.attr("__version__") = scenario::version_string();

    static py::exception<ConfigError> config_exc(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            std::string msg;
            for (const auto& i : e.issues())
                msg += (msg.empty() ? "" : "\n") + std::to_string(i.line) + ":" + std::to_string(i.column) + ": " +
                       i.message;
            py::set_error(config_exc, msg.c_str());
        }
    });

    m.def("scenario_names", &scenario::scenario_names);

    m.def(
        "parse_config",
        [](const std::string& text) {
            const auto cfg = scenario::parse_text(text);
            py::dict d;
            d["scenario"] = cfg.scenario;
            d["canonical"] = cfg.canonical();
            d["config_hash"] = cfg.hash_hex(*scenario::schema_for(cfg.scenario));
            return d;
        },
        py::arg("text"), "Validate configuration text; returns scenario, canonical text and hash.");

    m.def(
        "run",
        [](const std::string& text, int workers) {
            const auto cfg = scenario::parse_text(text);
            scenario::ResultRecord r;
            {
                py::gil_scoped_release nogil;
                r = scenario::run_scenario(cfg, scenario::RunContext{workers, {}});
            }
            py::dict d;
            d["scenario"] = r.scenario;
            d["complete"] = r.complete;
            d["error"] = r.error;
            d["config_hash"] = r.config_hash;
            d["seed"] = r.seed;
            d["summary"] = r.summary;
            d["warnings"] = r.warnings;
            py::dict tables;
            for (const auto& t : r.tables) tables[py::str(t.name)] = table_dict(t);
            d["tables"] = tables;
            d["json"] = scenario::json_text(r);
            return d;
        },
        py::arg("text"), py::arg("workers") = 0,
        "Run a scenario from configuration text. workers = 0 uses run.workers.");

    m.def(
        "clebsch_gordan",
        [](double j1, double m1, double j2, double m2, double J, double M) {
            return angular::clebsch_gordan(hi(j1), hi(m1), hi(j2), hi(m2), hi(J), hi(M));
        },
        py::arg("j1"), py::arg("m1"), py::arg("j2"), py::arg("m2"), py::arg("J"), py::arg("M"));
    m.def("wigner_3j", [](double j1, double j2, double j3, double m1, double m2, double m3) {
        return angular::wigner_3j(hi(j1), hi(j2), hi(j3), hi(m1), hi(m2), hi(m3));
    });
    m.def("wigner_6j", [](double j1, double j2, double j3, double j4, double j5, double j6) {
        return angular::wigner_6j(hi(j1), hi(j2), hi(j3), hi(j4), hi(j5), hi(j6));
    });

    m.def(
        "single_atom_cross_section",
        [](double detuning) {
            microdipole::Configuration c;
            c.positions = {Eigen::Vector3d::Zero()};
            c.detuning = detuning;
            return microdipole::total_cross_section(c, Eigen::Vector3d::UnitZ(), Eigen::Vector3cd(1, 0, 0));
        },
        py::arg("detuning") = 0.0, "Total cross section of one vector dipole, in lambdabar^2.");
    m.def(
        "self_consistent_epsilon",
        [](double n, double detuning) { return microdipole::self_consistent_epsilon(n, detuning).eps; },
        py::arg("n_scaled"), py::arg("detuning"));
    m.def(
        "slab_transmittance",
        [](std::complex<double> eps, double L) { return microdipole::slab_transmission(eps, L).transmittance; },
        py::arg("eps"), py::arg("length"));

    m.def("schmidt_coefficient", &protocols::schmidt_coefficient, py::arg("n_bar"), py::arg("m"), py::arg("n"));
    m.def(
        "truncated_norm",
        [](double n_bar, int n_max) {
            protocols::PsiMinusState s{n_bar, n_max};
            s.validate();
            return s.truncated_norm();
        },
        py::arg("n_bar"), py::arg("n_max"));
}

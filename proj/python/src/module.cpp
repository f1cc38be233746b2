#include "ssm/autonomous.hpp"
#include "ssm/models.hpp"
#include "ssm/rom_analysis.hpp"
#include "ssm/run.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using nlohmann::json;

namespace {

json to_json(const py::handle& obj) {
    const std::string text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
    return json::parse(text);
}

py::object from_json(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

ssm::Stage parse_stage(const std::string& s) {
    if (s == "model") return ssm::Stage::Model;
    if (s == "eig") return ssm::Stage::Eig;
    if (s == "compute") return ssm::Stage::Compute;
    if (s == "analysis") return ssm::Stage::Analysis;
    throw ssm::ValidationError("stop: must be model, eig, compute or analysis");
}

ssm::RunConfig config_from(const py::dict& cfg) {
    json j = ssm::RunConfig{};
    j.merge_patch(to_json(cfg));
    ssm::RunConfig c;
    ssm::from_json(j, c);
    return c;
}

py::dict stats_dict(const ssm::EvaluationStats& s) {
    json j;
    j["complex_even"] = s.complex_even;
    j["complex_odd"] = s.complex_odd;
    j["real_even"] = s.real_even;
    j["real_odd"] = s.real_odd;
    j["blackbox_calls"] = s.blackbox_calls;
    return from_json(j);
}

py::list coefficient_list(const ssm::CoefficientTable& t) {
    py::list out;
    for (int k = 0; k <= t.max_order(); ++k)
        for (const auto& [m, c] : t.degree(k)) out.append(py::make_tuple(py::tuple(py::cast(m.exponents())), c.W, c.R));
    return out;
}

// SSM of a built-in model with its spectral data and reduced coordinates.
struct Ssm {
    ssm::LoadedModel model;
    std::shared_ptr<ssm::FirstOrderSystem> sys;
    ssm::MasterSubspace sub;
    ssm::SsmResult result;
    ssm::EvaluationStats stats;
};

Ssm compute(const std::string& model, const ssm::ParamMap& params, int order, int dim, const std::string& select,
            double rho_rel) {
    Ssm s;
    ssm::ModelSource src;
    src.builtin = model;
    src.params = params;
    s.model = ssm::load_model(src);
    s.sys = std::make_shared<ssm::FirstOrderSystem>(s.model.model);
    const ssm::ModeSelection sel = ssm::ModeSelection::parse(select);
    s.sub = ssm::solve_master_subspace(*s.sys, sel.kind == ssm::ModeSelection::Kind::Nearest ? dim : 0, 0.0, sel);
    ssm::SsmOptions o;
    o.max_order = order;
    o.resonance.rho_rel = rho_rel;
    {
        py::gil_scoped_release release;
        s.result = ssm::compute_ssm(*s.sys, s.sub, o, {}, &s.stats);
    }
    return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Spectral submanifolds of mechanical models with black-box nonlinearities";

    auto validation = py::register_exception<ssm::ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<ssm::NumericalError>(m, "NumericalError", PyExc_RuntimeError);
    (void)validation;

    m.def("list_models", [] {
        py::list out;
        for (const auto& i : ssm::list_builtin_models()) {
            py::dict d;
            d["id"] = i.id;
            d["summary"] = i.summary;
            d["defaults"] = i.defaults;
            out.append(d);
        }
        return out;
    });

    m.def("default_config", [] { return from_json(ssm::RunConfig{}); }, "Run configuration with all defaults.");

    m.def(
        "validate_config", [](const py::dict& cfg) { ssm::validate(config_from(cfg)); },
        "Raises ValidationError naming the offending field.");

    m.def(
        "run",
        [](const py::dict& cfg, const std::string& stop) {
            const ssm::RunConfig c = config_from(cfg);
            const ssm::Stage st = parse_stage(stop);
            ssm::RunReport r;
            {
                py::gil_scoped_release release;
                r = ssm::run(c, st);
            }
            py::dict out;
            out["summary"] = from_json(r.summary);
            out["files"] = r.files;
            out["manifest"] = r.manifest;
            py::dict timings;
            for (const auto& t : r.timings) timings[py::str(t.stage)] = t.seconds;
            out["timings"] = timings;
            out["stats"] = stats_dict(r.stats);
            return out;
        },
        py::arg("config"), py::arg("stop") = "analysis",
        "Runs the pipeline on a (partial) config dict and writes outputs to config['output_dir'].");

    py::class_<ssm::CoefficientTable>(m, "Table")
        .def_static("load", &ssm::CoefficientTable::load, py::arg("path"))
        .def("save", &ssm::CoefficientTable::save, py::arg("path"))
        .def_property_readonly("dim", &ssm::CoefficientTable::dim)
        .def_property_readonly("state_dim", &ssm::CoefficientTable::state_dim)
        .def_property_readonly("max_order", &ssm::CoefficientTable::max_order)
        .def("__len__", &ssm::CoefficientTable::size)
        .def("coefficients", &coefficient_list, "List of (exponents, W, R).")
        .def(
            "W", [](const ssm::CoefficientTable& t, const ssm::CVec& p) { return t.eval_W(p); }, py::arg("p"))
        .def(
            "R", [](const ssm::CoefficientTable& t, const ssm::CVec& p) { return t.eval_R(p); }, py::arg("p"));

    py::class_<Ssm>(m, "Ssm")
        .def_property_readonly("table", [](const Ssm& s) { return s.result.table; })
        .def_property_readonly("eigenvalues", [](const Ssm& s) { return s.sub.lambdas; })
        .def_property_readonly("name", [](const Ssm& s) { return s.model.name; })
        .def_property_readonly("stats", [](const Ssm& s) { return stats_dict(s.stats); })
        .def_property_readonly("resonances",
                               [](const Ssm& s) {
                                   py::list out;
                                   for (const auto& r : s.result.resonances)
                                       out.append(py::make_tuple(py::tuple(py::cast(r.m.exponents())), r.modes));
                                   return out;
                               })
        .def(
            "residual",
            [](const Ssm& s, const ssm::CVec& p) { return ssm::invariance_residual(*s.sys, s.result.table, p).norm(); },
            py::arg("p"), "Norm of the invariance residual at reduced coordinates p.")
        .def(
            "point",
            [](const Ssm&, const ssm::Vec& rho, const ssm::Vec& theta) { return ssm::conjugate_pair_point(rho, theta); },
            py::arg("rho"), py::arg("theta"), "Reduced coordinates in conjugate-pair form.")
        .def(
            "backbone",
            [](const Ssm& s, const std::vector<double>& rho) {
                const ssm::Vec obs = ssm::observable_on_state(s.model.observable, s.sys->dim());
                py::list out;
                for (const auto& b : ssm::backbone_curve(s.result.table, s.sub, rho, obs)) {
                    py::dict d;
                    d["rho"] = b.rho;
                    d["frequency"] = b.frequency;
                    d["damping"] = b.damping;
                    d["amplitude"] = b.amplitude;
                    out.append(d);
                }
                return out;
            },
            py::arg("rho"))
        .def("chart_radius", [](const Ssm& s) { return ssm::chart_radius(s.result.table); });

    m.def("compute", &compute, py::arg("model") = "duffing", py::arg("params") = ssm::ParamMap{},
          py::arg("order") = 5, py::arg("dim") = 2, py::arg("select") = "nearest", py::arg("rho_rel") = 0.05,
          "Computes the SSM of a built-in model with the non-intrusive composer.");

    m.def(
        "verify",
        [](const std::string& model, const ssm::ParamMap& params, int order, int dim, const std::string& select) {
            ssm::ModelSource src;
            src.builtin = model;
            src.params = params;
            const ssm::LoadedModel lm = ssm::load_model(src);
            if (!lm.tensors) throw ssm::ValidationError("model '" + model + "' has no explicit tensors");
            ssm::FirstOrderSystem sys(lm.model);
            const ssm::ModeSelection sel = ssm::ModeSelection::parse(select);
            const auto sub =
                ssm::solve_master_subspace(sys, sel.kind == ssm::ModeSelection::Kind::Nearest ? dim : 0, 0.0, sel);
            ssm::SsmOptions o;
            o.max_order = order;
            return ssm::verify_against_tensors(sys, lm.tensors, sub, o).worst;
        },
        py::arg("model"), py::arg("params") = ssm::ParamMap{}, py::arg("order") = 5, py::arg("dim") = 2,
        py::arg("select") = "nearest", "Worst relative difference between non-intrusive and tensor coefficients.");
}

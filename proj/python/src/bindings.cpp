#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "procspace/batteries.hpp"
#include "procspace/errors.hpp"
#include "procspace/gauge.hpp"
#include "procspace/metrics.hpp"
#include "procspace/runner.hpp"
#include "procspace/scenario.hpp"

namespace py = pybind11;
using namespace procspace;

namespace {

Config make_config(const std::string& path, const std::string& text, const std::vector<std::string>& overrides) {
    if (path.empty() == text.empty()) throw ParameterError("give exactly one of path or text");
    Config cfg = path.empty() ? Config::parse(text) : Config::load(path);
    for (const auto& o : overrides) cfg.set_override(o);
    cfg.validate();
    return cfg;
}

// Rows of `points` are atoms with uniform weights.
EmpiricalMeasure measure(const Mat& points) {
    std::vector<Vec> atoms;
    for (Eigen::Index i = 0; i < points.rows(); ++i) atoms.push_back(points.row(i).transpose());
    return EmpiricalMeasure::uniform(std::move(atoms));
}

py::dict check_dict(const CheckResult& c) {
    py::dict d;
    d["name"] = c.name;
    d["value"] = c.value;
    d["reference"] = c.reference;
    d["gap"] = c.gap;
    d["tolerance"] = c.tolerance;
    d["pass"] = c.pass;
    d["detail"] = c.detail;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    // Later registrations are tried first, so the base goes in before the subclasses.
    const auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<RangeError>(m, "RangeError", base.ptr());
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
    py::register_exception<ContractError>(m, "ContractError", base.ptr());
    py::register_exception<UnsupportedError>(m, "UnsupportedError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());

    m.def("scenario_keys", &scenario_keys);
    m.def("check_names", &check_names);

    m.def(
        "run",
        [](const std::string& path, const std::string& text, const std::vector<std::string>& overrides,
           const std::string& out_dir) {
            const RunReport r = run_scenario(make_config(path, text, overrides), out_dir);
            py::dict d;
            d["scenario"] = r.scenario;
            d["seed"] = r.seed;
            d["pass"] = r.pass();
            d["seconds"] = r.seconds;
            py::list checks;
            for (const auto& c : r.checks) checks.append(check_dict(c));
            d["checks"] = checks;
            return d;
        },
        py::arg("path") = "", py::arg("text") = "", py::arg("overrides") = std::vector<std::string>{},
        py::arg("out_dir") = "");

    m.def(
        "sweep",
        [](const std::string& path, const std::string& parameter, const std::vector<std::string>& ladder,
           const std::vector<std::string>& overrides, const std::string& out_dir) {
            const SweepReport r = procspace::sweep(make_config(path, "", overrides), parameter, ladder, out_dir);
            py::dict d;
            d["parameter"] = r.parameter;
            d["metric"] = r.metric;
            d["slope"] = r.slope ? py::cast(*r.slope) : py::none();
            d["warnings"] = r.warnings;
            py::list levels;
            for (const auto& l : r.levels) {
                py::dict e;
                e["level"] = l.level;
                e["x"] = l.x;
                e["value"] = l.value;
                e["std_error"] = l.std_error;
                e["error"] = l.error;
                levels.append(e);
            }
            d["levels"] = levels;
            return d;
        },
        py::arg("path"), py::arg("parameter"), py::arg("ladder"),
        py::arg("overrides") = std::vector<std::string>{}, py::arg("out_dir") = "");

    // values: d x (node + 1) path on the grid.
    m.def(
        "upsilon", [](const Mat& values, int p) { return upsilon(PathView(values, int(values.cols()) - 1), p); },
        py::arg("values"), py::arg("p"));

    m.def(
        "wasserstein", [](const Mat& a, const Mat& b, double p) { return wasserstein_p(measure(a), measure(b), p); },
        py::arg("a"), py::arg("b"), py::arg("p") = 2.0);

    m.def(
        "fourier_wasserstein",
        [](const Mat& a, const Mat& b, double k) {
            const FourierDistance f = procspace::fourier_wasserstein(measure(a), measure(b), k);
            return py::make_tuple(f.value, f.truncation_bound);
        },
        py::arg("a"), py::arg("b"), py::arg("k") = 2.0);

    m.def(
        "gauge_battery",
        [](int paths, int derivative_points, std::uint64_t seed) {
            GaugeBatteryOptions o;
            o.paths = paths;
            o.derivative_points = derivative_points;
            o.seed = seed;
            const GaugeBatteryReport r = procspace::gauge_battery(o);
            py::dict d;
            d["pass"] = r.pass();
            d["sandwich_violations"] = r.sandwich_violations;
            d["triangle_violations"] = r.triangle_violations;
            d["derivative_mismatches"] = r.derivative_mismatches;
            d["max_fd_error"] = r.max_fd_error;
            return d;
        },
        py::arg("paths") = 1000, py::arg("derivative_points") = 100, py::arg("seed") = 1);
}

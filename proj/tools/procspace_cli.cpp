#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "procspace/batteries.hpp"
#include "procspace/parallel.hpp"
#include "procspace/runner.hpp"
#include "procspace/scenario.hpp"

using namespace procspace;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::string out;
};

Config load_config(const Common& c) {
    Config cfg = Config::load(c.config);
    for (const auto& o : c.overrides) cfg.set_override(o);
    if (c.seed) cfg.set("seed", std::to_string(*c.seed));
    cfg.validate();
    return cfg;
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    std::ofstream f(std::filesystem::path(dir) / name);
    if (!f) throw Error("cannot write " + name + " in " + dir);
    return f;
}

const char* verdict(bool pass) { return pass ? "PASS" : "FAIL"; }

int cmd_run(const Common& c) {
    const Config cfg = load_config(c);
    const RunReport rep = run_scenario(cfg, c.out);
    std::cout << "scenario " << rep.scenario << " seed " << rep.seed << '\n';
    std::cout << std::setprecision(10);
    for (const auto& r : rep.checks) {
        std::cout << "  " << std::left << std::setw(15) << r.name << verdict(r.pass) << "  value " << r.value
                  << "  reference " << r.reference << "  gap " << r.gap << "  tol " << r.tolerance;
        if (!r.detail.empty()) std::cout << "  [" << r.detail << ']';
        std::cout << '\n';
    }
    std::cout << std::setprecision(3) << "time " << rep.seconds << " s\n";
    return rep.pass() ? 0 : 1;
}

int cmd_sweep(const Common& c, std::string parameter, std::vector<std::string> ladder) {
    const Config cfg = load_config(c);
    if (parameter.empty()) parameter = cfg.get("sweep.parameter", "");
    if (ladder.empty()) ladder = cfg.get_list("sweep.ladder");
    if (parameter.empty()) throw ParameterError("no sweep parameter (use --parameter or sweep.parameter)");
    const SweepReport rep = sweep(cfg, parameter, ladder, c.out);
    rep.write_csv(std::cout);
    for (const auto& w : rep.warnings) std::cout << "warning: " << w << '\n';
    return 0;
}

int cmd_gauge(const Common& c, GaugeBatteryOptions o) {
    if (c.seed) o.seed = *c.seed;
    const GaugeBatteryReport rep = gauge_battery(o);
    rep.write_csv(std::cout);
    std::cout << std::setprecision(3) << "time " << rep.seconds << " s\n" << verdict(rep.pass()) << '\n';
    if (!c.out.empty()) {
        auto f = open_out(c.out, "gauge.csv");
        rep.write_csv(f);
    }
    return rep.pass() ? 0 : 1;
}

int cmd_viscosity(const Common& c, ViscosityBatteryOptions o) {
    if (c.seed) o.seed = *c.seed;
    const ViscosityBattery rep = viscosity_battery(o);
    std::cout << std::setprecision(6) << "classical residual of the heat solution " << rep.heat_classical << '\n';
    rep.write_csv(std::cout);
    std::cout << verdict(rep.pass()) << '\n';
    if (!c.out.empty()) {
        auto f = open_out(c.out, "viscosity.csv");
        rep.write_csv(f);
        std::vector<Series> series;
        for (const auto& vc : rep.cases) {
            Series s{vc.scenario + " " + vc.side, {}, {}};
            for (const auto& r : vc.report.rows) {
                s.x.push_back(r.delta);
                s.y.push_back(r.residual);
            }
            series.push_back(std::move(s));
        }
        write_svg_plot((std::filesystem::path(c.out) / "viscosity.svg").string(), "residual against delta", series,
                       false, false, "delta", "residual");
    }
    return rep.pass() ? 0 : 1;
}

int cmd_variational(const Common& c, VariationalBatteryOptions o) {
    if (c.seed) o.seed = *c.seed;
    const VariationalBatteryReport rep = variational_battery(o);
    std::cout << "instances " << rep.instances << "\nfailures " << rep.failures << "\nlongest sequence "
              << rep.max_sequence << '\n';
    for (const auto& m : rep.messages) std::cout << "  " << m << '\n';
    std::cout << std::setprecision(3) << "time " << rep.seconds << " s\n" << verdict(rep.pass()) << '\n';
    if (!c.out.empty()) {
        auto f = open_out(c.out, "variational.csv");
        f << "instances,failures,longest_sequence\n" << rep.instances << ',' << rep.failures << ',' << rep.max_sequence << '\n';
    }
    return rep.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"procspace: control problems on process space"};
    app.require_subcommand(1);
    Common common;
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default PROCSPACE_THREADS or 1)");

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* opt = sub->add_option("--config", common.config, "scenario config file");
        if (needs_config) opt->required()->check(CLI::ExistingFile);
        sub->add_option("--override", common.overrides, "key=value (repeatable)");
        sub->add_option("--seed", common.seed, "overrides the config seed");
        sub->add_option("--threads", threads, "worker threads");
        sub->add_option("--out", common.out, "output directory for CSV and SVG files");
    };

    auto* run = app.add_subcommand("run", "run the checks listed in a scenario config");
    add_common(run, true);

    std::string parameter;
    std::vector<std::string> ladder;
    auto* sw = app.add_subcommand("sweep", "refinement ladder with a fitted log-log slope");
    add_common(sw, true);
    sw->add_option("--parameter", parameter, "steps, particles.idio, particles.common, control.grid, delta or fd.dx");
    sw->add_option("--ladder", ladder, "levels, comma separated")->delimiter(',');

    auto* list = app.add_subcommand("list-scenarios", "print the scenario registry");

    GaugeBatteryOptions gopt;
    auto* gauge = app.add_subcommand("gauge-test", "random-path battery for the gauge function");
    add_common(gauge, false);
    gauge->add_option("--paths", gopt.paths, "paths for the sandwich and triangle bounds");
    gauge->add_option("--points", gopt.derivative_points, "points for the derivative checks");

    ViscosityBatteryOptions vopt;
    auto* visc = app.add_subcommand("viscosity-check", "sub/supersolution residuals of shifted exact solutions");
    add_common(visc, false);
    visc->add_option("--shift", vopt.shift, "c in U -+ c (T - t)");
    visc->add_option("--ladder", vopt.ladder, "delta ladder in grid steps")->delimiter(',');
    visc->add_option("--particles", vopt.particles, "particles");

    VariationalBatteryOptions bopt;
    auto* var = app.add_subcommand("variational-battery", "Borwein-Preiss on random finite instances");
    add_common(var, false);
    var->add_option("--instances", bopt.instances, "random instances");
    var->add_option("--max-points", bopt.max_points, "largest instance size");

    CLI11_PARSE(app, argc, argv);
    if (threads > 0) set_thread_count(threads);
    try {
        if (*run) return cmd_run(common);
        if (*sw) return cmd_sweep(common, parameter, ladder);
        if (*list) {
            for (const auto& k : scenario_keys()) std::cout << std::left << std::setw(22) << k << scenario_description(k) << '\n';
            return 0;
        }
        if (*gauge) return cmd_gauge(common, gopt);
        if (*visc) {
            if (!common.config.empty()) {
                const Config cfg = load_config(common);
                vopt.shift = cfg.get_double("viscosity.shift", vopt.shift);
                if (cfg.has("viscosity.ladder")) {
                    vopt.ladder.clear();
                    for (const auto& s : cfg.get_list("viscosity.ladder")) vopt.ladder.push_back(std::stoi(s));
                }
            }
            return cmd_viscosity(common, vopt);
        }
        if (*var) return cmd_variational(common, bopt);
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
